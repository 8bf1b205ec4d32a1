#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowmatch/checkpoint.hpp"
#include "flowmatch/config.hpp"
#include "flowmatch/coupling.hpp"
#include "flowmatch/field_net.hpp"
#include "flowmatch/toydata.hpp"

namespace flowmatch {

enum class Strategy { kIcfm, kWcfm, kOtcfmExact, kOtcfmSinkhorn };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct TrainConfig {
  Strategy strategy = Strategy::kIcfm;
  CostSpec cost{CostKind::kEuclidean, 1.0};             // W-CFM Gibbs weights
  CostSpec ot_cost{CostKind::kSquaredEuclidean, 0.1};  // OT-CFM plans
  SinkhornOptions sinkhorn;
  long batch_size = 48;
  long iterations = 60000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  DistributionSpec source = presets::circular_mog_source();
  DistributionSpec target = presets::five_gaussians_target();
  std::vector<int> hidden_dims{64, 64};
  bool zero_final_layer = false;
  // Divide W-CFM weights by their batch mean (changes only the step scale).
  bool normalize_weights = false;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  long log_every = 100;
};

// Throws a config error on invalid values.
void validate(const TrainConfig& config);
KeyValues to_key_values(const TrainConfig& config);
TrainConfig train_config_from_kv(const KeyValues& kv, const TrainConfig& fallback = {});

// Linear path: x_t = (1 - t) x + t y, target velocity y - x.
template <typename DerivedA, typename DerivedB>
std::pair<Vector<typename DerivedA::Scalar>, Vector<typename DerivedA::Scalar>> interpolate(
    const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& y, double t) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::kContract, "interpolate: t must lie in [0, 1]");
  Vector<typename DerivedA::Scalar> xt = ((1.0 - t) * x + t * y).transpose().reshaped();
  Vector<typename DerivedA::Scalar> v = (y - x).transpose().reshaped();
  return {std::move(xt), std::move(v)};
}

// Interpolates every pair; optional mean-normalization of the weights.
RegressionBatch make_regression_batch(const WeightedPairBatch& pairs,
                                      bool normalize_weights = false);

// Draws one training batch for `step` from the per-step random streams.
WeightedPairBatch draw_training_pairs(const TrainConfig& config, long step,
                                      MinibatchOtStats* stats = nullptr);

struct LogRow {
  long step = 0;
  double loss = 0.0;  // mean loss over the logging window
  double wallclock_ms = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  long sinkhorn_iterations_total = 0;
  double max_sinkhorn_violation = 0.0;
};

void write_log_csv(std::ostream& out, const TrainingLog& log);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  const Checkpoint* resume_from = nullptr;
  // Stop after this many completed iterations (< config.iterations), leaving
  // a resumable state. Negative: run to the end.
  long stop_after = -1;
  std::function<void(long step, double loss)> on_log;
};

struct TrainResult {
  VectorFieldNet net;
  AdamState adam;
  TrainingLog log;
  long steps_completed = 0;
  std::optional<std::filesystem::path> last_checkpoint;
};

// Full training loop. Single-threaded and deterministic per seed. A non-finite
// loss aborts with NumericalError naming the last checkpoint written.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

Checkpoint make_checkpoint(const TrainConfig& config, const TrainResult& state);

// sum_ij pi_ij |v(t_i, (1 - t_i) x_i + t_i y_j) - (y_j - x_i)|^2 with pi the
// entropic plan between the two empirical measures (total mass one).
double batch_eot_cfm_loss(const VectorFieldNet& net, const SampleBatch& xs,
                          const SampleBatch& ys, const Vector<double>& ts, const CostSpec& cost,
                          const SinkhornOptions& options = {});

// Same double sum for an arbitrary plan (e.g. an assignment plan).
double batch_plan_cfm_loss(const VectorFieldNet& net, const SampleBatch& xs,
                           const SampleBatch& ys, const Vector<double>& ts,
                           const Points<double>& plan);

}  // namespace flowmatch
