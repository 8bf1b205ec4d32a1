#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowmatch/coupling.hpp"
#include "flowmatch/field_net.hpp"
#include "flowmatch/flow_ode.hpp"
#include "flowmatch/metrics.hpp"
#include "flowmatch/toydata.hpp"

namespace flowmatch {

enum class TiltSide { kSourceF, kTargetG };

const char* to_string(TiltSide side);

// Unnormalized tilt density at each eval point:
//   value(z) = (1/n_mc) sum_m exp(-c(z, s_m) / epsilon)
// with s_m drawn from the opposite marginal.
struct TiltDensityEstimate {
  TiltSide side = TiltSide::kSourceF;
  SampleBatch eval_points;
  Vector<double> values;
  Vector<double> log_values;
  Index n_mc = 0;
  double epsilon = 0.0;
  double rel_variance = 0.0;
};

// Population Var / Mean^2.
double relative_variance(const Vector<double>& values);

// Computed in log space; the result depends only on differences of log_values.
double relative_variance_from_logs(const Vector<double>& log_values);

// Throws kUnderflow when every value is below 1e-300.
TiltDensityEstimate estimate_tilt(TiltSide side, const SampleBatch& eval_points,
                                  const SampleBatch& opposite_samples, const CostSpec& cost);
TiltDensityEstimate estimate_tilt(TiltSide side, const SampleBatch& eval_points,
                                  const DistributionSpec& opposite, const CostSpec& cost,
                                  Index n_mc, Rng& rng);

struct EpsilonScan {
  std::vector<double> kappa_grid;
  int d = 0;
  std::vector<double> rv_f;
  std::vector<double> rv_g;
  std::vector<double> curve;     // rv_f + rv_g
  std::vector<double> smoothed;  // 3-point running median
  std::size_t selected_index = 0;
  double selected_kappa = 0.0;
  double selected_epsilon = 0.0;
  bool no_elbow = false;  // fell back to the largest kappa
  Index n_eval = 0;
  Index n_mc = 0;
  std::uint64_t seed = 0;
};

inline constexpr double kElbowThreshold = 0.15;

// 3-point running median; the endpoints are kept as they are.
std::vector<double> running_median3(const std::vector<double>& curve);

// First k >= 1 whose relative decrease (s[k-1] - s[k]) / s[k-1] of the
// smoothed curve is below rho; k - 1 when s[k-1] is already zero. Sets
// *no_elbow and returns the last index when no such k exists.
std::size_t elbow_index(const std::vector<double>& curve, double rho = kElbowThreshold,
                        bool* no_elbow = nullptr);

// log-spaced grid from lo to hi (inclusive).
std::vector<double> log_grid(double lo, double hi, int count);

// Default scan grid for the toy benchmarks.
std::vector<double> default_kappa_grid();

struct EpsilonScanOptions {
  std::vector<double> kappa_grid = default_kappa_grid();
  CostKind cost = CostKind::kEuclidean;
  Index n_eval = 512;
  Index n_mc = 2000;
  double rho = kElbowThreshold;
};

// epsilon = kappa sqrt(d). The same eval points and Monte Carlo samples are
// reused at every kappa so the curve is smooth in kappa.
EpsilonScan select_epsilon(const DistributionSpec& source, const DistributionSpec& target,
                           const EpsilonScanOptions& options = {}, std::uint64_t seed = 0);

void write_scan_csv(std::ostream& out, const EpsilonScan& scan);

// Pushes n source samples through the field and returns W2^2 to n fresh
// target samples.
template <typename Field>
double verify_pushforward(const Field& field, const DistributionSpec& source,
                          const DistributionSpec& target, Index n, const SolverConfig& solver,
                          std::uint64_t seed = 0) {
  Rng rs = make_stream(seed, StreamPurpose::kEval, 2, 0);
  Rng rt = make_stream(seed, StreamPurpose::kEval, 2, 1);
  const SampleBatch x0 = sample(source, n, rs);
  SampleBatch pushed;
  pushed.points = integrate(field, x0.points, solver).final_state;
  return w2_squared_empirical(pushed, sample(target, n, rt), seed);
}

struct Prop3Options {
  DistributionSpec source;
  DistributionSpec target;
  CostSpec cost{CostKind::kEuclidean, 1.0};
  std::vector<Index> batch_sizes{8, 32, 128, 512};
  // Repetitions at the largest batch size; smaller batches get proportionally
  // more (reps * n_max / n) so every row has a comparable error bar.
  int reps = 8;
  Index n_limit = 1000000;
  SinkhornOptions sinkhorn;
  bool with_exact_plan = true;

  Prop3Options();
};

struct Prop3Row {
  Index n = 0;
  int reps = 0;
  double mean_loss = 0.0;
  double loss_stderr = 0.0;
  double mean_ratio = 0.0;
  double stderr_ratio = 0.0;
  double exact_mean_ratio = 0.0;  // same batches, exact assignment plan
  double exact_stderr_ratio = 0.0;
};

struct Prop3Table {
  // E[w L] / E[w] over independent (x, y, t): the W-CFM loss divided by Z_eps.
  double limit = 0.0;
  double limit_stderr = 0.0;
  double z_eps = 0.0;
  double z_stderr = 0.0;
  bool ratio_defined = true;  // false when the limit is ~0 (degenerate set-up)
  std::vector<Prop3Row> rows;
};

struct WeightedLossEstimate {
  double ratio = 0.0;  // sum w L / sum w
  double ratio_stderr = 0.0;
  double z = 0.0;      // mean w
  double z_stderr = 0.0;
};

// Streaming estimate over n independent (x, y, t) triples, in chunks.
WeightedLossEstimate weighted_loss_limit(const VectorFieldNet& net,
                                         const DistributionSpec& source,
                                         const DistributionSpec& target, const CostSpec& cost,
                                         Index n, Rng& rng);

Prop3Table verify_prop3(const VectorFieldNet& net, const Prop3Options& options = {},
                        std::uint64_t seed = 0);

void write_prop3_csv(std::ostream& out, const Prop3Table& table);

}  // namespace flowmatch
