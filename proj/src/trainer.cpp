#include "flowmatch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "flowmatch/csv.hpp"

namespace flowmatch {

namespace {

constexpr std::uint64_t kSourceSub = 0;
constexpr std::uint64_t kTargetSub = 1;

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kIcfm: return "icfm";
    case Strategy::kWcfm: return "wcfm";
    case Strategy::kOtcfmExact: return "otcfm_exact";
    case Strategy::kOtcfmSinkhorn: return "otcfm_sinkhorn";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  for (auto s : {Strategy::kIcfm, Strategy::kWcfm, Strategy::kOtcfmExact,
                 Strategy::kOtcfmSinkhorn}) {
    if (name == to_string(s)) return s;
  }
  if (name == "otcfm") return Strategy::kOtcfmExact;
  throw_error(ErrorKind::kConfig, "unknown strategy '" + name + "'");
}

void validate(const TrainConfig& c) {
  const auto fail = [](const std::string& m) { throw_error(ErrorKind::kConfig, m); };
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.iterations < 1) fail("iterations must be >= 1");
  if (!(c.lr > 0.0)) fail("lr must be > 0");
  if (c.strategy == Strategy::kWcfm && !(c.cost.epsilon > 0.0))
    fail("wcfm requires epsilon > 0");
  if (c.strategy == Strategy::kOtcfmSinkhorn && !(c.ot_cost.epsilon > 0.0))
    fail("otcfm_sinkhorn requires ot_epsilon > 0");
  if (c.strategy == Strategy::kOtcfmExact && c.batch_size > kMaxAssignmentSize)
    fail("otcfm_exact batch_size exceeds the assignment solver limit");
  if (c.hidden_dims.empty()) fail("hidden_dims must not be empty");
  for (int h : c.hidden_dims)
    if (h < 1) fail("hidden widths must be >= 1");
  if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (c.log_every < 1) fail("log_every must be >= 1");
  validate(c.source);
  validate(c.target);
  if (dimension(c.source) != dimension(c.target)) fail("source and target dimensions differ");
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv["strategy"] = to_string(c.strategy);
  kv["cost"] = to_string(c.cost.kind);
  kv["eps"] = format_double(c.cost.epsilon);
  kv["ot_cost"] = to_string(c.ot_cost.kind);
  kv["ot_eps"] = format_double(c.ot_cost.epsilon);
  kv["sinkhorn_tol"] = format_double(c.sinkhorn.tol);
  kv["sinkhorn_max_iters"] = std::to_string(c.sinkhorn.max_iters);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["iters"] = std::to_string(c.iterations);
  kv["lr"] = format_double(c.lr);
  kv["seed"] = std::to_string(c.seed);
  kv["hidden_dims"] = join_ints(c.hidden_dims);
  kv["zero_final_layer"] = c.zero_final_layer ? "true" : "false";
  kv["normalize_weights"] = c.normalize_weights ? "true" : "false";
  kv["checkpoint_every"] = std::to_string(c.checkpoint_every);
  kv["log_every"] = std::to_string(c.log_every);
  distribution_to_kv(c.source, "source", kv);
  distribution_to_kv(c.target, "target", kv);
  return kv;
}

TrainConfig train_config_from_kv(const KeyValues& kv, const TrainConfig& fallback) {
  TrainConfig c = fallback;
  if (kv.count("strategy")) c.strategy = strategy_from_string(kv.at("strategy"));
  if (kv.count("cost")) c.cost.kind = cost_kind_from_string(kv.at("cost"));
  c.cost.epsilon = kv_double(kv, "eps", c.cost.epsilon);
  if (kv.count("ot_cost")) c.ot_cost.kind = cost_kind_from_string(kv.at("ot_cost"));
  c.ot_cost.epsilon = kv_double(kv, "ot_eps", c.ot_cost.epsilon);
  c.sinkhorn.tol = kv_double(kv, "sinkhorn_tol", c.sinkhorn.tol);
  c.sinkhorn.max_iters = kv_long(kv, "sinkhorn_max_iters", c.sinkhorn.max_iters);
  c.batch_size = kv_long(kv, "batch_size", c.batch_size);
  c.iterations = kv_long(kv, "iters", c.iterations);
  c.lr = kv_double(kv, "lr", c.lr);
  c.seed = static_cast<std::uint64_t>(kv_long(kv, "seed", static_cast<long>(c.seed)));
  if (kv.count("hidden_dims")) c.hidden_dims = parse_int_list(kv.at("hidden_dims"));
  c.zero_final_layer = kv_bool(kv, "zero_final_layer", c.zero_final_layer);
  c.normalize_weights = kv_bool(kv, "normalize_weights", c.normalize_weights);
  c.checkpoint_every = kv_long(kv, "checkpoint_every", c.checkpoint_every);
  c.log_every = kv_long(kv, "log_every", c.log_every);
  c.source = distribution_from_kv(kv, "source", c.source);
  c.target = distribution_from_kv(kv, "target", c.target);
  validate(c);
  return c;
}

RegressionBatch make_regression_batch(const WeightedPairBatch& pairs, bool normalize_weights) {
  RegressionBatch r;
  r.t = pairs.t;
  r.x = (pairs.x.array().colwise() * (1.0 - pairs.t.array())).matrix() +
        (pairs.y.array().colwise() * pairs.t.array()).matrix();
  r.target = pairs.y - pairs.x;
  r.weight = pairs.w;
  if (normalize_weights) {
    const double mean = r.weight.mean();
    if (mean > 0.0) r.weight /= mean;
  }
  return r;
}

WeightedPairBatch draw_training_pairs(const TrainConfig& config, long step,
                                      MinibatchOtStats* stats) {
  const auto s = static_cast<std::uint64_t>(step);
  Rng source_rng = make_stream(config.seed, StreamPurpose::kData, s, kSourceSub);
  Rng target_rng = make_stream(config.seed, StreamPurpose::kData, s, kTargetSub);
  Rng pair_rng = make_stream(config.seed, StreamPurpose::kPairingTime, s);
  const SampleBatch xs = sample(config.source, config.batch_size, source_rng, config.seed);
  const SampleBatch ys = sample(config.target, config.batch_size, target_rng, config.seed);
  switch (config.strategy) {
    case Strategy::kIcfm:
      return pair_independent(xs, ys, pair_rng);
    case Strategy::kWcfm:
      return pair_gibbs(xs, ys, config.cost, pair_rng);
    case Strategy::kOtcfmExact:
      return pair_minibatch_ot(xs, ys, OtMode::kExact, config.ot_cost, pair_rng,
                               config.sinkhorn, stats);
    case Strategy::kOtcfmSinkhorn:
      return pair_minibatch_ot(xs, ys, OtMode::kSinkhorn, config.ot_cost, pair_rng,
                               config.sinkhorn, stats);
  }
  throw_error(ErrorKind::kConfig, "unknown strategy");
}

void write_log_csv(std::ostream& out, const TrainingLog& log) {
  out << "step,loss,wallclock_ms\n";
  for (const LogRow& r : log.rows)
    out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.wallclock_ms)
        << '\n';
}

Checkpoint make_checkpoint(const TrainConfig& config, const TrainResult& state) {
  Checkpoint ckpt;
  ckpt.net = state.net;
  ckpt.adam = state.adam;
  ckpt.rng_seed = config.seed;
  ckpt.step = state.steps_completed;
  ckpt.training_config = to_key_values(config);
  return ckpt;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  validate(config);
  const int d = dimension(config.source);
  TrainResult state;
  if (options.resume_from) {
    state.net = options.resume_from->net;
    state.adam = options.resume_from->adam;
    state.steps_completed = options.resume_from->step;
    require(state.net.state_dim() == d, ErrorKind::kVersionMismatch,
            "train: checkpoint state dimension does not match the config");
  } else {
    Rng init_rng = make_stream(config.seed, StreamPurpose::kInit);
    state.net = VectorFieldNet::initialized(d, config.hidden_dims, init_rng,
                                            config.zero_final_layer);
    state.adam = AdamState::for_net(state.net, config.lr);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const long end = options.stop_after >= 0
                       ? std::min(config.iterations, options.stop_after)
                       : config.iterations;
  double window_sum = 0.0;
  long window_count = 0;

  for (long step = state.steps_completed; step < end; ++step) {
    MinibatchOtStats stats;
    const WeightedPairBatch pairs = draw_training_pairs(config, step, &stats);
    state.log.sinkhorn_iterations_total += stats.sinkhorn_iterations;
    state.log.max_sinkhorn_violation =
        std::max(state.log.max_sinkhorn_violation, stats.sinkhorn_violation);

    const RegressionBatch batch = make_regression_batch(pairs, config.normalize_weights);
    LossAndGrad lg;
    try {
      lg = loss_and_grad(state.net, batch);
    } catch (const NumericalError& e) {
      const std::string where =
          state.last_checkpoint ? state.last_checkpoint->string() : std::string("none");
      throw NumericalError("train: step " + std::to_string(step) + ": " + e.what() +
                               "; last good checkpoint: " + where,
                           e.index());
    }
    if (!std::isfinite(lg.loss)) {
      const std::string where =
          state.last_checkpoint ? state.last_checkpoint->string() : std::string("none");
      throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                           "; last good checkpoint: " + where);
    }
    adam_step(state.net, lg.grads, state.adam);
    state.steps_completed = step + 1;

    window_sum += lg.loss;
    ++window_count;
    if (state.steps_completed % config.log_every == 0 || state.steps_completed == end) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      const double mean = window_sum / static_cast<double>(window_count);
      state.log.rows.push_back({state.steps_completed, mean, ms});
      if (options.on_log) options.on_log(state.steps_completed, mean);
      window_sum = 0.0;
      window_count = 0;
    }
    if (options.checkpoint_dir && config.checkpoint_every > 0 &&
        (state.steps_completed % config.checkpoint_every == 0 ||
         state.steps_completed == config.iterations)) {
      const auto path = *options.checkpoint_dir /
                        ("step_" + std::to_string(state.steps_completed) + ".json");
      save_checkpoint(path, make_checkpoint(config, state));
      state.last_checkpoint = path;
    }
  }
  return state;
}

double batch_plan_cfm_loss(const VectorFieldNet& net, const SampleBatch& xs,
                           const SampleBatch& ys, const Vector<double>& ts,
                           const Points<double>& plan) {
  const Index n = xs.n();
  const Index m = ys.n();
  require(ts.size() == n && plan.rows() == n && plan.cols() == m, ErrorKind::kContract,
          "batch_plan_cfm_loss: shape mismatch");
  // One row block per source point keeps memory at O(m d).
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    RegressionBatch rb;
    rb.t = Vector<double>::Constant(m, ts(i));
    rb.x = (ys.points * ts(i)).rowwise() + (1.0 - ts(i)) * xs.points.row(i);
    rb.target = ys.points.rowwise() - xs.points.row(i);
    rb.weight = plan.row(i).transpose() * static_cast<double>(m);
    total += loss_only(net, rb);  // (1/m) sum_j m pi_ij L_ij
  }
  return total;
}

double batch_eot_cfm_loss(const VectorFieldNet& net, const SampleBatch& xs,
                          const SampleBatch& ys, const Vector<double>& ts, const CostSpec& cost,
                          const SinkhornOptions& options) {
  require(xs.n() == ys.n(), ErrorKind::kContract, "batch_eot_cfm_loss: batch sizes differ");
  const CouplingPlan plan = sinkhorn(xs, ys, cost, options);
  return batch_plan_cfm_loss(net, xs, ys, ts, plan.weights);
}

}  // namespace flowmatch
