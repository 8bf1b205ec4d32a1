#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "flowmatch/benchmark.hpp"
#include "flowmatch/checkpoint.hpp"
#include "flowmatch/config.hpp"
#include "flowmatch/csv.hpp"
#include "flowmatch/diagnostics.hpp"
#include "flowmatch/metrics.hpp"
#include "flowmatch/trainer.hpp"
#include "run_dir.hpp"

#ifndef FLOWMATCH_VERSION
#define FLOWMATCH_VERSION "dev"
#endif

namespace flowmatch::cli {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

KeyValues load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return read_key_values(path);
  } catch (const Error& e) {
    throw ExitError(kExitBadConfig, e.what());
  }
}

Checkpoint load_checkpoint_or_exit(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    throw ExitError(kExitCheckpoint, e.what());
  }
}

TrainConfig config_of(const Checkpoint& ckpt) {
  try {
    return train_config_from_kv(ckpt.training_config);
  } catch (const Error& e) {
    throw ExitError(kExitCheckpoint, std::string("checkpoint config: ") + e.what());
  }
}

BenchmarkSpec benchmark_or_exit(const std::string& name) {
  if (!is_known_benchmark(name)) {
    std::string known;
    for (const std::string& k : known_benchmarks()) known += (known.empty() ? "" : ", ") + k;
    throw ExitError(kExitUnknownBenchmark,
                    "unknown benchmark '" + name + "' (known: " + known + ")");
  }
  return benchmark_spec(name);
}

std::string default_run_id(const std::string& command, const KeyValues& kv) {
  return command + "-" + sha256_hex(format_key_values(kv)).substr(0, 12);
}

RunDir open_run(const Common& common, const std::string& command, const KeyValues& kv) {
  return RunDir(common.out, common.run_id.empty() ? default_run_id(command, kv) : common.run_id);
}

Json kv_json(const KeyValues& kv) {
  Json j = Json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

void finish(const RunDir& dir, const Common& common, const std::string& command,
            const KeyValues& kv, std::uint64_t seed, Clock::time_point t0) {
  Json m;
  m["run_id"] = dir.run_id();
  m["command"] = command;
  m["tool_version"] = FLOWMATCH_VERSION;
  m["seed"] = seed;
  m["deterministic"] = common.deterministic;
  m["wallclock_ms"] = common.deterministic ? 0.0 : elapsed_ms(t0);
  m["config"] = kv_json(kv);
  dir.finalize(std::move(m));
  std::cout << dir.path().string() << "\n";
}

std::string points_csv(const Points<double>& p) {
  std::ostringstream out;
  write_points_csv(out, p);
  return out.str();
}

std::string log_csv(TrainingLog log, bool deterministic) {
  if (deterministic)
    for (LogRow& r : log.rows) r.wallclock_ms = 0.0;
  std::ostringstream out;
  write_log_csv(out, log);
  return out.str();
}

void add_solver_kv(const SolverConfig& s, KeyValues& kv) {
  kv["solver"] = to_string(s.kind);
  kv["steps"] = std::to_string(s.steps);
  kv["rtol"] = format_double(s.dopri.rtol);
  kv["atol"] = format_double(s.dopri.atol);
}

Json solver_json(const SolverConfig& s) {
  return {{"kind", to_string(s.kind)},
          {"steps", s.steps},
          {"rtol", s.dopri.rtol},
          {"atol", s.dopri.atol}};
}

// "1-5", "1,3,7", "1-3,9"
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(part));
      } else {
        const std::uint64_t lo = std::stoull(part.substr(0, dash));
        const std::uint64_t hi = std::stoull(part.substr(dash + 1));
        require(lo <= hi, ErrorKind::kConfig, "bad seed range '" + part + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    }
  } catch (const std::logic_error&) {
    throw_error(ErrorKind::kConfig, "cannot parse seeds '" + text + "'");
  }
  require(!seeds.empty(), ErrorKind::kConfig, "no seeds given");
  return seeds;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string t;
  while (std::getline(ss, t, ','))
    if (!t.empty()) out.push_back(t);
  return out;
}

unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLOWMATCH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
}

std::string mean_pm_std(const MeanStd& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s.mean, s.std);
  return buf;
}

}  // namespace

SolverConfig SolverFlags::resolve() const {
  SolverConfig s;
  s.kind = solver_kind_from_string(solver);
  s.steps = steps;
  s.dopri.rtol = rtol;
  s.dopri.atol = atol;
  require(s.steps >= 1, ErrorKind::kConfig, "--steps must be >= 1");
  require(rtol > 0.0 && atol > 0.0, ErrorKind::kConfig, "--rtol/--atol must be > 0");
  return s;
}

int cmd_gen_data(const Common& common, const GenDataArgs& args) {
  const auto t0 = Clock::now();
  require(args.side == "source" || args.side == "target", ErrorKind::kConfig,
          "--side must be source or target");
  require(args.n >= 1, ErrorKind::kConfig, "--n must be >= 1");
  const BenchmarkSpec bench = benchmark_or_exit(args.name);
  const KeyValues file = load_config(common.config);
  const DistributionSpec spec =
      distribution_from_kv(file, args.side, args.side == "source" ? bench.source : bench.target);

  KeyValues kv;
  distribution_to_kv(spec, args.side, kv);
  kv["benchmark"] = args.name;
  kv["n"] = std::to_string(args.n);
  kv["seed"] = std::to_string(common.seed);
  RunDir dir = open_run(common, "gen-data", kv);
  dir.write_text("config", format_key_values(kv));
  const SampleBatch b = sample(spec, args.n, common.seed, args.side == "source" ? 0 : 1);
  dir.write_text("csv/samples.csv", points_csv(b.points));
  finish(dir, common, "gen-data", kv, common.seed, t0);
  return kExitOk;
}

int cmd_train(const Common& common, const TrainArgs& args) {
  const auto t0 = Clock::now();
  KeyValues kv = load_config(common.config);
  TrainConfig fallback;
  if (!args.benchmark.empty()) {
    const BenchmarkSpec bench = benchmark_or_exit(args.benchmark);
    fallback.source = bench.source;
    fallback.target = bench.target;
  }
  const auto set = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv[key] = v;
  };
  set("strategy", args.strategy);
  set("eps", args.eps);
  set("ot_eps", args.ot_eps);
  set("batch_size", args.batch_size);
  set("iters", args.iters);
  set("lr", args.lr);
  set("checkpoint_every", args.checkpoint_every);
  if (common.seed_given) kv["seed"] = std::to_string(common.seed);
  const TrainConfig config = train_config_from_kv(kv, fallback);

  std::optional<Checkpoint> resume;
  KeyValues resolved = to_key_values(config);
  if (!args.resume.empty()) {
    resume = load_checkpoint_or_exit(args.resume);
    KeyValues a = resume->training_config, b = resolved;
    for (const char* k : {"iters", "checkpoint_every", "log_every"}) {
      a.erase(k);
      b.erase(k);
    }
    if (a != b)
      throw ExitError(kExitCheckpoint,
                      "checkpoint " + args.resume + " was trained with a different config");
    if (resume->step > config.iterations)
      throw ExitError(kExitCheckpoint, "checkpoint is past the requested iteration count");
    resolved["resume_from_step"] = std::to_string(resume->step);
    resolved["resume_sha256"] = sha256_hex(read_file(args.resume));
  }

  RunDir dir = open_run(common, "train", resolved);
  dir.write_text("config", format_key_values(resolved));
  TrainOptions opt;
  opt.checkpoint_dir = dir.file("checkpoints");
  opt.resume_from = resume ? &*resume : nullptr;
  const long report_every = std::max(config.log_every, config.iterations / 20);
  opt.on_log = [&](long step, double loss) {
    if (step % report_every == 0 || step == config.iterations)
      std::cerr << "step " << step << "/" << config.iterations << "  loss " << loss << "\n";
  };
  const TrainResult result = train(config, opt);
  save_checkpoint(dir.file("checkpoints/final.json"), make_checkpoint(config, result));
  dir.write_text("csv/train_log.csv", log_csv(result.log, common.deterministic));
  Json report;
  report["strategy"] = to_string(config.strategy);
  report["steps_completed"] = result.steps_completed;
  report["final_loss"] = result.log.rows.empty() ? 0.0 : result.log.rows.back().loss;
  report["sinkhorn_iterations_total"] = result.log.sinkhorn_iterations_total;
  report["max_sinkhorn_violation"] = result.log.max_sinkhorn_violation;
  report["checkpoint"] = "checkpoints/final.json";
  report["wallclock_ms"] = common.deterministic ? 0.0 : elapsed_ms(t0);
  dir.write_json("reports/train.json", report);
  finish(dir, common, "train", resolved, config.seed, t0);
  return kExitOk;
}

int cmd_sample(const Common& common, const SampleArgs& args) {
  const auto t0 = Clock::now();
  require(args.n >= 1, ErrorKind::kConfig, "--n must be >= 1");
  require(args.trajectories >= 0 && args.trajectories <= args.n, ErrorKind::kConfig,
          "--trajectories must lie in [0, n]");
  const Checkpoint ckpt = load_checkpoint_or_exit(args.checkpoint);
  const TrainConfig config = config_of(ckpt);
  const SolverConfig solver = args.solver.resolve();
  const std::uint64_t seed = common.seed_given ? common.seed : config.seed;

  KeyValues kv;
  kv["checkpoint_sha256"] = sha256_hex(read_file(args.checkpoint));
  kv["n"] = std::to_string(args.n);
  kv["trajectories"] = std::to_string(args.trajectories);
  kv["seed"] = std::to_string(seed);
  add_solver_kv(solver, kv);
  RunDir dir = open_run(common, "sample", kv);
  dir.write_text("config", format_key_values(kv));

  Rng rng = make_stream(seed, StreamPurpose::kEval, 10);
  const SampleBatch x0 = sample(config.source, args.n, rng);
  const bool record = args.trajectories > 0;
  const Trajectory traj = integrate(ckpt.net, x0.points, solver, record);
  dir.write_text("csv/source.csv", points_csv(x0.points));
  dir.write_text("csv/samples.csv", points_csv(traj.final_state));
  if (record) {
    std::ostringstream out;
    const Index d = x0.d();
    std::vector<std::string> header{"sample", "step", "t"};
    for (Index j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
    write_csv_row(out, header);
    for (Index i = 0; i < args.trajectories; ++i)
      for (std::size_t k = 0; k < traj.states.size(); ++k) {
        std::vector<std::string> row{std::to_string(i), std::to_string(k),
                                     format_double(traj.times[k])};
        for (Index j = 0; j < d; ++j) row.push_back(format_double(traj.states[k](i, j)));
        write_csv_row(out, row);
      }
    dir.write_text("csv/trajectories.csv", out.str());
  }
  const Vector<double> energy = path_energy(traj);
  Json report;
  report["n"] = args.n;
  report["solver"] = solver_json(solver);
  report["nfe"] = traj.nfe;
  report["accepted_steps"] = traj.accepted;
  report["rejected_steps"] = traj.rejected;
  report["mean_path_energy"] = energy.mean();
  dir.write_json("reports/sample.json", report);
  finish(dir, common, "sample", kv, seed, t0);
  return kExitOk;
}

int cmd_eval(const Common& common, const EvalArgs& args) {
  const auto t0 = Clock::now();
  SampleBatch real = read_points_csv(args.real);
  SampleBatch fake = read_points_csv(args.fake);
  require(real.d() == fake.d(), ErrorKind::kConfig, "real and fake files differ in dimension");

  KeyValues kv;
  kv["real_sha256"] = sha256_hex(read_file(args.real));
  kv["fake_sha256"] = sha256_hex(read_file(args.fake));
  kv["k"] = std::to_string(args.k);
  kv["seed"] = std::to_string(common.seed);
  kv["kde_bandwidth"] = format_double(args.kde_bandwidth);
  kv["kde_cells"] = std::to_string(args.kde_cells);
  std::optional<Checkpoint> ckpt;
  SolverConfig solver;
  if (!args.checkpoint.empty()) {
    ckpt = load_checkpoint_or_exit(args.checkpoint);
    solver = args.solver.resolve();
    kv["checkpoint_sha256"] = sha256_hex(read_file(args.checkpoint));
    kv["npe_n"] = std::to_string(args.npe_n);
    add_solver_kv(solver, kv);
  }
  RunDir dir = open_run(common, "eval", kv);
  dir.write_text("config", format_key_values(kv));

  Json report;
  report["n_real"] = real.n();
  report["n_fake"] = fake.n();
  report["w2_squared"] = w2_squared_empirical(real, fake, common.seed);

  // PRDC keeps an n_real x n_fake distance matrix; cap both sides.
  const Index cap = kMaxAssignmentSize;
  Rng sub = make_stream(common.seed, StreamPurpose::kEval, 20);
  if (real.n() > cap) real.points = subsample_rows(real.points, cap, sub);
  if (fake.n() > cap) fake.points = subsample_rows(fake.points, cap, sub);
  const Prdc m = prdc(real, fake, args.k);
  report["prdc"] = {{"k", args.k},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"density", m.density},
                    {"coverage", m.coverage},
                    {"f1", m.f1}};

  if (args.kde_bandwidth > 0.0) {
    require(real.d() == 2, ErrorKind::kConfig, "KDE grids are 2D only");
    const double pad = 3.0 * args.kde_bandwidth;
    GridSpec g;
    g.x_min = std::min(real.points.col(0).minCoeff(), fake.points.col(0).minCoeff()) - pad;
    g.x_max = std::max(real.points.col(0).maxCoeff(), fake.points.col(0).maxCoeff()) + pad;
    g.y_min = std::min(real.points.col(1).minCoeff(), fake.points.col(1).minCoeff()) - pad;
    g.y_max = std::max(real.points.col(1).maxCoeff(), fake.points.col(1).maxCoeff()) + pad;
    g.nx = g.ny = args.kde_cells;
    for (const auto& [name, batch] : {std::pair{"real", &real}, std::pair{"fake", &fake}}) {
      std::ostringstream out;
      write_kde_csv(out, kde_grid(*batch, args.kde_bandwidth, g));
      dir.write_text(std::string("csv/kde_") + name + ".csv", out.str());
    }
  }

  if (ckpt) {
    const TrainConfig config = config_of(*ckpt);
    const ReferenceW2 ref = reference_w2(config.source, config.target, 2048, 3, 0);
    const NpeResult r =
        npe(ckpt->net, config.source, ref, NpeOptions{args.npe_n, solver, false}, common.seed);
    report["npe"] = {{"value", r.npe},
                     {"energy", r.energy},
                     {"energy_stderr", r.energy_stderr},
                     {"reference_w2_squared", ref.mean},
                     {"reference_stderr", ref.std_error},
                     {"n_mc", r.n_mc},
                     {"solver", solver_json(solver)}};
  }
  dir.write_json("reports/eval.json", report);
  finish(dir, common, "eval", kv, common.seed, t0);
  return kExitOk;
}

int cmd_diagnose_eps(const Common& common, const DiagnoseArgs& args) {
  const auto t0 = Clock::now();
  const BenchmarkSpec bench = benchmark_or_exit(args.name);
  const KeyValues file = load_config(common.config);
  const DistributionSpec source = distribution_from_kv(file, "source", bench.source);
  const DistributionSpec target = distribution_from_kv(file, "target", bench.target);

  EpsilonScanOptions opt;
  opt.cost = cost_kind_from_string(args.cost);
  opt.n_eval = args.n_eval;
  opt.n_mc = args.n_mc;
  if (!args.kappa.empty()) {
    const std::vector<double> v = parse_double_list(args.kappa);
    require(v.size() == 3 && v[2] >= 2 && v[2] == std::floor(v[2]), ErrorKind::kConfig,
            "--kappa expects lo,hi,count");
    opt.kappa_grid = log_grid(v[0], v[1], static_cast<int>(v[2]));
  }
  KeyValues kv;
  distribution_to_kv(source, "source", kv);
  distribution_to_kv(target, "target", kv);
  kv["cost"] = args.cost;
  kv["kappa_grid"] = format_double_list(opt.kappa_grid);
  kv["n_eval"] = std::to_string(opt.n_eval);
  kv["n_mc"] = std::to_string(opt.n_mc);
  kv["rho"] = format_double(opt.rho);
  kv["seed"] = std::to_string(common.seed);
  RunDir dir = open_run(common, "diagnose-eps", kv);
  dir.write_text("config", format_key_values(kv));

  const EpsilonScan scan = select_epsilon(source, target, opt, common.seed);
  std::ostringstream csv;
  write_scan_csv(csv, scan);
  dir.write_text("csv/eps_scan.csv", csv.str());
  Json j;
  j["kappa_grid"] = scan.kappa_grid;
  j["d"] = scan.d;
  j["rv_f"] = scan.rv_f;
  j["rv_g"] = scan.rv_g;
  j["curve"] = scan.curve;
  j["smoothed"] = scan.smoothed;
  j["selected_index"] = scan.selected_index;
  j["selected_kappa"] = scan.selected_kappa;
  j["selected_epsilon"] = scan.selected_epsilon;
  j["no_elbow"] = scan.no_elbow;
  j["rho"] = opt.rho;
  j["n_eval"] = scan.n_eval;
  j["n_mc"] = scan.n_mc;
  j["seed"] = scan.seed;
  dir.write_json("reports/eps_scan.json", j);
  std::cerr << "selected epsilon " << scan.selected_epsilon
            << (scan.no_elbow ? " (no elbow; largest grid value)" : "") << "\n";
  finish(dir, common, "diagnose-eps", kv, common.seed, t0);
  return kExitOk;
}

int cmd_verify_prop3(const Common& common, const Prop3Args& args) {
  const auto t0 = Clock::now();
  Prop3Options opt;
  opt.source.radius = args.r1;
  opt.target.radius = args.r2;
  validate(opt.source);
  validate(opt.target);
  opt.cost.epsilon = args.eps;
  require(args.eps > 0.0, ErrorKind::kConfig, "--eps must be > 0");
  opt.batch_sizes.clear();
  for (int n : parse_int_list(args.batch_sizes)) {
    require(n >= 1 && n <= kMaxAssignmentSize, ErrorKind::kConfig, "bad batch size");
    opt.batch_sizes.push_back(n);
  }
  require(!opt.batch_sizes.empty() && args.reps >= 1 && args.n_limit >= 2, ErrorKind::kConfig,
          "need batch sizes, --reps >= 1 and --n-limit >= 2");
  opt.reps = args.reps;
  opt.n_limit = args.n_limit;
  opt.with_exact_plan = !args.no_exact;

  KeyValues kv;
  distribution_to_kv(opt.source, "source", kv);
  distribution_to_kv(opt.target, "target", kv);
  kv["eps"] = format_double(args.eps);
  kv["batch_sizes"] = args.batch_sizes;
  kv["reps"] = std::to_string(args.reps);
  kv["n_limit"] = std::to_string(args.n_limit);
  kv["exact_plan"] = opt.with_exact_plan ? "true" : "false";
  kv["seed"] = std::to_string(common.seed);
  VectorFieldNet net;
  if (!args.checkpoint.empty()) {
    net = load_checkpoint_or_exit(args.checkpoint).net;
    require(net.state_dim() == 2, ErrorKind::kConfig, "checkpoint net must be 2D");
    kv["checkpoint_sha256"] = sha256_hex(read_file(args.checkpoint));
  } else {
    const std::vector<int> hidden = parse_int_list(args.hidden);
    Rng init = make_stream(common.seed, StreamPurpose::kInit);
    net = VectorFieldNet::initialized(2, hidden, init);
    kv["hidden_dims"] = args.hidden;
  }
  RunDir dir = open_run(common, "verify-prop3", kv);
  dir.write_text("config", format_key_values(kv));

  const Prop3Table t = verify_prop3(net, opt, common.seed);
  std::ostringstream csv;
  write_prop3_csv(csv, t);
  dir.write_text("csv/prop3.csv", csv.str());
  Json j;
  j["limit"] = t.limit;
  j["limit_stderr"] = t.limit_stderr;
  j["z_eps"] = t.z_eps;
  j["z_stderr"] = t.z_stderr;
  j["ratio_defined"] = t.ratio_defined;
  Json rows = Json::array();
  for (const Prop3Row& r : t.rows)
    rows.push_back({{"n", r.n},
                    {"reps", r.reps},
                    {"mean_ratio", r.mean_ratio},
                    {"stderr", r.stderr_ratio},
                    {"mean_loss", r.mean_loss},
                    {"loss_stderr", r.loss_stderr},
                    {"exact_mean_ratio", r.exact_mean_ratio},
                    {"exact_stderr", r.exact_stderr_ratio}});
  j["rows"] = rows;
  dir.write_json("reports/prop3.json", j);
  finish(dir, common, "verify-prop3", kv, common.seed, t0);
  return kExitOk;
}

int cmd_benchmark(const Common& common, const BenchmarkArgs& args) {
  const auto t0 = Clock::now();
  const BenchmarkSpec bench = benchmark_or_exit(args.name);
  const std::vector<std::uint64_t> seeds = parse_seeds(args.seeds);
  const std::vector<double> eps = args.eps.empty()
                                      ? std::vector<double>{bench.eps_small, bench.eps_large}
                                      : parse_double_list(args.eps);
  const std::vector<BenchmarkMethod> methods = benchmark_methods(split_tokens(args.methods), eps);
  require(args.iters >= 1 && args.eval_n >= 2 && args.npe_n >= 100 && args.ref_n >= 2,
          ErrorKind::kConfig, "bad --iters/--eval-n/--npe-n/--ref-n");
  EvalProtocol protocol;
  protocol.n_eval = args.eval_n;
  protocol.n_mc = args.npe_n;
  protocol.n_ref = args.ref_n;
  protocol.solver = args.solver.resolve();

  KeyValues kv;
  kv["benchmark"] = bench.name;
  distribution_to_kv(bench.source, "source", kv);
  distribution_to_kv(bench.target, "target", kv);
  std::string labels, seed_list;
  for (const BenchmarkMethod& m : methods) labels += (labels.empty() ? "" : ",") + m.label;
  for (std::uint64_t s : seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
  kv["methods"] = labels;
  kv["seeds"] = seed_list;
  kv["iters"] = std::to_string(args.iters);
  kv["eval_n"] = std::to_string(args.eval_n);
  kv["npe_n"] = std::to_string(args.npe_n);
  kv["ref_n"] = std::to_string(args.ref_n);
  add_solver_kv(protocol.solver, kv);
  RunDir dir = open_run(common, "benchmark", kv);
  dir.write_text("config", format_key_values(kv));

  const ReferenceW2 ref =
      reference_w2(bench.source, bench.target, protocol.n_ref, protocol.ref_replicates, 0);

  struct Job {
    std::size_t method;
    std::uint64_t seed;
    RunMetrics metrics;
    long iterations = 0;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < methods.size(); ++m)
    for (std::uint64_t s : seeds) jobs.push_back({m, s, {}, 0, nullptr});

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex io;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      const BenchmarkMethod& method = methods[job.method];
      try {
        const auto start = Clock::now();
        const TrainConfig c = method_config(bench, method, job.seed, args.iters);
        job.iterations = c.iterations;
        const TrainResult r = train(c);
        job.metrics = evaluate_model(r.net, c.source, c.target, ref, protocol, job.seed);
        const std::string stem = method.label + "_seed" + std::to_string(job.seed);
        save_checkpoint(dir.file("checkpoints/" + stem + ".json"), make_checkpoint(c, r));
        dir.write_text("csv/train_" + stem + ".csv", log_csv(r.log, common.deterministic));
        std::lock_guard<std::mutex> lock(io);
        std::fprintf(stderr, "[%zu/%zu] %s seed %llu: w2^2 %.4f  npe %.4f  (%.0f s)\n", ++done,
                     jobs.size(), method.label.c_str(),
                     static_cast<unsigned long long>(job.seed), job.metrics.w2_squared,
                     job.metrics.npe, elapsed_ms(start) / 1000.0);
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  const unsigned workers = worker_count(jobs.size());
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const Job& job : jobs)
    if (job.error) std::rethrow_exception(job.error);

  std::ostringstream runs;
  write_csv_row(runs, {"method", "epsilon", "batch_size", "iterations", "seed", "w2_squared",
                       "npe", "path_energy"});
  for (const Job& job : jobs) {
    const BenchmarkMethod& m = methods[job.method];
    write_csv_row(runs, {m.label, format_double(m.epsilon), std::to_string(m.batch_size),
                         std::to_string(job.iterations), std::to_string(job.seed),
                         format_double(job.metrics.w2_squared), format_double(job.metrics.npe),
                         format_double(job.metrics.energy)});
  }
  dir.write_text("csv/runs.csv", runs.str());

  std::ostringstream table_csv, text;
  write_csv_row(table_csv, {"method", "w2_squared", "npe"});
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %-22s %-22s\n", "method", "W2^2", "NPE");
  text << bench.name << " (" << seeds.size() << " seed" << (seeds.size() == 1 ? "" : "s")
       << ", reference W2^2 " << format_double(ref.mean) << ")\n"
       << line;
  Json summary = Json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> w2, np;
    for (const Job& job : jobs)
      if (job.method == m) {
        w2.push_back(job.metrics.w2_squared);
        np.push_back(job.metrics.npe);
      }
    const MeanStd sw = mean_std(w2), sn = mean_std(np);
    write_csv_row(table_csv, {methods[m].label, mean_pm_std(sw), mean_pm_std(sn)});
    std::snprintf(line, sizeof line, "%-16s %-22s %-22s\n", methods[m].label.c_str(),
                  mean_pm_std(sw).c_str(), mean_pm_std(sn).c_str());
    text << line;
    summary.push_back({{"method", methods[m].label},
                       {"epsilon", methods[m].epsilon},
                       {"batch_size", methods[m].batch_size},
                       {"w2_squared", {{"mean", sw.mean}, {"std", sw.std}}},
                       {"npe", {{"mean", sn.mean}, {"std", sn.std}}},
                       {"seeds", sw.count}});
  }
  dir.write_text("csv/results.csv", table_csv.str());
  dir.write_text("reports/results.txt", text.str());
  Json report;
  report["benchmark"] = bench.name;
  report["reference_w2_squared"] = {{"mean", ref.mean},
                                    {"stderr", ref.std_error},
                                    {"n_ref", ref.n_ref},
                                    {"replicates", ref.replicates}};
  report["methods"] = summary;
  dir.write_json("reports/results.json", report);
  std::cerr << text.str();
  finish(dir, common, "benchmark", kv, seeds.front(), t0);
  return kExitOk;
}

}  // namespace flowmatch::cli
