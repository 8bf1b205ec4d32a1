#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "flowmatch/errors.hpp"

using namespace flowmatch;
using namespace flowmatch::cli;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kIo:
      return kExitBadConfig;
    case ErrorKind::kVersionMismatch:
      return kExitCheckpoint;
    case ErrorKind::kNumerical:
    case ErrorKind::kDegenerateData:
    case ErrorKind::kUnderflow:
    case ErrorKind::kStiffness:
    case ErrorKind::kDivergence:
    case ErrorKind::kIllConditionedReference:
      return kExitNumerical;
    case ErrorKind::kConvergence:
      return kExitConvergence;
    case ErrorKind::kContract:
      return kExitOther;
  }
  return kExitOther;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s; c.seed_given = true; },
      "Master seed");
  sub->add_option("--config", c.config, "key = value config file");
  sub->add_option("--out", c.out, "Root directory for run outputs")->capture_default_str();
  sub->add_option("--run-id", c.run_id, "Run directory name (default: derived from config)");
  sub->add_flag("--deterministic", c.deterministic,
                "Write zero wallclock fields so reruns are byte identical");
}

void add_solver(CLI::App* sub, SolverFlags& s) {
  sub->add_option("--solver", s.solver, "euler or dopri5")->capture_default_str();
  sub->add_option("--steps", s.steps, "Euler steps")->capture_default_str();
  sub->add_option("--rtol", s.rtol, "Dopri5 relative tolerance")->capture_default_str();
  sub->add_option("--atol", s.atol, "Dopri5 absolute tolerance")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow matching on 2D toy problems: data, training, sampling and diagnostics"};
  app.set_version_flag("--version", FLOWMATCH_VERSION);
  app.require_subcommand(1);
  Common common;
  std::function<int()> run;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Sample a benchmark marginal to CSV");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--name", gen.name, "Benchmark name")->capture_default_str();
  gen_cmd->add_option("--side", gen.side, "source or target")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  gen_cmd->callback([&] { run = [&] { return cmd_gen_data(common, gen); }; });

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a vector field");
  add_common(train_cmd, common);
  train_cmd->add_option("--benchmark", tr.benchmark, "Use a benchmark's source and target");
  train_cmd->add_option("--strategy", tr.strategy, "icfm, wcfm, otcfm_exact, otcfm_sinkhorn");
  train_cmd->add_option("--eps", tr.eps, "W-CFM temperature");
  train_cmd->add_option("--ot-eps", tr.ot_eps, "Sinkhorn temperature for otcfm_sinkhorn");
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--iters", tr.iters);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
  train_cmd->callback([&] { run = [&] { return cmd_train(common, tr); }; });

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Push source samples through a trained field");
  add_common(sample_cmd, common);
  sample_cmd->add_option("--checkpoint", sa.checkpoint)->required();
  sample_cmd->add_option("--n", sa.n)->capture_default_str();
  sample_cmd->add_option("--trajectories", sa.trajectories,
                         "Record full paths for the first k samples")
      ->capture_default_str();
  add_solver(sample_cmd, sa.solver);
  sample_cmd->callback([&] { run = [&] { return cmd_sample(common, sa); }; });

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compare generated samples with real samples");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--real", ev.real)->required();
  eval_cmd->add_option("--fake", ev.fake)->required();
  eval_cmd->add_option("--k", ev.k, "PRDC neighbourhood size")->capture_default_str();
  eval_cmd->add_option("--kde-bandwidth", ev.kde_bandwidth, "Write KDE grids when > 0");
  eval_cmd->add_option("--kde-cells", ev.kde_cells)->capture_default_str();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Also report NPE for this model");
  eval_cmd->add_option("--npe-n", ev.npe_n)->capture_default_str();
  add_solver(eval_cmd, ev.solver);
  eval_cmd->callback([&] { run = [&] { return cmd_eval(common, ev); }; });

  DiagnoseArgs dg;
  auto* diag_cmd = app.add_subcommand("diagnose-eps", "Scan epsilon for marginal tilting");
  add_common(diag_cmd, common);
  diag_cmd->add_option("--name", dg.name, "Benchmark name")->capture_default_str();
  diag_cmd->add_option("--cost", dg.cost)->capture_default_str();
  diag_cmd->add_option("--kappa", dg.kappa, "Log grid lo,hi,count (epsilon = kappa sqrt(d))");
  diag_cmd->add_option("--n-eval", dg.n_eval)->capture_default_str();
  diag_cmd->add_option("--n-mc", dg.n_mc)->capture_default_str();
  diag_cmd->callback([&] { run = [&] { return cmd_diagnose_eps(common, dg); }; });

  Prop3Args p3;
  auto* p3_cmd = app.add_subcommand("verify-prop3",
                                    "Batch entropic loss versus the weighted loss limit");
  add_common(p3_cmd, common);
  p3_cmd->add_option("--eps", p3.eps)->capture_default_str();
  p3_cmd->add_option("--r1", p3.r1, "Source circle radius")->capture_default_str();
  p3_cmd->add_option("--r2", p3.r2, "Target circle radius")->capture_default_str();
  p3_cmd->add_option("--batch-sizes", p3.batch_sizes)->capture_default_str();
  p3_cmd->add_option("--reps", p3.reps)->capture_default_str();
  p3_cmd->add_option("--n-limit", p3.n_limit)->capture_default_str();
  p3_cmd->add_option("--hidden", p3.hidden, "Hidden widths of the random net")
      ->capture_default_str();
  p3_cmd->add_option("--checkpoint", p3.checkpoint, "Use a trained net instead");
  p3_cmd->add_flag("--no-exact", p3.no_exact, "Skip the exact-plan column");
  p3_cmd->callback([&] { run = [&] { return cmd_verify_prop3(common, p3); }; });

  BenchmarkArgs bm;
  auto* bench_cmd = app.add_subcommand("benchmark", "Train and score every method over seeds");
  add_common(bench_cmd, common);
  bench_cmd->add_option("--name", bm.name, "circular-mog or moons")->required();
  bench_cmd->add_option("--seeds", bm.seeds, "e.g. 1-5 or 1,3")->capture_default_str();
  bench_cmd->add_option("--methods", bm.methods, "Subset of icfm,otcfm,otcfm_b16,wcfm");
  bench_cmd->add_option("--eps", bm.eps, "W-CFM temperatures (default: the benchmark's pair)");
  bench_cmd->add_option("--iters", bm.iters, "Base training iterations")->capture_default_str();
  bench_cmd->add_option("--eval-n", bm.eval_n)->capture_default_str();
  bench_cmd->add_option("--npe-n", bm.npe_n)->capture_default_str();
  bench_cmd->add_option("--ref-n", bm.ref_n)->capture_default_str();
  add_solver(bench_cmd, bm.solver);
  bench_cmd->callback([&] { run = [&] { return cmd_benchmark(common, bm); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return run();
  } catch (const ExitError& e) {
    std::cerr << "flowmatch: " << e.what() << "\n";
    return e.code();
  } catch (const Error& e) {
    std::cerr << "flowmatch: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "flowmatch: " << e.what() << "\n";
    return kExitOther;
  }
}
