#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "flowmatch/flow_ode.hpp"

namespace flowmatch::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitUnknownBenchmark = 3;
inline constexpr int kExitBadConfig = 4;
inline constexpr int kExitCheckpoint = 5;
inline constexpr int kExitNumerical = 6;
inline constexpr int kExitConvergence = 7;

// Carries an explicit exit code (unknown benchmark, config, checkpoint).
class ExitError : public std::runtime_error {
 public:
  ExitError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct Common {
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string config;  // optional key = value file
  std::string out = "runs";
  std::string run_id;  // default: derived from the resolved config
  bool deterministic = false;
};

struct SolverFlags {
  std::string solver = "euler";
  long steps = 100;
  double rtol = 1e-5;
  double atol = 1e-5;

  SolverConfig resolve() const;
};

struct GenDataArgs {
  std::string name = "circular-mog";
  std::string side = "source";
  long n = 1000;
};

struct TrainArgs {
  std::string benchmark;
  std::string strategy;
  std::string eps;
  std::string ot_eps;
  std::string batch_size;
  std::string iters;
  std::string lr;
  std::string checkpoint_every;
  std::string resume;
};

struct SampleArgs {
  std::string checkpoint;
  long n = 1000;
  long trajectories = 0;
  SolverFlags solver;
};

struct EvalArgs {
  std::string real;
  std::string fake;
  int k = 5;
  double kde_bandwidth = 0.0;
  long kde_cells = 100;
  std::string checkpoint;  // enables NPE
  long npe_n = 1000;
  SolverFlags solver;
};

struct DiagnoseArgs {
  std::string name = "circular-mog";
  std::string cost = "euclidean";
  std::string kappa;  // lo,hi,count
  long n_eval = 512;
  long n_mc = 2000;
};

struct Prop3Args {
  double eps = 1.0;
  double r1 = 1.0;
  double r2 = 2.0;
  std::string batch_sizes = "8,32,128,512";
  int reps = 8;
  long n_limit = 1000000;
  std::string hidden = "64,64";
  std::string checkpoint;
  bool no_exact = false;
};

struct BenchmarkArgs {
  std::string name;
  std::string seeds = "1-5";
  std::string methods;
  std::string eps;
  long iters = 60000;
  long eval_n = 4096;
  long npe_n = 1000;
  long ref_n = 2048;
  SolverFlags solver;
};

int cmd_gen_data(const Common& common, const GenDataArgs& args);
int cmd_train(const Common& common, const TrainArgs& args);
int cmd_sample(const Common& common, const SampleArgs& args);
int cmd_eval(const Common& common, const EvalArgs& args);
int cmd_diagnose_eps(const Common& common, const DiagnoseArgs& args);
int cmd_verify_prop3(const Common& common, const Prop3Args& args);
int cmd_benchmark(const Common& common, const BenchmarkArgs& args);

}  // namespace flowmatch::cli
