#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowmatch/metrics.hpp"
#include "flowmatch/trainer.hpp"

namespace flowmatch {

// A named source/target pair with the two W-CFM temperatures reported for it.
struct BenchmarkSpec {
  std::string name;
  DistributionSpec source;
  DistributionSpec target;
  double eps_small = 0.0;
  double eps_large = 0.0;
};

bool is_known_benchmark(const std::string& name);
std::vector<std::string> known_benchmarks();
// Throws a config error for unknown names.
BenchmarkSpec benchmark_spec(const std::string& name);

struct BenchmarkMethod {
  std::string label;  // e.g. "otcfm_b16", "wcfm_eps2"
  Strategy strategy = Strategy::kIcfm;
  double epsilon = 0.0;  // W-CFM only
  long batch_size = 48;
  // Training iterations relative to the base count. The small-batch OT-CFM
  // run sees the same number of samples as the batch-48 runs.
  double iteration_scale = 1.0;
};

// Tokens: icfm, otcfm, otcfm_b16, wcfm (one method per entry of `eps`).
// An empty token list gives the full roster.
std::vector<BenchmarkMethod> benchmark_methods(const std::vector<std::string>& tokens,
                                               const std::vector<double>& eps);

TrainConfig method_config(const BenchmarkSpec& bench, const BenchmarkMethod& method,
                          std::uint64_t seed, long base_iterations);

struct EvalProtocol {
  Index n_eval = 4096;  // generated and target samples for W2^2
  Index n_mc = 1000;    // trajectories for the path energy
  Index n_ref = 2048;
  int ref_replicates = 3;
  SolverConfig solver;
};

struct RunMetrics {
  double w2_squared = 0.0;
  double npe = 0.0;
  double energy = 0.0;
};

RunMetrics evaluate_model(const VectorFieldNet& net, const DistributionSpec& source,
                          const DistributionSpec& target, const ReferenceW2& reference,
                          const EvalProtocol& protocol, std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values);
// sqrt((s_a^2 + s_b^2) / 2)
double pooled_std(const MeanStd& a, const MeanStd& b);

}  // namespace flowmatch
