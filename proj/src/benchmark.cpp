#include "flowmatch/benchmark.hpp"

#include <cmath>

#include "flowmatch/csv.hpp"
#include "flowmatch/diagnostics.hpp"

namespace flowmatch {

bool is_known_benchmark(const std::string& name) {
  return name == "circular-mog" || name == "moons";
}

std::vector<std::string> known_benchmarks() { return {"circular-mog", "moons"}; }

BenchmarkSpec benchmark_spec(const std::string& name) {
  BenchmarkSpec b;
  b.name = name;
  if (name == "circular-mog") {
    b.source = presets::circular_mog_source();
    b.target = presets::five_gaussians_target();
    b.eps_small = 0.2;
    b.eps_large = 0.4;
  } else if (name == "moons") {
    b.source = presets::eight_gaussians_source();
    b.target = presets::moons_target();
    b.eps_small = 2.0;
    b.eps_large = 10.0;
  } else {
    throw_error(ErrorKind::kConfig, "unknown benchmark '" + name + "'");
  }
  return b;
}

std::vector<BenchmarkMethod> benchmark_methods(const std::vector<std::string>& tokens,
                                               const std::vector<double>& eps) {
  const std::vector<std::string> all{"icfm", "otcfm", "otcfm_b16", "wcfm"};
  const std::vector<std::string>& use = tokens.empty() ? all : tokens;
  std::vector<BenchmarkMethod> out;
  for (const std::string& t : use) {
    if (t == "icfm") {
      out.push_back({"icfm", Strategy::kIcfm, 0.0, 48, 1.0});
    } else if (t == "otcfm") {
      out.push_back({"otcfm", Strategy::kOtcfmExact, 0.0, 48, 1.0});
    } else if (t == "otcfm_b16") {
      out.push_back({"otcfm_b16", Strategy::kOtcfmExact, 0.0, 16, 3.0});
    } else if (t == "wcfm") {
      require(!eps.empty(), ErrorKind::kConfig, "wcfm needs at least one epsilon");
      for (double e : eps) {
        require(e > 0.0, ErrorKind::kConfig, "epsilon must be > 0");
        out.push_back({"wcfm_eps" + format_double(e), Strategy::kWcfm, e, 48, 1.0});
      }
    } else {
      throw_error(ErrorKind::kConfig, "unknown method '" + t + "'");
    }
  }
  return out;
}

TrainConfig method_config(const BenchmarkSpec& bench, const BenchmarkMethod& method,
                          std::uint64_t seed, long base_iterations) {
  TrainConfig c;
  c.strategy = method.strategy;
  c.cost = CostSpec{CostKind::kEuclidean, method.epsilon > 0.0 ? method.epsilon : 1.0};
  c.batch_size = method.batch_size;
  c.iterations = std::lround(static_cast<double>(base_iterations) * method.iteration_scale);
  c.seed = seed;
  c.source = bench.source;
  c.target = bench.target;
  validate(c);
  return c;
}

RunMetrics evaluate_model(const VectorFieldNet& net, const DistributionSpec& source,
                          const DistributionSpec& target, const ReferenceW2& reference,
                          const EvalProtocol& protocol, std::uint64_t seed) {
  RunMetrics m;
  const NpeResult r = npe(net, source, reference, NpeOptions{protocol.n_mc, protocol.solver, false},
                          seed);
  m.npe = r.npe;
  m.energy = r.energy;
  m.w2_squared = verify_pushforward(net, source, target, protocol.n_eval, protocol.solver, seed);
  return m;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

double pooled_std(const MeanStd& a, const MeanStd& b) {
  return std::sqrt(0.5 * (a.std * a.std + b.std * b.std));
}

}  // namespace flowmatch
