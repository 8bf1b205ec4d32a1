#include "flowmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "flowmatch/csv.hpp"
#include "flowmatch/trainer.hpp"

namespace flowmatch {

const char* to_string(TiltSide side) {
  return side == TiltSide::kSourceF ? "source_f" : "target_g";
}

double relative_variance(const Vector<double>& values) {
  require(values.size() > 0, ErrorKind::kContract, "relative_variance: no values");
  const double mean = values.mean();
  if (!(mean > 0.0))
    throw_error(ErrorKind::kUnderflow, "relative_variance: mean is not positive");
  const double var = (values.array() - mean).square().mean();
  return var / (mean * mean);
}

double relative_variance_from_logs(const Vector<double>& log_values) {
  require(log_values.size() > 0, ErrorKind::kContract, "relative_variance: no values");
  const double shift = log_values.maxCoeff();
  return relative_variance((log_values.array() - shift).exp().matrix());
}

TiltDensityEstimate estimate_tilt(TiltSide side, const SampleBatch& eval_points,
                                  const SampleBatch& opposite, const CostSpec& cost) {
  require(opposite.n() >= 100, ErrorKind::kContract, "estimate_tilt: n_mc must be >= 100");
  require(cost.epsilon > 0.0, ErrorKind::kContract, "estimate_tilt: epsilon must be > 0");
  require(eval_points.n() > 0 && eval_points.d() == opposite.d(), ErrorKind::kContract,
          "estimate_tilt: empty or mismatched eval points");
  TiltDensityEstimate est;
  est.side = side;
  est.eval_points = eval_points;
  est.n_mc = opposite.n();
  est.epsilon = cost.epsilon;
  const Index n = eval_points.n();
  est.log_values.resize(n);
  const double log_n = std::log(static_cast<double>(opposite.n()));
  Vector<double> a(opposite.n());
  for (Index i = 0; i < n; ++i) {
    for (Index m = 0; m < opposite.n(); ++m)
      a(m) = -flowmatch::cost(eval_points.points.row(i), opposite.points.row(m), cost.kind) /
             cost.epsilon;
    const double amax = a.maxCoeff();
    est.log_values(i) = amax + std::log((a.array() - amax).exp().sum()) - log_n;
  }
  est.values = est.log_values.array().exp().matrix();
  if (est.log_values.maxCoeff() < std::log(1e-300))
    throw_error(ErrorKind::kUnderflow,
                "estimate_tilt: every tilt value is below 1e-300; use a larger epsilon");
  est.rel_variance = relative_variance_from_logs(est.log_values);
  return est;
}

TiltDensityEstimate estimate_tilt(TiltSide side, const SampleBatch& eval_points,
                                  const DistributionSpec& opposite, const CostSpec& cost,
                                  Index n_mc, Rng& rng) {
  require(n_mc >= 100, ErrorKind::kContract, "estimate_tilt: n_mc must be >= 100");
  return estimate_tilt(side, eval_points, sample(opposite, n_mc, rng), cost);
}

std::vector<double> running_median3(const std::vector<double>& curve) {
  std::vector<double> out = curve;
  for (std::size_t k = 1; k + 1 < curve.size(); ++k) {
    double w[3] = {curve[k - 1], curve[k], curve[k + 1]};
    std::sort(w, w + 3);
    out[k] = w[1];
  }
  return out;
}

std::size_t elbow_index(const std::vector<double>& curve, double rho, bool* no_elbow) {
  require(curve.size() >= 2, ErrorKind::kContract, "elbow_index: curve too short");
  const std::vector<double> s = running_median3(curve);
  if (no_elbow) *no_elbow = false;
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k - 1] <= 1e-300) return k - 1;
    if ((s[k - 1] - s[k]) / s[k - 1] < rho) return k;
  }
  if (no_elbow) *no_elbow = true;
  return s.size() - 1;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  require(lo > 0.0 && hi > lo && count >= 2, ErrorKind::kContract, "log_grid: bad range");
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

std::vector<double> default_kappa_grid() { return log_grid(0.02, 2.0, 21); }

EpsilonScan select_epsilon(const DistributionSpec& source, const DistributionSpec& target,
                           const EpsilonScanOptions& options, std::uint64_t seed) {
  const auto& grid = options.kappa_grid;
  require(grid.size() >= 4, ErrorKind::kContract, "select_epsilon: grid needs >= 4 values");
  for (std::size_t i = 0; i < grid.size(); ++i)
    require(grid[i] > 0.0 && (i == 0 || grid[i] > grid[i - 1]), ErrorKind::kContract,
            "select_epsilon: grid must be positive and strictly increasing");
  const int d = dimension(source);
  require(dimension(target) == d, ErrorKind::kContract, "select_epsilon: dimension mismatch");

  Rng r0 = make_stream(seed, StreamPurpose::kMonteCarlo, 0, 0);
  Rng r1 = make_stream(seed, StreamPurpose::kMonteCarlo, 0, 1);
  Rng r2 = make_stream(seed, StreamPurpose::kMonteCarlo, 0, 2);
  Rng r3 = make_stream(seed, StreamPurpose::kMonteCarlo, 0, 3);
  const SampleBatch eval_f = sample(source, options.n_eval, r0);
  const SampleBatch eval_g = sample(target, options.n_eval, r1);
  const SampleBatch mc_target = sample(target, options.n_mc, r2);
  const SampleBatch mc_source = sample(source, options.n_mc, r3);

  EpsilonScan scan;
  scan.kappa_grid = grid;
  scan.d = d;
  scan.n_eval = options.n_eval;
  scan.n_mc = options.n_mc;
  scan.seed = seed;
  for (double kappa : grid) {
    const CostSpec cost{options.cost, kappa * std::sqrt(static_cast<double>(d))};
    const double f = estimate_tilt(TiltSide::kSourceF, eval_f, mc_target, cost).rel_variance;
    const double g = estimate_tilt(TiltSide::kTargetG, eval_g, mc_source, cost).rel_variance;
    scan.rv_f.push_back(f);
    scan.rv_g.push_back(g);
    scan.curve.push_back(f + g);
  }
  scan.smoothed = running_median3(scan.curve);
  scan.selected_index = elbow_index(scan.curve, options.rho, &scan.no_elbow);
  scan.selected_kappa = grid[scan.selected_index];
  scan.selected_epsilon = scan.selected_kappa * std::sqrt(static_cast<double>(d));
  return scan;
}

void write_scan_csv(std::ostream& out, const EpsilonScan& scan) {
  out << "kappa,epsilon,rv_f,rv_g,rv_sum,rv_smoothed,selected\n";
  for (std::size_t i = 0; i < scan.kappa_grid.size(); ++i)
    write_csv_row(out, {format_double(scan.kappa_grid[i]),
                        format_double(scan.kappa_grid[i] * std::sqrt(static_cast<double>(scan.d))),
                        format_double(scan.rv_f[i]), format_double(scan.rv_g[i]),
                        format_double(scan.curve[i]), format_double(scan.smoothed[i]),
                        i == scan.selected_index ? "1" : "0"});
}

Prop3Options::Prop3Options() {
  source.kind = DistributionKind::kCircleUniform;
  source.radius = 1.0;
  target.kind = DistributionKind::kCircleUniform;
  target.radius = 2.0;
}

WeightedLossEstimate weighted_loss_limit(const VectorFieldNet& net,
                                         const DistributionSpec& source,
                                         const DistributionSpec& target, const CostSpec& cost,
                                         Index n, Rng& rng) {
  require(n >= 2, ErrorKind::kContract, "weighted_loss_limit: need at least 2 samples");
  constexpr Index kChunk = 4096;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Running sums for the ratio estimator and its delta-method variance.
  double sw = 0.0, swl = 0.0, sww = 0.0, swlwl = 0.0, swwl = 0.0;
  for (Index done = 0; done < n; done += kChunk) {
    const Index m = std::min(kChunk, n - done);
    const SampleBatch xs = sample(source, m, rng);
    const SampleBatch ys = sample(target, m, rng);
    Vector<double> t(m);
    for (Index i = 0; i < m; ++i) t(i) = unif(rng);
    const Points<double> xt =
        (xs.points.array().colwise() * (1.0 - t.array()) + ys.points.array().colwise() * t.array())
            .matrix();
    const Points<double> r = net.forward_batch(t, xt) - (ys.points - xs.points);
    const Vector<double> l = r.rowwise().squaredNorm();
    for (Index i = 0; i < m; ++i) {
      const double w = std::exp(-flowmatch::cost(xs.points.row(i), ys.points.row(i), cost.kind) /
                                cost.epsilon);
      const double wl = w * l(i);
      sw += w;
      swl += wl;
      sww += w * w;
      swlwl += wl * wl;
      swwl += w * wl;
    }
  }
  const double nn = static_cast<double>(n);
  WeightedLossEstimate est;
  est.z = sw / nn;
  est.ratio = swl / sw;
  const double var_w = sww / nn - est.z * est.z;
  est.z_stderr = std::sqrt(std::max(var_w, 0.0) / nn);
  // Var(wL - R w) / (n E[w]^2).
  const double r = est.ratio;
  const double var_resid = (swlwl - 2.0 * r * swwl + r * r * sww) / nn;
  est.ratio_stderr = std::sqrt(std::max(var_resid, 0.0) / nn) / est.z;
  return est;
}

namespace {

void mean_and_stderr(const std::vector<double>& v, double& mean, double& se) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) /
                                static_cast<double>(v.size()))
                    : 0.0;
}

}  // namespace

Prop3Table verify_prop3(const VectorFieldNet& net, const Prop3Options& options,
                        std::uint64_t seed) {
  require(!options.batch_sizes.empty() && options.reps >= 1, ErrorKind::kContract,
          "verify_prop3: need batch sizes and reps >= 1");
  Prop3Table table;
  Rng mc = make_stream(seed, StreamPurpose::kMonteCarlo, 1);
  const WeightedLossEstimate lim =
      weighted_loss_limit(net, options.source, options.target, options.cost, options.n_limit, mc);
  table.limit = lim.ratio;
  table.limit_stderr = lim.ratio_stderr;
  table.z_eps = lim.z;
  table.z_stderr = lim.z_stderr;
  table.ratio_defined = std::abs(lim.ratio) >= 1e-12;

  const Index n_max = *std::max_element(options.batch_sizes.begin(), options.batch_sizes.end());
  for (std::size_t b = 0; b < options.batch_sizes.size(); ++b) {
    const Index n = options.batch_sizes[b];
    require(n >= 1, ErrorKind::kContract, "verify_prop3: batch sizes must be >= 1");
    Prop3Row row;
    row.n = n;
    row.reps = static_cast<int>(options.reps * std::max<Index>(1, n_max / n));
    std::vector<double> losses, exact_losses;
    for (int rep = 0; rep < row.reps; ++rep) {
      Rng rng = make_stream(seed, StreamPurpose::kMonteCarlo, 100 + b,
                            static_cast<std::uint64_t>(rep));
      const SampleBatch xs = sample(options.source, n, rng);
      const SampleBatch ys = sample(options.target, n, rng);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Vector<double> ts(n);
      for (Index i = 0; i < n; ++i) ts(i) = unif(rng);
      losses.push_back(batch_eot_cfm_loss(net, xs, ys, ts, options.cost, options.sinkhorn));
      if (options.with_exact_plan) {
        const Assignment a = solve_assignment(xs, ys, options.cost.kind);
        exact_losses.push_back(batch_plan_cfm_loss(net, xs, ys, ts, assignment_plan(a).weights));
      }
    }
    mean_and_stderr(losses, row.mean_loss, row.loss_stderr);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (table.ratio_defined) {
      row.mean_ratio = row.mean_loss / table.limit;
      row.stderr_ratio = row.loss_stderr / table.limit;
    } else {
      row.mean_ratio = row.stderr_ratio = nan;
    }
    if (options.with_exact_plan && table.ratio_defined) {
      double m = 0.0, se = 0.0;
      mean_and_stderr(exact_losses, m, se);
      row.exact_mean_ratio = m / table.limit;
      row.exact_stderr_ratio = se / table.limit;
    } else {
      row.exact_mean_ratio = row.exact_stderr_ratio = nan;
    }
    table.rows.push_back(row);
  }
  return table;
}

void write_prop3_csv(std::ostream& out, const Prop3Table& table) {
  out << "n,mean_ratio,stderr,reps,mean_loss,loss_stderr,exact_mean_ratio,exact_stderr\n";
  for (const Prop3Row& r : table.rows)
    write_csv_row(out, {std::to_string(r.n), format_double(r.mean_ratio),
                        format_double(r.stderr_ratio), std::to_string(r.reps),
                        format_double(r.mean_loss), format_double(r.loss_stderr),
                        format_double(r.exact_mean_ratio), format_double(r.exact_stderr_ratio)});
}

}  // namespace flowmatch
