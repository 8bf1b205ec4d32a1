#include "flowmatch/coupling.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include "flowmatch/csv.hpp"

namespace flowmatch {

namespace {

void require_same_size(const SampleBatch& xs, const SampleBatch& ys, const char* who) {
  require(xs.n() == ys.n(), ErrorKind::kContract,
          std::string(who) + ": batch sizes differ (" + std::to_string(xs.n()) + " vs " +
              std::to_string(ys.n()) + ")");
  require(xs.d() == ys.d(), ErrorKind::kContract, std::string(who) + ": dimension mismatch");
  require(xs.n() >= 1, ErrorKind::kContract, std::string(who) + ": empty batch");
}

Vector<double> uniform_times(Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector<double> t(n);
  for (Index i = 0; i < n; ++i) t(i) = u(rng);
  return t;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Shortest augmenting path assignment with potentials. Returns row -> column.
std::vector<Index> hungarian(const RowMajor& c, Eigen::VectorXd& u, Eigen::VectorXd& v) {
  const Index n = c.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based helpers; column 0 is a virtual source.
  u = Eigen::VectorXd::Zero(n + 1);
  v = Eigen::VectorXd::Zero(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      const double* row = c.data() + (i0 - 1) * n;
      const double ui = u(i0);
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - ui - v(j);
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        // On ties prefer a free column: ends the search early on flat costs.
        if (minv[j] < delta || (minv[j] == delta && p[j] == 0 && p[j1] != 0)) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u(p[j]) += delta;
          v(j) -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<Index> sigma(n);
  for (Index j = 1; j <= n; ++j) sigma[p[j] - 1] = j - 1;
  return sigma;
}

// Rewrites an optimal matching into the lexicographically smallest one among
// the perfect matchings of the equality subgraph (reduced cost ~ 0).
void lexicographic_tie_break(const RowMajor& c, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v, std::vector<Index>& sigma) {
  const Index n = c.rows();
  const double tol = 1e-10 * (1.0 + c.cwiseAbs().maxCoeff());
  std::vector<std::vector<Index>> tight(n);
  bool any_extra = false;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (c(i, j) - u(i + 1) - v(j + 1) <= tol) tight[i].push_back(j);
    }
    if (tight[i].size() > 1) any_extra = true;
  }
  if (!any_extra) return;

  std::vector<Index> owner(n);
  for (Index i = 0; i < n; ++i) owner[sigma[i]] = i;
  std::vector<char> visited(n);
  std::vector<Index> path_cols;

  // Find an alternating path that rematches `row` (unlocked, > locked) so that
  // column `goal` becomes its partner. Rows <= locked are frozen.
  auto reroute = [&](auto&& self, Index row, Index goal, Index locked) -> bool {
    for (Index j : tight[row]) {
      if (j == goal) {
        path_cols.push_back(j);
        return true;
      }
    }
    for (Index j : tight[row]) {
      if (visited[j]) continue;
      visited[j] = 1;
      const Index next = owner[j];
      if (next <= locked) continue;
      path_cols.push_back(j);
      if (self(self, next, goal, locked)) return true;
      path_cols.pop_back();
    }
    return false;
  };

  for (Index i = 0; i < n; ++i) {
    for (Index j : tight[i]) {
      if (j >= sigma[i]) break;
      const Index other = owner[j];
      if (other < i) continue;
      std::fill(visited.begin(), visited.end(), 0);
      visited[j] = 1;
      path_cols.clear();
      if (!reroute(reroute, other, sigma[i], i)) continue;
      // Apply: i -> j, then each row along the path takes the next column.
      Index row = other;
      const Index freed = sigma[i];
      sigma[i] = j;
      owner[j] = i;
      for (Index col : path_cols) {
        const Index displaced = col == freed ? -1 : owner[col];
        sigma[row] = col;
        owner[col] = row;
        row = displaced;
      }
      break;
    }
  }
}

}  // namespace

const char* to_string(CostKind kind) {
  return kind == CostKind::kEuclidean ? "euclidean" : "squared_euclidean";
}

CostKind cost_kind_from_string(const std::string& name) {
  if (name == "euclidean") return CostKind::kEuclidean;
  if (name == "squared_euclidean") return CostKind::kSquaredEuclidean;
  throw_error(ErrorKind::kConfig, "unknown cost kind '" + name + "'");
}

const char* to_string(OtMode mode) {
  switch (mode) {
    case OtMode::kExact: return "exact";
    case OtMode::kSinkhorn: return "sinkhorn";
    case OtMode::kSinkhornDense: return "sinkhorn_dense";
  }
  return "?";
}

WeightedPairBatch pair_independent(const SampleBatch& xs, const SampleBatch& ys, Rng& rng) {
  require_same_size(xs, ys, "pair_independent");
  WeightedPairBatch b;
  b.t = uniform_times(xs.n(), rng);
  b.x = xs.points;
  b.y = ys.points;
  b.w = Vector<double>::Ones(xs.n());
  return b;
}

WeightedPairBatch pair_gibbs(const SampleBatch& xs, const SampleBatch& ys, const CostSpec& spec,
                             Rng& rng) {
  require(spec.epsilon > 0.0, ErrorKind::kContract, "pair_gibbs: epsilon must be > 0");
  WeightedPairBatch b = pair_independent(xs, ys, rng);
  for (Index i = 0; i < b.size(); ++i) b.w(i) = gibbs_weight(b.x.row(i), b.y.row(i), spec);
  return b;
}

Assignment solve_assignment(const Points<double>& cost) {
  const Index n = cost.rows();
  require(n >= 1 && cost.cols() == n, ErrorKind::kContract,
          "solve_assignment: cost matrix must be square and nonempty");
  require(n <= kMaxAssignmentSize, ErrorKind::kContract,
          "solve_assignment: size exceeds " + std::to_string(kMaxAssignmentSize));
  if (!cost.allFinite()) throw NumericalError("solve_assignment: non-finite cost");

  const RowMajor c = cost;
  Eigen::VectorXd u, v;
  Assignment a;
  a.sigma = hungarian(c, u, v);
  lexicographic_tie_break(c, u, v, a.sigma);
  for (Index i = 0; i < n; ++i) a.total_cost += c(i, a.sigma[i]);
  return a;
}

Assignment solve_assignment(const SampleBatch& xs, const SampleBatch& ys, CostKind kind) {
  require_same_size(xs, ys, "solve_assignment");
  return solve_assignment(cost_matrix(xs.points, ys.points, kind));
}

CouplingPlan sinkhorn(const Points<double>& cost, double epsilon, const SinkhornOptions& opt) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  require(n >= 1 && m >= 1, ErrorKind::kContract, "sinkhorn: empty cost matrix");
  require(epsilon > 0.0, ErrorKind::kContract, "sinkhorn: epsilon must be > 0");
  if (!cost.allFinite()) throw NumericalError("sinkhorn: non-finite cost");

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd scaled = -cost / epsilon;  // -C / eps
  Eigen::MatrixXd work(n, m);

  // Row-wise log-sum-exp of (g_j - C_ij) / eps.
  const auto row_lse = [&](const Eigen::VectorXd& gj) {
    work = scaled.rowwise() + (gj / epsilon).transpose();
    const Eigen::VectorXd mx = work.rowwise().maxCoeff();
    return Eigen::VectorXd(
        mx.array() + (work.colwise() - mx).array().exp().rowwise().sum().log());
  };
  const auto col_lse = [&](const Eigen::VectorXd& fi) {
    work = scaled.colwise() + fi / epsilon;
    const Eigen::RowVectorXd mx = work.colwise().maxCoeff();
    return Eigen::VectorXd(
        (mx.array() + (work.rowwise() - mx).array().exp().colwise().sum().log()).transpose());
  };

  CouplingPlan plan;
  double violation = std::numeric_limits<double>::infinity();
  long it = 0;
  while (it < opt.max_iters) {
    ++it;
    f = epsilon * (log_a - row_lse(g).array());
    g = epsilon * (log_b - col_lse(f).array());
    // Columns are exact after the g update; rows carry the violation.
    work = ((scaled.colwise() + f / epsilon).rowwise() + (g / epsilon).transpose()).array().exp();
    violation = std::max((work.rowwise().sum().array() - a).abs().sum(),
                         (work.colwise().sum().array() - b).abs().sum());
    if (!std::isfinite(violation)) throw NumericalError("sinkhorn: non-finite plan");
    if (violation <= opt.tol) break;
  }
  plan.weights = work;
  plan.iterations = it;
  plan.violation = violation;
  if (violation > opt.tol) {
    throw ConvergenceError("sinkhorn: marginal violation " + format_double(violation) +
                               " above tol after " + std::to_string(it) + " iterations",
                           violation, it);
  }
  return plan;
}

CouplingPlan sinkhorn(const SampleBatch& xs, const SampleBatch& ys, const CostSpec& spec,
                      const SinkhornOptions& options) {
  require(xs.d() == ys.d(), ErrorKind::kContract, "sinkhorn: dimension mismatch");
  return sinkhorn(cost_matrix(xs.points, ys.points, spec.kind), spec.epsilon, options);
}

CouplingPlan assignment_plan(const Assignment& a) {
  const auto n = static_cast<Index>(a.sigma.size());
  CouplingPlan plan;
  plan.weights = Points<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i) plan.weights(i, a.sigma[i]) = 1.0 / static_cast<double>(n);
  return plan;
}

void write_plan_csv(std::ostream& out, const CouplingPlan& plan, double min_weight) {
  out << "i,j,weight\n";
  for (Index i = 0; i < plan.weights.rows(); ++i)
    for (Index j = 0; j < plan.weights.cols(); ++j) {
      const double w = plan.weights(i, j);
      if (w >= min_weight)
        out << i << ',' << j << ',' << format_double(w) << '\n';
    }
}

WeightedPairBatch pair_minibatch_ot(const SampleBatch& xs, const SampleBatch& ys, OtMode mode,
                                    const CostSpec& spec, Rng& rng,
                                    const SinkhornOptions& options, MinibatchOtStats* stats) {
  require_same_size(xs, ys, "pair_minibatch_ot");
  const Index n = xs.n();
  WeightedPairBatch b;
  b.t = uniform_times(n, rng);

  if (mode == OtMode::kExact) {
    const Assignment a = solve_assignment(xs, ys, spec.kind);
    b.x = xs.points;
    b.y.resize(n, ys.d());
    for (Index i = 0; i < n; ++i) b.y.row(i) = ys.points.row(a.sigma[i]);
    b.w = Vector<double>::Ones(n);
    if (stats) stats->assignment_cost = a.total_cost;
    return b;
  }

  const CouplingPlan plan = sinkhorn(xs, ys, spec, options);
  if (stats) {
    stats->sinkhorn_iterations = plan.iterations;
    stats->sinkhorn_violation = plan.violation;
  }

  if (mode == OtMode::kSinkhorn) {
    std::discrete_distribution<Index> pick(plan.weights.data(),
                                           plan.weights.data() + plan.weights.size());
    b.x.resize(n, xs.d());
    b.y.resize(n, ys.d());
    for (Index k = 0; k < n; ++k) {
      const Index flat = pick(rng);  // column-major: flat = i + j * n
      b.x.row(k) = xs.points.row(flat % n);
      b.y.row(k) = ys.points.row(flat / n);
    }
    b.w = Vector<double>::Ones(n);
    return b;
  }

  // Dense: pair (i, j) at row i * n + j, sharing t_i along row i.
  const Vector<double> row_t = b.t;
  b.t.resize(n * n);
  b.x.resize(n * n, xs.d());
  b.y.resize(n * n, ys.d());
  b.w.resize(n * n);
  const double scale = static_cast<double>(n) * static_cast<double>(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const Index k = i * n + j;
      b.t(k) = row_t(i);
      b.x.row(k) = xs.points.row(i);
      b.y.row(k) = ys.points.row(j);
      b.w(k) = scale * plan.weights(i, j);
    }
  return b;
}

}  // namespace flowmatch
