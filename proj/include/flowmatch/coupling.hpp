#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowmatch/errors.hpp"
#include "flowmatch/rng.hpp"
#include "flowmatch/toydata.hpp"
#include "flowmatch/types.hpp"

namespace flowmatch {

enum class CostKind { kEuclidean, kSquaredEuclidean };

const char* to_string(CostKind kind);
CostKind cost_kind_from_string(const std::string& name);

// `epsilon` is the entropic regularization / Gibbs temperature, in the same
// units as the cost.
struct CostSpec {
  CostKind kind = CostKind::kEuclidean;
  double epsilon = 1.0;
};

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cost(const Eigen::MatrixBase<DerivedA>& x,
                               const Eigen::MatrixBase<DerivedB>& y, CostKind kind) {
  const auto sq = (x - y).squaredNorm();
  return kind == CostKind::kEuclidean ? std::sqrt(sq) : sq;
}

// exp(-c(x, y) / epsilon), in (0, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar gibbs_weight(const Eigen::MatrixBase<DerivedA>& x,
                                       const Eigen::MatrixBase<DerivedB>& y,
                                       const CostSpec& spec) {
  require(spec.epsilon > 0.0, ErrorKind::kContract, "gibbs_weight: epsilon must be > 0");
  return std::exp(-cost(x, y, spec.kind) / spec.epsilon);
}

// C(i, j) = c(xs.row(i), ys.row(j)), computed from explicit differences so
// that coincident points have exactly zero cost.
template <typename DerivedA, typename DerivedB>
Points<typename DerivedA::Scalar> cost_matrix(const Eigen::MatrixBase<DerivedA>& xs,
                                              const Eigen::MatrixBase<DerivedB>& ys,
                                              CostKind kind) {
  require(xs.cols() == ys.cols(), ErrorKind::kContract, "cost_matrix: dimension mismatch");
  Points<typename DerivedA::Scalar> c(xs.rows(), ys.rows());
  for (Index j = 0; j < ys.rows(); ++j)
    for (Index i = 0; i < xs.rows(); ++i) c(i, j) = cost(xs.row(i), ys.row(j), kind);
  return c;
}

// Training tuples (t, x, y) with loss weight w.
struct WeightedPairBatch {
  Vector<double> t;
  Points<double> x;
  Points<double> y;
  Vector<double> w;

  Index size() const { return t.size(); }
};

// x_i paired with y_i, weights 1, t_i ~ U(0, 1).
WeightedPairBatch pair_independent(const SampleBatch& xs, const SampleBatch& ys, Rng& rng);

// Independent pairing with w_i = exp(-c(x_i, y_i) / epsilon). Consumes the
// generator exactly like pair_independent.
WeightedPairBatch pair_gibbs(const SampleBatch& xs, const SampleBatch& ys,
                             const CostSpec& cost, Rng& rng);

struct Assignment {
  std::vector<Index> sigma;  // row i is matched to column sigma[i]
  double total_cost = 0.0;   // sum_i C(i, sigma[i]) accumulated in row order
};

// Exact minimum-cost perfect matching (shortest augmenting paths with dual
// potentials, O(n^3)). Among optimal matchings the lexicographically smallest
// sigma is returned.
Assignment solve_assignment(const Points<double>& cost);
Assignment solve_assignment(const SampleBatch& xs, const SampleBatch& ys, CostKind kind);

inline constexpr Index kMaxAssignmentSize = 4096;

enum class PlanNormalization { kProbability, kPerPairRaw };

struct CouplingPlan {
  Points<double> weights;  // dense n x m
  PlanNormalization normalization = PlanNormalization::kProbability;
  long iterations = 0;
  double violation = 0.0;  // max L1 marginal violation at exit
};

struct SinkhornOptions {
  double tol = 1e-6;
  long max_iters = 10000;
};

// Log-domain Sinkhorn between uniform empirical measures. Throws
// ConvergenceError when the marginal violation is still above `tol` after
// `max_iters` iterations.
CouplingPlan sinkhorn(const Points<double>& cost, double epsilon,
                      const SinkhornOptions& options = {});
CouplingPlan sinkhorn(const SampleBatch& xs, const SampleBatch& ys, const CostSpec& cost,
                      const SinkhornOptions& options = {});

// Plan as the permutation matrix of an assignment, entries 1/n.
CouplingPlan assignment_plan(const Assignment& a);

// i,j,weight rows for inspection.
void write_plan_csv(std::ostream& out, const CouplingPlan& plan, double min_weight = 0.0);

enum class OtMode {
  kExact,          // x_i with y_sigma(i)
  kSinkhorn,       // n index pairs drawn from the entropic plan
  kSinkhornDense,  // all n^2 pairs, weight n^2 * pi_ij, t shared along a row
};

const char* to_string(OtMode mode);

struct MinibatchOtStats {
  long sinkhorn_iterations = 0;
  double sinkhorn_violation = 0.0;
  double assignment_cost = 0.0;
};

WeightedPairBatch pair_minibatch_ot(const SampleBatch& xs, const SampleBatch& ys, OtMode mode,
                                    const CostSpec& cost, Rng& rng,
                                    const SinkhornOptions& options = {},
                                    MinibatchOtStats* stats = nullptr);

}  // namespace flowmatch
