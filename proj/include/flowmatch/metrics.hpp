#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>

#include "flowmatch/errors.hpp"
#include "flowmatch/flow_ode.hpp"
#include "flowmatch/rng.hpp"
#include "flowmatch/toydata.hpp"
#include "flowmatch/types.hpp"

namespace flowmatch {

// n rows drawn without replacement, kept in their original order.
Points<double> subsample_rows(const Points<double>& points, Index n, Rng& rng);

// Exact squared-Euclidean assignment cost divided by n. When the sizes differ
// the larger set is subsampled (seeded by `seed`); sets above the assignment
// size limit are both subsampled.
double w2_squared_empirical(const SampleBatch& a, const SampleBatch& b, std::uint64_t seed = 0);

// Reference W2^2 between two distributions: mean of `replicates` empirical
// values on fresh paired samples of size n_ref.
struct ReferenceW2 {
  double mean = 0.0;
  double std_error = 0.0;
  Index n_ref = 0;
  int replicates = 0;
  std::uint64_t seed = 0;
};

ReferenceW2 reference_w2(const DistributionSpec& source, const DistributionSpec& target,
                         Index n_ref = 2048, int replicates = 3, std::uint64_t seed = 0);

struct NpeOptions {
  Index n_mc = 1000;
  SolverConfig solver;
  // Skip the ill-conditioned reference check and report |E - W2^2| instead of
  // the ratio. Only meaningful for degenerate tests (e.g. a point mass to itself).
  bool bypass_reference_guard = false;
};

struct NpeResult {
  double npe = 0.0;
  double energy = 0.0;  // mean path energy over the n_mc trajectories
  double energy_stderr = 0.0;
  ReferenceW2 reference;
  Index n_mc = 0;
};

// |E int |v|^2 dt - W2^2| / W2^2 with the energy estimated from n_mc source
// samples drawn from the Eval stream of `seed`.
template <typename Field>
NpeResult npe(const Field& field, const DistributionSpec& source, const ReferenceW2& reference,
              const NpeOptions& options = {}, std::uint64_t seed = 0) {
  require(options.n_mc >= 100, ErrorKind::kContract, "npe: n_mc must be >= 100");
  if (!options.bypass_reference_guard && !(reference.mean >= 1e-9))
    throw_error(ErrorKind::kIllConditionedReference,
                "npe: reference W2^2 is below 1e-9; the normalized energy is undefined");
  Rng rng = make_stream(seed, StreamPurpose::kEval, 0);
  const SampleBatch x0 = sample(source, options.n_mc, rng);
  const Trajectory traj = integrate(field, x0.points, options.solver);
  const Vector<double> e = path_energy(traj);

  NpeResult r;
  r.n_mc = options.n_mc;
  r.reference = reference;
  r.energy = e.mean();
  const double var = (e.array() - r.energy).square().sum() / static_cast<double>(e.size() - 1);
  r.energy_stderr = std::sqrt(var / static_cast<double>(e.size()));
  const double dev = std::abs(r.energy - reference.mean);
  r.npe = options.bypass_reference_guard ? dev : dev / reference.mean;
  return r;
}

template <typename Field>
NpeResult npe(const Field& field, const DistributionSpec& source, const DistributionSpec& target,
              const NpeOptions& options = {}, std::uint64_t seed = 0) {
  return npe(field, source, reference_w2(source, target, 2048, 3, seed), options, seed);
}

struct Prdc {
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
  double f1 = 0.0;
};

// Harmonic mean; 0 when either argument is 0.
double f1_score(double precision, double recall);

// kNN-manifold metrics in raw coordinates. A point's radius is the distance
// to its k-th nearest neighbour in its own set (itself excluded); balls are
// closed, so a radius-0 ball still contains exact duplicates.
Prdc prdc(const SampleBatch& real, const SampleBatch& fake, int k = 5);

struct GridSpec {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  Index nx = 100, ny = 100;
};

// density(iy, ix) is the Gaussian KDE evaluated at the centre of cell (ix, iy).
struct KdeGrid {
  GridSpec grid;
  Vector<double> xs;  // cell centres
  Vector<double> ys;
  Points<double> density;

  double cell_area() const;
  // Riemann sum of the density over the grid.
  double mass() const;
};

// Isotropic Gaussian kernel with standard deviation `bandwidth`, 2D only.
KdeGrid kde_grid(const SampleBatch& batch, double bandwidth, const GridSpec& grid);

// x,y,density rows.
void write_kde_csv(std::ostream& out, const KdeGrid& kde);

struct MetricsReport {
  double w2_squared = 0.0;
  double npe = 0.0;
  bool has_npe = false;
  Prdc prdc;
  int prdc_k = 5;
  Index n_generated = 0;
  Index n_real = 0;
};

}  // namespace flowmatch
