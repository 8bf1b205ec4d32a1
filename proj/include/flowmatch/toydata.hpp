#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowmatch/rng.hpp"
#include "flowmatch/types.hpp"

namespace flowmatch {

enum class DistributionKind {
  kCircularMog,
  kGaussiansK,
  kMoons,
  kAnnulusUniform,
  kCircleUniform,
  kPointMass,
  kIsotropicGaussian,
};

const char* to_string(DistributionKind kind);
DistributionKind distribution_kind_from_string(const std::string& name);

// Parameters are interpreted per kind; unused ones are ignored.
//   circular_mog       `count` Gaussians equally spaced on a circle of `radius`
//                      (starting at angle `phase`), common `std`.
//   gaussians_k        like circular_mog, or at explicit `centers` when given.
//   moons              two interleaved half circles, per-coordinate Gaussian
//                      `noise_std`, then `scale` and `center` offset.
//   annulus_uniform    area-uniform between `inner_radius` and `radius`.
//   circle_uniform     uniform on the sphere of `radius` in `dim` dimensions.
//   point_mass         Dirac at `center` (length `dim`).
//   isotropic_gaussian N(center, std^2 I) in `dim` dimensions.
// `center` is an offset added to every sample; empty means the origin.
struct DistributionSpec {
  DistributionKind kind = DistributionKind::kIsotropicGaussian;
  int dim = 2;
  int count = 1;
  double std = 1.0;
  double radius = 1.0;
  double inner_radius = 0.0;
  double phase = 0.0;
  double noise_std = 0.0;
  double scale = 1.0;
  std::vector<double> center;
  std::vector<std::vector<double>> centers;
};

// Throws a config error when parameters are out of range.
void validate(const DistributionSpec& spec);
int dimension(const DistributionSpec& spec);

struct SampleBatch {
  Points<double> points;
  std::uint64_t seed_tag = 0;

  Index n() const { return points.rows(); }
  Index d() const { return points.cols(); }
};

SampleBatch sample(const DistributionSpec& spec, Index n, Rng& rng,
                   std::uint64_t seed_tag = 0);

// Draws from the dedicated data stream of `seed`.
SampleBatch sample(const DistributionSpec& spec, Index n, std::uint64_t seed,
                   std::uint64_t index = 0);

// Unit-radius moons: the upper arc is centred at the origin, the lower one at
// (1, 0.5) flipped.
SampleBatch two_moons(Index n, double noise_std, Rng& rng);

struct Standardization {
  SampleBatch batch;
  Vector<double> mean;
  Vector<double> std;  // population (1/n) convention
};

Standardization standardize(const SampleBatch& batch);
SampleBatch unstandardize(const SampleBatch& batch, const Vector<double>& mean,
                          const Vector<double>& std);

namespace presets {
// Circular benchmark: 16 narrow modes on a radius-0.5 circle (std 0.025) to 5
// modes on the same circle (std 0.0375).
DistributionSpec circular_mog_source();
DistributionSpec five_gaussians_target();
// Moons benchmark: 8 modes on a radius-8 circle (std 0.5) to moons with noise
// 0.2, scaled by 3 and shifted by (-1, -1).
DistributionSpec eight_gaussians_source();
DistributionSpec moons_target();
}  // namespace presets

}  // namespace flowmatch
