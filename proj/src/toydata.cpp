#include "flowmatch/toydata.hpp"

#include <cmath>
#include <numbers>

#include "flowmatch/errors.hpp"

namespace flowmatch {

namespace {

Vector<double> center_of(const DistributionSpec& spec, int dim) {
  if (spec.center.empty()) return Vector<double>::Zero(dim);
  return Eigen::Map<const Vector<double>>(spec.center.data(),
                                          static_cast<Index>(spec.center.size()));
}

Points<double> ring_centers(int count, double radius, double phase) {
  Points<double> c(count, 2);
  for (int k = 0; k < count; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * k / count;
    c(k, 0) = radius * std::cos(a);
    c(k, 1) = radius * std::sin(a);
  }
  return c;
}

Points<double> mixture_centers(const DistributionSpec& spec) {
  if (spec.kind == DistributionKind::kGaussiansK && !spec.centers.empty()) {
    const auto k = static_cast<Index>(spec.centers.size());
    const auto d = static_cast<Index>(spec.centers.front().size());
    Points<double> c(k, d);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < d; ++j) c(i, j) = spec.centers[i][j];
    return c;
  }
  return ring_centers(spec.count, spec.radius, spec.phase);
}

}  // namespace

const char* to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::kCircularMog: return "circular_mog";
    case DistributionKind::kGaussiansK: return "gaussians_k";
    case DistributionKind::kMoons: return "moons";
    case DistributionKind::kAnnulusUniform: return "annulus_uniform";
    case DistributionKind::kCircleUniform: return "circle_uniform";
    case DistributionKind::kPointMass: return "point_mass";
    case DistributionKind::kIsotropicGaussian: return "isotropic_gaussian";
  }
  return "?";
}

DistributionKind distribution_kind_from_string(const std::string& name) {
  for (auto k : {DistributionKind::kCircularMog, DistributionKind::kGaussiansK,
                 DistributionKind::kMoons, DistributionKind::kAnnulusUniform,
                 DistributionKind::kCircleUniform, DistributionKind::kPointMass,
                 DistributionKind::kIsotropicGaussian}) {
    if (name == to_string(k)) return k;
  }
  throw_error(ErrorKind::kConfig, "unknown distribution kind '" + name + "'");
}

int dimension(const DistributionSpec& spec) {
  switch (spec.kind) {
    case DistributionKind::kCircularMog:
    case DistributionKind::kMoons:
    case DistributionKind::kAnnulusUniform:
      return 2;
    case DistributionKind::kGaussiansK:
      return spec.centers.empty() ? 2 : static_cast<int>(spec.centers.front().size());
    case DistributionKind::kCircleUniform:
    case DistributionKind::kIsotropicGaussian:
      return spec.dim;
    case DistributionKind::kPointMass:
      return spec.center.empty() ? spec.dim : static_cast<int>(spec.center.size());
  }
  return spec.dim;
}

void validate(const DistributionSpec& spec) {
  const auto fail = [&](const std::string& msg) {
    throw_error(ErrorKind::kConfig,
                std::string(to_string(spec.kind)) + ": " + msg);
  };
  const int d = dimension(spec);
  if (d < 1) fail("dimension must be >= 1");
  if (!spec.center.empty() && static_cast<int>(spec.center.size()) != d)
    fail("center has wrong dimension");
  for (double c : spec.center)
    if (!std::isfinite(c)) fail("center must be finite");
  switch (spec.kind) {
    case DistributionKind::kCircularMog:
    case DistributionKind::kGaussiansK:
      if (spec.centers.empty()) {
        if (spec.count < 1) fail("component count must be >= 1");
        if (!(spec.radius > 0.0)) fail("radius must be > 0");
      } else {
        for (const auto& c : spec.centers)
          if (static_cast<int>(c.size()) != d) fail("ragged centers");
      }
      if (!(spec.std > 0.0)) fail("component std must be > 0");
      break;
    case DistributionKind::kMoons:
      if (!(spec.noise_std >= 0.0)) fail("noise std must be >= 0");
      if (!(spec.scale > 0.0)) fail("scale must be > 0");
      break;
    case DistributionKind::kAnnulusUniform:
      if (!(spec.radius > 0.0)) fail("radius must be > 0");
      if (!(spec.inner_radius >= 0.0 && spec.inner_radius < spec.radius))
        fail("inner radius must lie in [0, radius)");
      break;
    case DistributionKind::kCircleUniform:
      if (!(spec.radius > 0.0)) fail("radius must be > 0");
      break;
    case DistributionKind::kPointMass:
      break;
    case DistributionKind::kIsotropicGaussian:
      if (!(spec.std > 0.0)) fail("std must be > 0");
      break;
  }
}

SampleBatch two_moons(Index n, double noise_std, Rng& rng) {
  require(n >= 1, ErrorKind::kContract, "two_moons: n must be >= 1");
  require(noise_std >= 0.0, ErrorKind::kContract, "two_moons: noise_std must be >= 0");
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::bernoulli_distribution lower(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  SampleBatch out;
  out.points.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    const bool inner = lower(rng);
    const double a = angle(rng);
    double x = inner ? 1.0 - std::cos(a) : std::cos(a);
    double y = inner ? 0.5 - std::sin(a) : std::sin(a);
    if (noise_std > 0.0) {
      x += noise_std * noise(rng);
      y += noise_std * noise(rng);
    }
    out.points(i, 0) = x;
    out.points(i, 1) = y;
  }
  return out;
}

SampleBatch sample(const DistributionSpec& spec, Index n, Rng& rng,
                   std::uint64_t seed_tag) {
  validate(spec);
  require(n >= 1, ErrorKind::kContract, "sample: n must be >= 1");
  const int d = dimension(spec);
  const Vector<double> offset = center_of(spec, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SampleBatch out;
  out.seed_tag = seed_tag;
  out.points.resize(n, d);

  switch (spec.kind) {
    case DistributionKind::kCircularMog:
    case DistributionKind::kGaussiansK: {
      const Points<double> centers = mixture_centers(spec);
      std::uniform_int_distribution<Index> pick(0, centers.rows() - 1);
      for (Index i = 0; i < n; ++i) {
        const Index k = pick(rng);
        for (Index j = 0; j < d; ++j)
          out.points(i, j) = centers(k, j) + spec.std * normal(rng);
      }
      break;
    }
    case DistributionKind::kMoons: {
      out.points = spec.scale * two_moons(n, spec.noise_std, rng).points;
      break;
    }
    case DistributionKind::kAnnulusUniform: {
      const double r0 = spec.inner_radius * spec.inner_radius;
      const double r1 = spec.radius * spec.radius;
      for (Index i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * unif(rng);
        const double r = std::sqrt(r0 + (r1 - r0) * unif(rng));
        out.points(i, 0) = r * std::cos(a);
        out.points(i, 1) = r * std::sin(a);
      }
      break;
    }
    case DistributionKind::kCircleUniform: {
      for (Index i = 0; i < n; ++i) {
        if (d == 2) {
          const double a = 2.0 * std::numbers::pi * unif(rng);
          out.points(i, 0) = spec.radius * std::cos(a);
          out.points(i, 1) = spec.radius * std::sin(a);
          continue;
        }
        Vector<double> g(d);
        do {
          for (Index j = 0; j < d; ++j) g(j) = normal(rng);
        } while (g.norm() == 0.0);
        out.points.row(i) = (spec.radius / g.norm()) * g.transpose();
      }
      break;
    }
    case DistributionKind::kPointMass:
      out.points.setZero();
      break;
    case DistributionKind::kIsotropicGaussian:
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) out.points(i, j) = spec.std * normal(rng);
      break;
  }
  out.points.rowwise() += offset.transpose();
  return out;
}

SampleBatch sample(const DistributionSpec& spec, Index n, std::uint64_t seed,
                   std::uint64_t index) {
  Rng rng = make_stream(seed, StreamPurpose::kData, index);
  return sample(spec, n, rng, seed);
}

Standardization standardize(const SampleBatch& batch) {
  const Index n = batch.n();
  require(n >= 2, ErrorKind::kContract, "standardize: need at least two samples");
  Standardization s;
  s.mean = batch.points.colwise().mean().transpose();
  const Points<double> centered = batch.points.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(n))
              .cwiseSqrt()
              .transpose();
  for (Index j = 0; j < s.std.size(); ++j) {
    if (!(s.std(j) > 0.0))
      throw_error(ErrorKind::kDegenerateData,
                  "standardize: coordinate " + std::to_string(j) +
                      " has zero variance");
  }
  s.batch.seed_tag = batch.seed_tag;
  s.batch.points = centered.array().rowwise() / s.std.transpose().array();
  return s;
}

SampleBatch unstandardize(const SampleBatch& batch, const Vector<double>& mean,
                          const Vector<double>& std) {
  require(mean.size() == batch.d() && std.size() == batch.d(),
          ErrorKind::kContract, "unstandardize: transform dimension mismatch");
  SampleBatch out;
  out.seed_tag = batch.seed_tag;
  out.points = (batch.points.array().rowwise() * std.transpose().array())
                   .rowwise() +
               mean.transpose().array();
  return out;
}

namespace presets {

DistributionSpec circular_mog_source() {
  DistributionSpec s;
  s.kind = DistributionKind::kCircularMog;
  s.count = 16;
  s.radius = 0.5;
  s.std = 0.025;
  return s;
}

DistributionSpec five_gaussians_target() {
  DistributionSpec s;
  s.kind = DistributionKind::kGaussiansK;
  s.count = 5;
  s.radius = 0.5;
  s.std = 0.0375;
  return s;
}

DistributionSpec eight_gaussians_source() {
  DistributionSpec s;
  s.kind = DistributionKind::kGaussiansK;
  s.count = 8;
  s.radius = 8.0;
  s.std = 0.5;
  return s;
}

DistributionSpec moons_target() {
  DistributionSpec s;
  s.kind = DistributionKind::kMoons;
  s.noise_std = 0.2;
  s.scale = 3.0;
  s.center = {-1.0, -1.0};
  return s;
}

}  // namespace presets

}  // namespace flowmatch
