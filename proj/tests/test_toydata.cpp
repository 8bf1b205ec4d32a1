#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowmatch/toydata.hpp"
#include "test_util.hpp"

using namespace flowmatch;

namespace {

DistributionSpec point_mass(std::vector<double> c) {
  DistributionSpec s;
  s.kind = DistributionKind::kPointMass;
  s.center = std::move(c);
  return s;
}

DistributionSpec ring(int count, double radius, double std) {
  DistributionSpec s;
  s.kind = DistributionKind::kGaussiansK;
  s.count = count;
  s.radius = radius;
  s.std = std;
  return s;
}

// Distance from p to the closed half circle of radius 1 centred at c, upper
// (sign = +1) or lower (sign = -1).
double arc_distance(double px, double py, double cx, double cy, int sign) {
  const double dx = px - cx, dy = py - cy;
  if (sign * dy >= 0.0) return std::abs(std::hypot(dx, dy) - 1.0);
  return std::min(std::hypot(dx - 1.0, dy), std::hypot(dx + 1.0, dy));
}

}  // namespace

TEST_CASE("point mass repeats its centre") {
  Rng rng = make_stream(1, StreamPurpose::kData);
  const SampleBatch b = sample(point_mass({1.0, 2.0}), 3, rng);
  REQUIRE(b.n() == 3);
  for (Index i = 0; i < 3; ++i) {
    CHECK(b.points(i, 0) == 1.0);
    CHECK(b.points(i, 1) == 2.0);
  }
}

TEST_CASE("circle_uniform lies on the circle") {
  DistributionSpec s;
  s.kind = DistributionKind::kCircleUniform;
  s.radius = 2.0;
  Rng rng = make_stream(2, StreamPurpose::kData);
  const Index n = 10000;
  const SampleBatch b = sample(s, n, rng);
  CHECK((b.points.rowwise().norm().array() - 2.0).abs().maxCoeff() <= 1e-12 * 2.0);
  // Each coordinate has std sqrt(2); allow four standard errors.
  const double tol = 4.0 * std::sqrt(2.0 / n);
  CHECK(std::abs(b.points.col(0).mean()) < tol);
  CHECK(std::abs(b.points.col(1).mean()) < tol);
}

TEST_CASE("circle_uniform in higher dimension") {
  DistributionSpec s;
  s.kind = DistributionKind::kCircleUniform;
  s.dim = 5;
  s.radius = 3.0;
  Rng rng = make_stream(3, StreamPurpose::kData);
  const SampleBatch b = sample(s, 500, rng);
  CHECK(b.d() == 5);
  CHECK((b.points.rowwise().norm().array() - 3.0).abs().maxCoeff() <= 1e-12 * 3.0);
}

TEST_CASE("ring mixture second moment") {
  // E|X|^2 = R^2 + d sigma^2.
  Rng rng = make_stream(4, StreamPurpose::kData);
  const SampleBatch b = sample(ring(8, 8.0, 0.1), 100000, rng);
  const double m2 = b.points.rowwise().squaredNorm().mean();
  const double expected = 64.0 + 2.0 * 0.01;
  CHECK(std::abs(m2 - expected) / expected < 0.01);
}

TEST_CASE("mixture component frequencies") {
  const int k = 8;
  const Index n = 40000;
  Rng rng = make_stream(5, StreamPurpose::kData);
  const SampleBatch b = sample(ring(k, 8.0, 0.1), n, rng);
  std::vector<int> counts(k, 0);
  for (Index i = 0; i < n; ++i) {
    double a = std::atan2(b.points(i, 1), b.points(i, 0));
    if (a < 0) a += 2.0 * std::numbers::pi;
    const int c = static_cast<int>(std::lround(a / (2.0 * std::numbers::pi / k))) % k;
    ++counts[c];
  }
  const double p = 1.0 / k;
  for (int c : counts)
    CHECK(std::abs(c / static_cast<double>(n) - p) <= 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("two_moons without noise lies on the arcs") {
  Rng rng = make_stream(6, StreamPurpose::kData);
  const SampleBatch b = two_moons(2, 0.0, rng);
  for (Index i = 0; i < b.n(); ++i) {
    const double x = b.points(i, 0), y = b.points(i, 1);
    const bool upper = std::abs(x * x + y * y - 1.0) < 1e-12 && y >= 0.0;
    const bool lower =
        std::abs((x - 1.0) * (x - 1.0) + (y - 0.5) * (y - 0.5) - 1.0) < 1e-12 && y <= 0.5;
    CHECK((upper || lower));
  }
}

TEST_CASE("two_moons noise stays near the arcs") {
  const double sigma = 0.05;
  Rng rng = make_stream(7, StreamPurpose::kData);
  const SampleBatch b = two_moons(10000, sigma, rng);
  int near = 0;
  for (Index i = 0; i < b.n(); ++i) {
    const double x = b.points(i, 0), y = b.points(i, 1);
    const double d = std::min(arc_distance(x, y, 0.0, 0.0, +1), arc_distance(x, y, 1.0, 0.5, -1));
    if (d <= 3.0 * sigma * std::sqrt(2.0)) ++near;
  }
  CHECK(near >= 9900);
}

TEST_CASE("sampling is deterministic per seed") {
  Rng a = make_stream(8, StreamPurpose::kData);
  Rng b = make_stream(8, StreamPurpose::kData);
  CHECK(two_moons(64, 0.1, a).points == two_moons(64, 0.1, b).points);
  for (auto spec : {presets::circular_mog_source(), presets::five_gaussians_target(),
                    presets::eight_gaussians_source(), presets::moons_target()}) {
    CHECK(sample(spec, 100, 11, 3).points == sample(spec, 100, 11, 3).points);
    CHECK(sample(spec, 100, 11, 3).points != sample(spec, 100, 12, 3).points);
  }
}

TEST_CASE("moons preset applies scale and offset") {
  Rng a = make_stream(9, StreamPurpose::kData);
  Rng b = make_stream(9, StreamPurpose::kData);
  const DistributionSpec spec = presets::moons_target();
  const SampleBatch scaled = sample(spec, 50, a);
  const SampleBatch unit = two_moons(50, spec.noise_std, b);
  CHECK((scaled.points.array() - (3.0 * unit.points.array() - 1.0)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("annulus samples respect the radii") {
  DistributionSpec s;
  s.kind = DistributionKind::kAnnulusUniform;
  s.inner_radius = 1.0;
  s.radius = 2.0;
  Rng rng = make_stream(10, StreamPurpose::kData);
  const Index n = 20000;
  const SampleBatch b = sample(s, n, rng);
  const Vector<double> r = b.points.rowwise().norm();
  CHECK(r.minCoeff() >= 1.0 - 1e-12);
  CHECK(r.maxCoeff() <= 2.0 + 1e-12);
  // Area-uniform: P(r < 1.5) = (1.5^2 - 1) / (4 - 1).
  const double p = (2.25 - 1.0) / 3.0;
  const double frac = (r.array() < 1.5).cast<double>().mean();
  CHECK(std::abs(frac - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("invalid specs are configuration errors") {
  Rng rng = make_stream(11, StreamPurpose::kData);
  DistributionSpec bad_std = ring(4, 1.0, 0.0);
  CHECK_THROWS_KIND(sample(bad_std, 2, rng), ErrorKind::kConfig);
  DistributionSpec bad_radius = ring(4, -1.0, 0.1);
  CHECK_THROWS_KIND(sample(bad_radius, 2, rng), ErrorKind::kConfig);
  DistributionSpec bad_count = ring(0, 1.0, 0.1);
  CHECK_THROWS_KIND(sample(bad_count, 2, rng), ErrorKind::kConfig);
  DistributionSpec circle;
  circle.kind = DistributionKind::kCircleUniform;
  circle.radius = 0.0;
  CHECK_THROWS_KIND(validate(circle), ErrorKind::kConfig);
  CHECK_THROWS_KIND(distribution_kind_from_string("spiral"), ErrorKind::kConfig);
  CHECK_THROWS_KIND(sample(ring(4, 1.0, 0.1), 0, rng), ErrorKind::kContract);
}

TEST_CASE("standardize two-point case") {
  SampleBatch b;
  b.points.resize(2, 2);
  b.points << 0.0, 0.0, 2.0, 2.0;
  const Standardization s = standardize(b);
  CHECK(s.mean(0) == 1.0);
  CHECK(s.mean(1) == 1.0);
  CHECK(s.std(0) == 1.0);
  CHECK(s.std(1) == 1.0);
  CHECK(s.batch.points(0, 0) == -1.0);
  CHECK(s.batch.points(1, 1) == 1.0);
}

TEST_CASE("standardize is idempotent and invertible") {
  Rng rng = make_stream(12, StreamPurpose::kData);
  SampleBatch b;
  b.points = Points<double>::Random(200, 3);
  b.points.col(1) *= 7.0;
  b.points.col(2).array() += 3.0;
  const Standardization s = standardize(b);
  CHECK(s.batch.points.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  const Vector<double> pop_std =
      (s.batch.points.colwise().squaredNorm() / 200.0).cwiseSqrt().transpose();
  CHECK((pop_std.array() - 1.0).abs().maxCoeff() < 1e-10);

  const Standardization again = standardize(s.batch);
  CHECK((again.batch.points - s.batch.points).cwiseAbs().maxCoeff() < 1e-10);

  const SampleBatch back = unstandardize(s.batch, s.mean, s.std);
  CHECK((back.points - b.points).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("standardize rejects constant coordinates") {
  SampleBatch b;
  b.points.resize(3, 2);
  b.points << 1.0, 5.0, 2.0, 5.0, 3.0, 5.0;
  CHECK_THROWS_KIND(standardize(b), ErrorKind::kDegenerateData);
}
