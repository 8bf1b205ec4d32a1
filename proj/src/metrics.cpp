#include "flowmatch/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <vector>

#include "flowmatch/coupling.hpp"
#include "flowmatch/csv.hpp"

namespace flowmatch {

Points<double> subsample_rows(const Points<double>& points, Index n, Rng& rng) {
  require(n >= 0 && n <= points.rows(), ErrorKind::kContract,
          "subsample_rows: n exceeds the number of rows");
  std::vector<Index> idx(static_cast<std::size_t>(points.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates with explicit uniform draws (std::shuffle is not
  // specified identically across standard libraries).
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, points.rows() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::sort(idx.begin(), idx.begin() + n);
  Points<double> out(n, points.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = points.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

double w2_squared_empirical(const SampleBatch& a, const SampleBatch& b, std::uint64_t seed) {
  require(a.n() > 0 && b.n() > 0, ErrorKind::kContract, "w2_squared_empirical: empty sample");
  require(a.d() == b.d(), ErrorKind::kContract, "w2_squared_empirical: dimension mismatch");
  const Index n = std::min({a.n(), b.n(), kMaxAssignmentSize});
  Rng rng = make_stream(seed, StreamPurpose::kEval, 0, 7);
  SampleBatch sa, sb;
  sa.points = a.n() == n ? a.points : subsample_rows(a.points, n, rng);
  sb.points = b.n() == n ? b.points : subsample_rows(b.points, n, rng);
  const Assignment as = solve_assignment(sa, sb, CostKind::kSquaredEuclidean);
  return as.total_cost / static_cast<double>(n);
}

ReferenceW2 reference_w2(const DistributionSpec& source, const DistributionSpec& target,
                         Index n_ref, int replicates, std::uint64_t seed) {
  require(n_ref >= 1 && replicates >= 1, ErrorKind::kContract,
          "reference_w2: n_ref and replicates must be >= 1");
  std::vector<double> values;
  for (int r = 0; r < replicates; ++r) {
    Rng rs = make_stream(seed, StreamPurpose::kEval, 1000 + static_cast<std::uint64_t>(r), 0);
    Rng rt = make_stream(seed, StreamPurpose::kEval, 1000 + static_cast<std::uint64_t>(r), 1);
    const SampleBatch xs = sample(source, n_ref, rs);
    const SampleBatch ys = sample(target, n_ref, rt);
    values.push_back(w2_squared_empirical(xs, ys, seed));
  }
  ReferenceW2 ref;
  ref.n_ref = n_ref;
  ref.replicates = replicates;
  ref.seed = seed;
  ref.mean = std::accumulate(values.begin(), values.end(), 0.0) / replicates;
  if (replicates > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - ref.mean) * (v - ref.mean);
    ref.std_error = std::sqrt(ss / (replicates - 1) / replicates);
  }
  return ref;
}

double f1_score(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

Points<double> squared_distances(const Points<double>& a, const Points<double>& b) {
  Points<double> d(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

// Squared distance from each point to its k-th nearest other point.
Vector<double> knn_radii_sq(const Points<double>& pts, int k) {
  const Points<double> d = squared_distances(pts, pts);
  const Index n = pts.rows();
  Vector<double> r(n);
  std::vector<double> row;
  for (Index i = 0; i < n; ++i) {
    row.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) row.push_back(d(i, j));
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    r(i) = row[static_cast<std::size_t>(k - 1)];
  }
  return r;
}

}  // namespace

Prdc prdc(const SampleBatch& real, const SampleBatch& fake, int k) {
  require(real.d() == fake.d(), ErrorKind::kContract, "prdc: dimension mismatch");
  require(k >= 1 && k < std::min(real.n(), fake.n()), ErrorKind::kContract,
          "prdc: need 1 <= k < min(n_real, n_fake)");
  const Index n = real.n(), m = fake.n();
  const Vector<double> r_real = knn_radii_sq(real.points, k);
  const Vector<double> r_fake = knn_radii_sq(fake.points, k);
  const Points<double> d = squared_distances(real.points, fake.points);  // n x m

  Index precise = 0, members = 0;
  for (Index j = 0; j < m; ++j) {
    Index c = 0;
    for (Index i = 0; i < n; ++i)
      if (d(i, j) <= r_real(i)) ++c;
    members += c;
    if (c > 0) ++precise;
  }
  Index recalled = 0, covered = 0;
  for (Index i = 0; i < n; ++i) {
    bool rec = false, cov = false;
    for (Index j = 0; j < m; ++j) {
      rec = rec || d(i, j) <= r_fake(j);
      cov = cov || d(i, j) <= r_real(i);
    }
    recalled += rec;
    covered += cov;
  }
  Prdc out;
  out.precision = static_cast<double>(precise) / static_cast<double>(m);
  out.recall = static_cast<double>(recalled) / static_cast<double>(n);
  out.density = static_cast<double>(members) / (static_cast<double>(k) * static_cast<double>(m));
  out.coverage = static_cast<double>(covered) / static_cast<double>(n);
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

double KdeGrid::cell_area() const {
  return (grid.x_max - grid.x_min) / static_cast<double>(grid.nx) *
         ((grid.y_max - grid.y_min) / static_cast<double>(grid.ny));
}

double KdeGrid::mass() const { return density.sum() * cell_area(); }

KdeGrid kde_grid(const SampleBatch& batch, double bandwidth, const GridSpec& grid) {
  require(batch.n() > 0, ErrorKind::kContract, "kde_grid: empty batch");
  require(batch.d() == 2, ErrorKind::kContract, "kde_grid: 2D samples only");
  require(bandwidth > 0.0, ErrorKind::kContract, "kde_grid: bandwidth must be > 0");
  require(grid.nx >= 1 && grid.ny >= 1 && grid.x_max > grid.x_min && grid.y_max > grid.y_min,
          ErrorKind::kContract, "kde_grid: invalid grid");
  KdeGrid out;
  out.grid = grid;
  const double dx = (grid.x_max - grid.x_min) / static_cast<double>(grid.nx);
  const double dy = (grid.y_max - grid.y_min) / static_cast<double>(grid.ny);
  out.xs.resize(grid.nx);
  out.ys.resize(grid.ny);
  for (Index i = 0; i < grid.nx; ++i) out.xs(i) = grid.x_min + (static_cast<double>(i) + 0.5) * dx;
  for (Index i = 0; i < grid.ny; ++i) out.ys(i) = grid.y_min + (static_cast<double>(i) + 0.5) * dy;

  // The kernel factorizes over coordinates: density = Gy * Gx^T / n.
  const Index n = batch.n();
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  Points<double> gx(grid.nx, n), gy(grid.ny, n);
  for (Index p = 0; p < n; ++p) {
    gx.col(p) = (-(out.xs.array() - batch.points(p, 0)).square() * inv2h2).exp();
    gy.col(p) = (-(out.ys.array() - batch.points(p, 1)).square() * inv2h2).exp();
  }
  const double norm = 1.0 / (2.0 * M_PI * bandwidth * bandwidth * static_cast<double>(n));
  out.density = norm * (gy * gx.transpose());
  return out;
}

void write_kde_csv(std::ostream& out, const KdeGrid& kde) {
  out << "x,y,density\n";
  for (Index iy = 0; iy < kde.ys.size(); ++iy)
    for (Index ix = 0; ix < kde.xs.size(); ++ix)
      write_csv_row(out, {format_double(kde.xs(ix)), format_double(kde.ys(iy)),
                          format_double(kde.density(iy, ix))});
}

}  // namespace flowmatch
