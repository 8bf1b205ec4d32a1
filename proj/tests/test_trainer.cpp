#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "flowmatch/flow_ode.hpp"
#include "flowmatch/trainer.hpp"
#include "test_util.hpp"

using namespace flowmatch;

namespace {

DistributionSpec point_mass(std::vector<double> c) {
  DistributionSpec s;
  s.kind = DistributionKind::kPointMass;
  s.dim = static_cast<int>(c.size());
  s.center = std::move(c);
  return s;
}

DistributionSpec gaussian_1d(double mean) {
  DistributionSpec s;
  s.kind = DistributionKind::kIsotropicGaussian;
  s.dim = 1;
  s.std = 1.0;
  s.center = {mean};
  return s;
}

TrainConfig small_config(Strategy strategy, long iters) {
  TrainConfig c;
  c.strategy = strategy;
  c.iterations = iters;
  c.batch_size = 32;
  c.hidden_dims = {16, 16};
  c.log_every = 50;
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("flowmatch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("interpolate") {
  Eigen::RowVector2d x(0.0, 0.0), y(2.0, 4.0);
  auto [xt, v] = interpolate(x, y, 0.25);
  CHECK(xt(0) == 0.5);
  CHECK(xt(1) == 1.0);
  CHECK(v(0) == 2.0);
  CHECK(v(1) == 4.0);
  Eigen::RowVector2d a(-1.5, 3.0), b(7.0, 0.25);
  CHECK(interpolate(a, b, 0.0).first == a.transpose());
  CHECK(interpolate(a, b, 1.0).first == b.transpose());
  CHECK_THROWS_KIND(interpolate(a, b, 1.5), ErrorKind::kContract);
}

TEST_CASE("regression batch holds interpolants and displacements") {
  WeightedPairBatch p;
  p.t = Vector<double>(2);
  p.t << 0.5, 0.0;
  p.x = Points<double>(2, 1);
  p.y = Points<double>(2, 1);
  p.x << 0.0, 1.0;
  p.y << 4.0, -1.0;
  p.w = Vector<double>(2);
  p.w << 0.2, 0.6;
  const RegressionBatch r = make_regression_batch(p);
  CHECK(r.x(0, 0) == 2.0);
  CHECK(r.x(1, 0) == 1.0);
  CHECK(r.target(0, 0) == 4.0);
  CHECK(r.target(1, 0) == -2.0);
  CHECK(r.weight(1) == 0.6);
  const RegressionBatch n = make_regression_batch(p, true);
  CHECK(n.weight(0) == doctest::Approx(0.5));
  CHECK(n.weight(1) == doctest::Approx(1.5));
}

TEST_CASE("point mass to itself has zero loss") {
  TrainConfig c = small_config(Strategy::kIcfm, 200);
  c.source = point_mass({1.0, -2.0});
  c.target = point_mass({1.0, -2.0});
  c.zero_final_layer = true;
  c.log_every = 10;
  const TrainResult r = train(c);
  REQUIRE(!r.log.rows.empty());
  CHECK(r.log.rows.back().loss < 1e-10);
}

TEST_CASE("1D shift is learned") {
  TrainConfig c = small_config(Strategy::kIcfm, 5000);
  c.source = gaussian_1d(0.0);
  c.target = gaussian_1d(5.0);
  const TrainResult r = train(c);
  Rng rng = make_stream(99, StreamPurpose::kEval);
  const SampleBatch x0 = sample(c.source, 2000, rng);
  const Trajectory traj = integrate_euler(r.net, x0.points, 100, false);
  const double shift = (traj.final_state - x0.points).mean();
  CHECK(std::abs(shift - 5.0) < 0.5);
}

TEST_CASE("huge epsilon W-CFM tracks I-CFM") {
  TrainConfig ic = small_config(Strategy::kIcfm, 1000);
  TrainConfig wc = ic;
  wc.strategy = Strategy::kWcfm;
  wc.cost = CostSpec{CostKind::kEuclidean, 1e9};
  const TrainResult a = train(ic);
  const TrainResult b = train(wc);
  CHECK((a.net.flatten() - b.net.flatten()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("W-CFM batch loss is the Gibbs-weighted I-CFM loss") {
  TrainConfig ic = small_config(Strategy::kIcfm, 1);
  TrainConfig wc = ic;
  wc.strategy = Strategy::kWcfm;
  wc.cost = CostSpec{CostKind::kEuclidean, 0.3};
  Rng init = make_stream(5, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {8}, init);
  for (long step : {0L, 7L}) {
    const WeightedPairBatch pi = draw_training_pairs(ic, step);
    const WeightedPairBatch pw = draw_training_pairs(wc, step);
    CHECK(pi.x == pw.x);
    CHECK(pi.y == pw.y);
    CHECK(pi.t == pw.t);
    double expected = 0.0;
    for (Index i = 0; i < pi.size(); ++i) {
      const Vector<double> xt = (1.0 - pi.t(i)) * pi.x.row(i) + pi.t(i) * pi.y.row(i);
      const Vector<double> r = net.forward(pi.t(i), xt) - (pi.y.row(i) - pi.x.row(i)).transpose();
      const double w = std::exp(-(pi.y.row(i) - pi.x.row(i)).norm() / 0.3);
      expected += w * r.squaredNorm();
    }
    expected /= static_cast<double>(pi.size());
    CHECK(loss_only(net, make_regression_batch(pw)) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("training reduces the loss") {
  for (Strategy s : {Strategy::kIcfm, Strategy::kWcfm, Strategy::kOtcfmExact,
                     Strategy::kOtcfmSinkhorn}) {
    CAPTURE(to_string(s));
    TrainConfig c = small_config(s, 1500);
    c.cost.epsilon = 0.2;
    c.log_every = 100;
    const TrainResult r = train(c);
    REQUIRE(r.log.rows.size() == 15);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 3; ++i) {
      first += r.log.rows[static_cast<std::size_t>(i)].loss;
      last += r.log.rows[r.log.rows.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    CHECK(last < first);
    CHECK(r.steps_completed == 1500);
  }
}

TEST_CASE("training is deterministic per seed") {
  const TrainConfig c = small_config(Strategy::kOtcfmSinkhorn, 120);
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  CHECK(a.net.flatten() == b.net.flatten());
  TrainConfig other = c;
  other.seed = 2;
  CHECK(train(other).net.flatten() != a.net.flatten());
}

TEST_CASE("resuming from a checkpoint is bit identical") {
  const auto dir = scratch_dir("resume");
  TrainConfig c = small_config(Strategy::kWcfm, 300);
  c.cost.epsilon = 0.5;
  c.checkpoint_every = 100;
  const TrainResult full = train(c);

  TrainOptions first;
  first.checkpoint_dir = dir;
  first.stop_after = 150;
  const TrainResult partial = train(c, first);
  REQUIRE(partial.last_checkpoint);
  CHECK(partial.last_checkpoint->filename() == "step_100.json");

  const Checkpoint ckpt = load_checkpoint(*partial.last_checkpoint);
  CHECK(ckpt.step == 100);
  TrainOptions second;
  second.resume_from = &ckpt;
  const TrainResult resumed = train(c, second);
  CHECK(resumed.steps_completed == 300);
  CHECK(resumed.net.flatten() == full.net.flatten());
  CHECK(resumed.adam.step == full.adam.step);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite loss aborts") {
  TrainConfig c = small_config(Strategy::kIcfm, 10);
  c.source = point_mass({1e308, 0.0});
  c.target = point_mass({-1e308, 0.0});
  try {
    (void)train(c);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("last good checkpoint: none") != std::string::npos);
  }
}

TEST_CASE("entropic batch loss") {
  Rng init = make_stream(3, StreamPurpose::kInit);
  const VectorFieldNet zero = VectorFieldNet::initialized(1, {4}, init, true);

  SUBCASE("two points with a zero field") {
    SampleBatch xs, ys;
    xs.points = Points<double>(2, 1);
    xs.points << 0.0, 1.0;
    ys.points = xs.points;
    const Vector<double> ts = Vector<double>::Constant(2, 0.3);
    const double eps = 0.5;
    const double k = std::exp(-1.0 / eps);
    // Off-diagonal mass k / (1 + k) moves a distance of 1.
    const double loss = batch_eot_cfm_loss(zero, xs, ys, ts, CostSpec{CostKind::kEuclidean, eps},
                                           SinkhornOptions{1e-12, 100000});
    CHECK(loss == doctest::Approx(k / (1.0 + k)).epsilon(1e-9));
  }
  SUBCASE("identical batches at small epsilon") {
    Rng net_rng = make_stream(4, StreamPurpose::kInit);
    const VectorFieldNet net = VectorFieldNet::initialized(1, {8}, net_rng);
    Rng rng = make_stream(4, StreamPurpose::kData);
    SampleBatch xs = sample(gaussian_1d(0.0), 8, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector<double> ts(8);
    for (Index i = 0; i < 8; ++i) ts(i) = u(rng);
    double expected = 0.0;
    for (Index i = 0; i < 8; ++i) expected += net.forward(ts(i), xs.points.row(i).transpose()).squaredNorm();
    expected /= 8.0;
    const double loss = batch_eot_cfm_loss(net, xs, xs, ts, CostSpec{CostKind::kEuclidean, 1e-3},
                                           SinkhornOptions{1e-12, 100000});
    CHECK(std::abs(loss - expected) < 1e-8);
  }
  SUBCASE("zero field gives the plan's transport cost") {
    Rng rng = make_stream(6, StreamPurpose::kData);
    const SampleBatch xs = sample(gaussian_1d(0.0), 10, rng);
    const SampleBatch ys = sample(gaussian_1d(2.0), 10, rng);
    const CostSpec spec{CostKind::kEuclidean, 0.7};
    const Vector<double> ts = Vector<double>::Constant(10, 0.5);
    const CouplingPlan plan = sinkhorn(xs, ys, spec);
    double expected = 0.0;
    for (Index i = 0; i < 10; ++i)
      for (Index j = 0; j < 10; ++j) {
        const double dx = ys.points(j, 0) - xs.points(i, 0);
        expected += plan.weights(i, j) * dx * dx;
      }
    CHECK(batch_eot_cfm_loss(zero, xs, ys, ts, spec) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("train config validation and round trip") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_KIND(validate(c), ErrorKind::kConfig);
  c = TrainConfig{};
  c.strategy = Strategy::kWcfm;
  c.cost.epsilon = 0.0;
  CHECK_THROWS_KIND(validate(c), ErrorKind::kConfig);
  c = TrainConfig{};
  c.target = gaussian_1d(0.0);
  CHECK_THROWS_KIND(validate(c), ErrorKind::kConfig);
  CHECK_THROWS_KIND(strategy_from_string("nope"), ErrorKind::kConfig);
  CHECK(strategy_from_string("otcfm") == Strategy::kOtcfmExact);

  TrainConfig w;
  w.strategy = Strategy::kOtcfmSinkhorn;
  w.ot_cost.epsilon = 0.25;
  w.seed = 17;
  w.hidden_dims = {32, 8};
  w.source = presets::eight_gaussians_source();
  w.target = presets::moons_target();
  const KeyValues kv = to_key_values(w);
  CHECK(to_key_values(train_config_from_kv(kv)) == kv);
  CHECK_THROWS_KIND(train_config_from_kv({{"iters", "ten"}}), ErrorKind::kConfig);
}
