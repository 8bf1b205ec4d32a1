#include <cmath>

#include "doctest.h"
#include "flowmatch/flow_ode.hpp"
#include "flowmatch/trainer.hpp"
#include "test_util.hpp"

using namespace flowmatch;

namespace {

Points<double> column(std::initializer_list<double> v) {
  Points<double> p(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) p(i++, 0) = x;
  return p;
}

const auto kIdentity = [](double, const Points<double>& x) { return Points<double>(x); };

}  // namespace

TEST_CASE("euler on a constant field is exact") {
  const auto field = [](double, const Points<double>& x) {
    Points<double> v(x.rows(), 2);
    v.col(0).setConstant(0.5);
    v.col(1).setConstant(-2.0);
    return v;
  };
  Points<double> x0(3, 2);
  x0 << 0, 0, 1, 1, -3, 2;
  const Trajectory traj = integrate_euler(field, x0, 16);
  CHECK(traj.nfe == 16);
  CHECK(traj.times.size() == 17);
  CHECK(traj.times.back() == 1.0);
  Points<double> expected = x0;
  expected.col(0).array() += 0.5;
  expected.col(1).array() -= 2.0;
  CHECK((traj.final_state - expected).cwiseAbs().maxCoeff() < 1e-14);
  for (Index i = 0; i < 3; ++i) CHECK(traj.path_energy(i) == doctest::Approx(4.25));
  const Vector<double> e = path_energy(traj);
  CHECK(e(1) == doctest::Approx(4.25));
}

TEST_CASE("euler on v = x") {
  const Trajectory traj = integrate_euler(kIdentity, column({1.0}), 100);
  CHECK(traj.final_state(0, 0) == doctest::Approx(std::pow(1.01, 100)).epsilon(1e-13));
  CHECK(std::abs(traj.final_state(0, 0) - 2.70481) < 1e-5);
}

TEST_CASE("euler is first order") {
  double prev = std::abs(integrate_euler(kIdentity, column({1.0}), 50, false).final_state(0, 0) -
                         std::exp(1.0));
  for (long n : {100L, 200L, 400L}) {
    const double err =
        std::abs(integrate_euler(kIdentity, column({1.0}), n, false).final_state(0, 0) -
                 std::exp(1.0));
    CHECK(std::log2(prev / err) >= 0.9);
    prev = err;
  }
}

TEST_CASE("dopri5 on v = x") {
  const Trajectory traj = integrate_dopri5(kIdentity, column({1.0, -2.0}));
  CHECK(std::abs(traj.final_state(0, 0) - std::exp(1.0)) < 1e-6);
  CHECK(std::abs(traj.final_state(1, 0) + 2.0 * std::exp(1.0)) < 2e-6);
  CHECK(traj.times.back() == 1.0);
  CHECK(traj.nfe == 6 * (traj.accepted + traj.rejected) + 2);
  CHECK(traj.step_errors.size() == static_cast<std::size_t>(traj.accepted));
  for (double e : traj.step_errors) CHECK(e <= 1.0);
  for (std::size_t i = 1; i < traj.times.size(); ++i) CHECK(traj.times[i] > traj.times[i - 1]);
  // Energy of x(t) = e^t: integral of e^{2t} = (e^2 - 1) / 2. The running
  // estimate is a trapezoid rule on the (few, long) accepted steps.
  CHECK(traj.path_energy(0) == doctest::Approx((std::exp(2.0) - 1.0) / 2.0).epsilon(5e-2));
  CHECK(traj.path_energy(0) == path_energy(traj)(0));
}

TEST_CASE("dopri5 on a constant field") {
  const auto field = [](double, const Points<double>& x) {
    return Points<double>(Points<double>::Constant(x.rows(), x.cols(), 3.0));
  };
  const Trajectory traj = integrate_dopri5(field, column({0.0, 1.0}));
  CHECK(traj.rejected == 0);
  CHECK(std::abs(traj.final_state(0, 0) - 3.0) < 1e-12);
  CHECK(std::abs(traj.final_state(1, 0) - 4.0) < 1e-12);
  CHECK(path_energy(traj)(0) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("dopri5 tolerances are respected on a time-dependent field") {
  // x' = cos(2 pi t) x, x(1) = x(0) exp(sin(2 pi) / (2 pi)) = x(0).
  const auto field = [](double t, const Points<double>& x) {
    return Points<double>(std::cos(2.0 * M_PI * t) * x);
  };
  Dopri5Options tight;
  tight.rtol = tight.atol = 1e-9;
  const Trajectory traj = integrate_dopri5(field, column({1.5}), tight);
  CHECK(std::abs(traj.final_state(0, 0) - 1.5) < 1e-7);
  const Trajectory loose = integrate_dopri5(field, column({1.5}));
  CHECK(loose.nfe < traj.nfe);
}

TEST_CASE("path energy") {
  SUBCASE("constant velocity") {
    const auto field = [](double, const Points<double>& x) {
      Points<double> v(x.rows(), 2);
      v.col(0).setConstant(3.0);
      v.col(1).setConstant(4.0);
      return v;
    };
    Points<double> x0 = Points<double>::Zero(1, 2);
    CHECK(path_energy(integrate_euler(field, x0, 7))(0) == doctest::Approx(25.0));
    CHECK(path_energy(integrate_dopri5(field, x0))(0) == doctest::Approx(25.0));
  }
  SUBCASE("|v|^2 = t") {
    const auto field = [](double t, const Points<double>& x) {
      return Points<double>(Points<double>::Constant(x.rows(), 1, std::sqrt(t)));
    };
    const Trajectory traj = integrate_euler(field, column({0.0}), 1000);
    CHECK(std::abs(path_energy(traj)(0) - 0.5) < 1e-3);
  }
  SUBCASE("empty trajectory") {
    CHECK_THROWS_KIND(path_energy(Trajectory{}), ErrorKind::kContract);
  }
}

TEST_CASE("batch integration equals per-sample integration") {
  Rng init = make_stream(2, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {16, 16}, init);
  Rng rng = make_stream(2, StreamPurpose::kData);
  const Points<double> x0 = sample(presets::circular_mog_source(), 6, rng).points;
  const Trajectory batch = integrate_euler(net, x0, 50, false);
  for (Index i = 0; i < 6; ++i) {
    const Trajectory one = integrate_euler(net, Points<double>(x0.row(i)), 50, false);
    CHECK(one.final_state.row(0) == batch.final_state.row(i));
    CHECK(one.path_energy(0) == batch.path_energy(i));
  }
}

TEST_CASE("euler and dopri5 agree on a trained field") {
  TrainConfig c;
  c.iterations = 1500;
  c.batch_size = 32;
  c.hidden_dims = {16, 16};
  const TrainResult r = train(c);
  Rng rng = make_stream(3, StreamPurpose::kEval);
  const Points<double> x0 = sample(c.source, 200, rng).points;
  const Trajectory e = integrate_euler(r.net, x0, 1000, false);
  const Trajectory d = integrate_dopri5(r.net, x0);
  CHECK((e.final_state - d.final_state).rowwise().norm().maxCoeff() < 1e-2);
  CHECK(path_energy(e).mean() == doctest::Approx(path_energy(d).mean()).epsilon(1e-2));
}

TEST_CASE("integration failures") {
  SUBCASE("euler divergence") {
    const auto blowup = [](double, const Points<double>& x) {
      return Points<double>(1e200 * x.array().square().matrix());
    };
    try {
      (void)integrate_euler(blowup, column({1.0}), 10);
      FAIL("expected divergence");
    } catch (const IntegrationError& e) {
      CHECK(e.kind() == ErrorKind::kDivergence);
      CHECK(e.step() < 10);
    }
  }
  SUBCASE("dopri5 on a finite-time blowup") {
    // x' = x^2 from x(0) = 2 blows up at t = 1/2.
    const auto field = [](double, const Points<double>& x) {
      return Points<double>(x.array().square().matrix());
    };
    Dopri5Options opt;
    opt.max_steps = 5000;
    try {
      (void)integrate_dopri5(field, column({2.0}), opt);
      FAIL("expected an integration error");
    } catch (const IntegrationError& e) {
      CHECK((e.kind() == ErrorKind::kStiffness || e.kind() == ErrorKind::kDivergence));
      CHECK(e.time() <= 0.5 + 1e-4);
    }
  }
  CHECK_THROWS_KIND(integrate_euler(kIdentity, column({1.0}), 0), ErrorKind::kContract);
  CHECK_THROWS_KIND(solver_kind_from_string("rk4"), ErrorKind::kConfig);
}

TEST_CASE("solver dispatch") {
  SolverConfig s;
  s.kind = solver_kind_from_string("euler");
  s.steps = 100;
  CHECK(integrate(kIdentity, column({1.0}), s).final_state(0, 0) ==
        integrate_euler(kIdentity, column({1.0}), 100).final_state(0, 0));
  s.kind = SolverKind::kDopri5;
  CHECK(integrate(kIdentity, column({1.0}), s).nfe ==
        integrate_dopri5(kIdentity, column({1.0})).nfe);
}
