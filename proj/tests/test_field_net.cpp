#include <cmath>
#include <limits>

#include "doctest.h"
#include "flowmatch/field_net.hpp"
#include "test_util.hpp"

using namespace flowmatch;

namespace {

RegressionBatch random_batch(int d, Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RegressionBatch b;
  b.t.resize(n);
  b.x.resize(n, d);
  b.target.resize(n, d);
  b.weight.resize(n);
  for (Index i = 0; i < n; ++i) {
    b.t(i) = unif(rng);
    b.weight(i) = unif(rng) * 2.0;
    for (int j = 0; j < d; ++j) {
      b.x(i, j) = normal(rng);
      b.target(i, j) = normal(rng);
    }
  }
  return b;
}

// 1 input coordinate, hidden {1}: v = w2 * elu(a*x + b*t + c) + d.
VectorFieldNet tiny_net(double a, double b, double c, double w2, double d) {
  VectorFieldNet net(1, {1});
  net.layers()[0].weight << a, b;
  net.layers()[0].bias << c;
  net.layers()[1].weight << w2;
  net.layers()[1].bias << d;
  return net;
}

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

}  // namespace

TEST_CASE("zero final layer gives the zero field") {
  Rng rng = make_stream(1, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {64, 64}, rng, true);
  Points<double> xs = Points<double>::Random(10, 2);
  const Points<double> v = net(0.3, xs);
  CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand evaluation of a two-unit net") {
  VectorFieldNet net(1, {2});
  net.layers()[0].weight << 1.0, 0.0, 0.0, 1.0;  // h = (x, t)
  net.layers()[0].bias << 0.0, 0.0;
  net.layers()[1].weight << 1.0, 2.0;
  net.layers()[1].bias << 0.5;
  Vector<double> x(1);
  x << 0.3;
  CHECK(net.forward(0.4, x)(0) == doctest::Approx(0.3 + 0.8 + 0.5).epsilon(1e-15));
  x << -1.0;
  CHECK(net.forward(0.4, x)(0) == doctest::Approx(std::expm1(-1.0) + 0.8 + 0.5).epsilon(1e-15));
}

TEST_CASE("batch evaluation equals single evaluations exactly") {
  Rng rng = make_stream(2, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {64, 64}, rng);
  Rng data = make_stream(2, StreamPurpose::kData);
  const RegressionBatch b = random_batch(2, 37, data);
  const Points<double> batch = net.forward_batch(b.t, b.x);
  for (Index i = 0; i < b.size(); ++i) {
    const Vector<double> single = net.forward(b.t(i), b.x.row(i).transpose());
    CHECK(single(0) == batch(i, 0));
    CHECK(single(1) == batch(i, 1));
  }
}

TEST_CASE("shape mismatches are contract errors") {
  VectorFieldNet net(2, {4});
  Vector<double> x(3);
  x.setZero();
  CHECK_THROWS_KIND(net.forward(0.0, x), ErrorKind::kContract);
  Vector<double> flat(3);
  CHECK_THROWS_KIND(net.unflatten(flat), ErrorKind::kContract);
  net.layers()[1].weight.resize(2, 3);
  CHECK_THROWS_KIND(net.check(), ErrorKind::kContract);
}

TEST_CASE("zero weights annihilate loss and gradients") {
  Rng rng = make_stream(3, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {16, 16}, rng);
  Rng data = make_stream(3, StreamPurpose::kData);
  RegressionBatch b = random_batch(2, 12, data);
  b.weight.setZero();
  const LossAndGrad lg = loss_and_grad(net, b);
  CHECK(lg.loss == 0.0);
  CHECK(flatten(lg.grads).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-differentiated single-unit net") {
  RegressionBatch b;
  b.t = Vector<double>::Constant(1, 0.25);
  b.x = Points<double>::Constant(1, 1, 0.5);
  b.target = Points<double>::Constant(1, 1, 1.5);
  b.weight = Vector<double>::Ones(1);

  SUBCASE("zero output layer") {
    const VectorFieldNet net = tiny_net(0.7, -0.2, 0.1, 0.0, 0.0);
    const LossAndGrad lg = loss_and_grad(net, b);
    CHECK(lg.loss == doctest::Approx(1.5 * 1.5).epsilon(1e-15));
    const double h = elu(0.7 * 0.5 - 0.2 * 0.25 + 0.1);
    CHECK(lg.grads[1].weight(0, 0) == doctest::Approx(-2.0 * 1.5 * h).epsilon(1e-14));
    CHECK(lg.grads[1].bias(0) == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(lg.grads[0].weight.cwiseAbs().maxCoeff() == 0.0);
    CHECK(lg.grads[0].bias(0) == 0.0);
  }
  SUBCASE("negative pre-activation") {
    const double a = -1.0, bt = 0.5, c = -0.3, w2 = 1.7, d = 0.2;
    const VectorFieldNet net = tiny_net(a, bt, c, w2, d);
    const double z = a * 0.5 + bt * 0.25 + c;  // < 0
    const double v = w2 * elu(z) + d;
    const double dv = 2.0 * (v - 1.5);
    const LossAndGrad lg = loss_and_grad(net, b);
    CHECK(lg.loss == doctest::Approx((v - 1.5) * (v - 1.5)).epsilon(1e-14));
    CHECK(lg.grads[0].weight(0, 0) == doctest::Approx(dv * w2 * std::exp(z) * 0.5).epsilon(1e-13));
    CHECK(lg.grads[0].weight(0, 1) == doctest::Approx(dv * w2 * std::exp(z) * 0.25).epsilon(1e-13));
    CHECK(lg.grads[0].bias(0) == doctest::Approx(dv * w2 * std::exp(z)).epsilon(1e-13));
  }
}

TEST_CASE("gradients match central finite differences") {
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng = make_stream(100 + trial, StreamPurpose::kInit);
    VectorFieldNet net = VectorFieldNet::initialized(2, {16, 16}, rng);
    Rng data = make_stream(100 + trial, StreamPurpose::kData);
    const RegressionBatch b = random_batch(2, 24, data);
    const Vector<double> g = flatten(loss_and_grad(net, b).grads);
    const Vector<double> theta = net.flatten();
    std::uniform_int_distribution<Index> pick(0, theta.size() - 1);
    double worst = 0.0;
    for (int k = 0; k < 64; ++k) {
      const Index i = pick(rng);
      const double h = 1e-5;
      Vector<double> p = theta;
      p(i) += h;
      net.unflatten(p);
      const double up = loss_only(net, b);
      p(i) = theta(i) - h;
      net.unflatten(p);
      const double down = loss_only(net, b);
      net.unflatten(theta);
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("loss and gradients scale linearly with the weights") {
  Rng rng = make_stream(4, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {32, 32}, rng);
  Rng data = make_stream(4, StreamPurpose::kData);
  RegressionBatch b = random_batch(2, 20, data);
  const LossAndGrad base = loss_and_grad(net, b);
  for (double k : {0.125, 3.0, 1e6}) {
    RegressionBatch scaled = b;
    scaled.weight *= k;
    const LossAndGrad lg = loss_and_grad(net, scaled);
    CHECK(std::abs(lg.loss - k * base.loss) <= 1e-12 * k * base.loss);
    const Vector<double> g0 = flatten(base.grads), g1 = flatten(lg.grads);
    for (Index i = 0; i < g0.size(); ++i)
      CHECK(std::abs(g1(i) - k * g0(i)) <= 1e-12 * std::abs(k * g0(i)) + 1e-300);
  }
}

TEST_CASE("non-finite residual reports the offending row") {
  Rng rng = make_stream(5, StreamPurpose::kInit);
  const VectorFieldNet net = VectorFieldNet::initialized(2, {8}, rng);
  Rng data = make_stream(5, StreamPurpose::kData);
  RegressionBatch b = random_batch(2, 6, data);
  b.target(4, 1) = std::numeric_limits<double>::infinity();
  try {
    (void)loss_and_grad(net, b);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.index() == 4);
  }
}

TEST_CASE("adam leaves parameters fixed under zero gradients") {
  Rng rng = make_stream(6, StreamPurpose::kInit);
  VectorFieldNet net = VectorFieldNet::initialized(2, {8, 8}, rng);
  AdamState state = AdamState::for_net(net);
  const Vector<double> before = net.flatten();
  adam_step(net, zeros_like(net.layers()), state);
  CHECK(state.step == 1);
  CHECK(net.flatten() == before);
}

TEST_CASE("first adam step matches the scalar closed form") {
  Rng rng = make_stream(7, StreamPurpose::kInit);
  VectorFieldNet net = VectorFieldNet::initialized(1, {3}, rng);
  AdamState state = AdamState::for_net(net, 0.01);
  ParameterSet grads = zeros_like(net.layers());
  grads[0].weight(1, 0) = 0.37;
  grads[1].bias(0) = -2.5;
  const Vector<double> before = net.flatten();
  adam_step(net, grads, state);
  const Vector<double> delta = net.flatten() - before;
  // m_hat = g, v_hat = g^2, so the step is -lr g / (|g| + eps).
  const Vector<double> g = flatten(grads);
  for (Index i = 0; i < g.size(); ++i) {
    const double expected = -0.01 * g(i) / (std::abs(g(i)) + 1e-8);
    CHECK(delta(i) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adam treats identical parameters identically") {
  VectorFieldNet net(1, {2});
  net.layers()[0].weight.setConstant(0.5);
  net.layers()[0].bias.setConstant(0.1);
  net.layers()[1].weight.setConstant(0.5);
  net.layers()[1].bias.setZero();
  AdamState state = AdamState::for_net(net);
  for (int s = 0; s < 5; ++s) {
    ParameterSet g = zeros_like(net.layers());
    g[0].weight.setConstant(0.3 * (s + 1));
    adam_step(net, g, state);
  }
  const auto& w = net.layers()[0].weight;
  CHECK(w(0, 0) == w(1, 0));
  CHECK(w(0, 1) == w(1, 1));
}

TEST_CASE("initialization is deterministic per seed") {
  Rng a = make_stream(8, StreamPurpose::kInit);
  Rng b = make_stream(8, StreamPurpose::kInit);
  CHECK(VectorFieldNet::initialized(2, {64, 64}, a).flatten() ==
        VectorFieldNet::initialized(2, {64, 64}, b).flatten());
}
