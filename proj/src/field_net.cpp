#include "flowmatch/field_net.hpp"

#include <cmath>

#include "flowmatch/errors.hpp"

namespace flowmatch {

namespace {

// Column j of the result depends only on column j of `in` (coefficient-based
// product), so batched and single evaluations agree bit for bit.
Eigen::MatrixXd affine(const Layer& layer, const Eigen::MatrixXd& in) {
  Eigen::MatrixXd out;
  out.noalias() = layer.weight.lazyProduct(in);
  out.colwise() += layer.bias;
  return out;
}

void elu_inplace(Eigen::MatrixXd& a) {
  a = a.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

// Input features, one column per example: (x, t).
Eigen::MatrixXd input_features(const Vector<double>& t, const Points<double>& xs) {
  Eigen::MatrixXd in(xs.cols() + 1, xs.rows());
  in.topRows(xs.cols()) = xs.transpose();
  in.row(xs.cols()) = t.transpose();
  return in;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = act(pre[l])
};

ForwardCache forward_cached(const ParameterSet& layers, Eigen::MatrixXd input) {
  ForwardCache cache;
  cache.post.push_back(std::move(input));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd a = affine(layers[l], cache.post.back());
    cache.pre.push_back(a);
    if (l + 1 < layers.size()) elu_inplace(a);
    cache.post.push_back(std::move(a));
  }
  return cache;
}

void check_batch(const VectorFieldNet& net, const RegressionBatch& b) {
  const Index n = b.t.size();
  require(n >= 1, ErrorKind::kContract, "loss_and_grad: empty batch");
  require(b.x.rows() == n && b.target.rows() == n && b.weight.size() == n,
          ErrorKind::kContract, "loss_and_grad: batch fields have different lengths");
  require(b.x.cols() == net.state_dim() && b.target.cols() == net.state_dim(),
          ErrorKind::kContract, "loss_and_grad: state dimension mismatch");
  for (Index i = 0; i < n; ++i)
    require(b.weight(i) >= 0.0, ErrorKind::kContract,
            "loss_and_grad: negative weight at index " + std::to_string(i));
}

// Residuals (d x n) and per-example weighted squared errors.
double weighted_loss(const Eigen::MatrixXd& out, const RegressionBatch& b,
                     Eigen::MatrixXd& residual) {
  residual = out - b.target.transpose();
  const Eigen::RowVectorXd sq = residual.colwise().squaredNorm();
  double total = 0.0;
  for (Index i = 0; i < sq.size(); ++i) {
    const double term = b.weight(i) * sq(i);
    if (!std::isfinite(term))
      throw NumericalError("loss_and_grad: non-finite residual at index " +
                               std::to_string(i),
                           i);
    total += term;
  }
  return total / static_cast<double>(sq.size());
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kElu: return "elu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::kElu;
  throw_error(ErrorKind::kConfig, "unknown activation '" + name + "'");
}

VectorFieldNet::VectorFieldNet(int state_dim, std::vector<int> hidden_dims,
                               Activation activation)
    : state_dim_(state_dim), hidden_dims_(std::move(hidden_dims)), activation_(activation) {
  require(state_dim_ >= 1, ErrorKind::kContract, "VectorFieldNet: state_dim must be >= 1");
  int in = state_dim_ + 1;
  for (int h : hidden_dims_) {
    require(h >= 1, ErrorKind::kContract, "VectorFieldNet: hidden width must be >= 1");
    layers_.push_back({Eigen::MatrixXd::Zero(h, in), Eigen::VectorXd::Zero(h)});
    in = h;
  }
  layers_.push_back({Eigen::MatrixXd::Zero(state_dim_, in), Eigen::VectorXd::Zero(state_dim_)});
}

VectorFieldNet VectorFieldNet::initialized(int state_dim, std::vector<int> hidden_dims,
                                           Rng& rng, bool zero_final_layer) {
  VectorFieldNet net(state_dim, std::move(hidden_dims));
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    Layer& layer = net.layers_[l];
    if (zero_final_layer && l + 1 == net.layers_.size()) continue;
    const double a = kInitGain / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-a, a);
    for (Index j = 0; j < layer.weight.cols(); ++j)
      for (Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = u(rng);
  }
  return net;
}

void VectorFieldNet::check() const {
  require(!layers_.empty(), ErrorKind::kContract, "VectorFieldNet: no layers");
  Index in = input_dim();
  for (const Layer& layer : layers_) {
    require(layer.weight.cols() == in && layer.bias.size() == layer.weight.rows(),
            ErrorKind::kContract, "VectorFieldNet: layer shapes do not chain");
    require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::kContract,
            "VectorFieldNet: non-finite parameter");
    in = layer.weight.rows();
  }
  require(in == state_dim_, ErrorKind::kContract, "VectorFieldNet: output dimension mismatch");
}

Points<double> VectorFieldNet::forward_batch(const Vector<double>& t,
                                             const Points<double>& xs) const {
  require(xs.cols() == state_dim_ && t.size() == xs.rows(), ErrorKind::kContract,
          "forward: input shape mismatch");
  Eigen::MatrixXd h = input_features(t, xs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = affine(layers_[l], h);
    if (l + 1 < layers_.size()) elu_inplace(h);
  }
  return h.transpose();
}

Points<double> VectorFieldNet::operator()(double t, const Points<double>& xs) const {
  return forward_batch(Vector<double>::Constant(xs.rows(), t), xs);
}

Vector<double> VectorFieldNet::forward(double t, const Vector<double>& x) const {
  require(x.size() == state_dim_, ErrorKind::kContract, "forward: state dimension mismatch");
  return forward_batch(Vector<double>::Constant(1, t), x.transpose()).row(0).transpose();
}

Index VectorFieldNet::num_parameters() const {
  Index total = 0;
  for (const Layer& l : layers_) total += l.weight.size() + l.bias.size();
  return total;
}

Vector<double> flatten(const ParameterSet& params) {
  Index total = 0;
  for (const Layer& l : params) total += l.weight.size() + l.bias.size();
  Vector<double> flat(total);
  Index k = 0;
  for (const Layer& l : params) {
    // row-major weights, then bias
    for (Index i = 0; i < l.weight.rows(); ++i)
      for (Index j = 0; j < l.weight.cols(); ++j) flat(k++) = l.weight(i, j);
    for (Index i = 0; i < l.bias.size(); ++i) flat(k++) = l.bias(i);
  }
  return flat;
}

Vector<double> VectorFieldNet::flatten() const { return flowmatch::flatten(layers_); }

void VectorFieldNet::unflatten(const Vector<double>& flat) {
  require(flat.size() == num_parameters(), ErrorKind::kContract,
          "unflatten: parameter count mismatch");
  Index k = 0;
  for (Layer& l : layers_) {
    for (Index i = 0; i < l.weight.rows(); ++i)
      for (Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat(k++);
    for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = flat(k++);
  }
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const Layer& l : params)
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                   Eigen::VectorXd::Zero(l.bias.size())});
  return out;
}

double loss_only(const VectorFieldNet& net, const RegressionBatch& batch) {
  check_batch(net, batch);
  const Eigen::MatrixXd out = net.forward_batch(batch.t, batch.x).transpose();
  Eigen::MatrixXd residual;
  return weighted_loss(out, batch, residual);
}

LossAndGrad loss_and_grad(const VectorFieldNet& net, const RegressionBatch& batch) {
  check_batch(net, batch);
  const ParameterSet& layers = net.layers();
  const ForwardCache cache = forward_cached(layers, input_features(batch.t, batch.x));

  LossAndGrad result;
  Eigen::MatrixXd residual;
  result.loss = weighted_loss(cache.post.back(), batch, residual);
  result.grads = zeros_like(layers);

  const double n = static_cast<double>(batch.size());
  // dL/d(output) = (2/n) w_i r_i
  Eigen::MatrixXd delta = residual * (batch.weight * (2.0 / n)).asDiagonal();
  for (std::size_t l = layers.size(); l-- > 0;) {
    result.grads[l].weight.noalias() = delta * cache.post[l].transpose();
    result.grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back;
    back.noalias() = layers[l].weight.transpose() * delta;
    // ELU'(a) = 1 for a > 0, exp(a) = elu(a) + 1 otherwise
    const Eigen::MatrixXd& pre = cache.pre[l - 1];
    const Eigen::MatrixXd& post = cache.post[l];
    delta = back.array() * (pre.array() > 0.0).select(1.0, post.array() + 1.0);
  }
  return result;
}

AdamState AdamState::for_net(const VectorFieldNet& net, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = zeros_like(net.layers());
  s.v = zeros_like(net.layers());
  return s;
}

void adam_step(VectorFieldNet& net, const ParameterSet& grads, AdamState& state) {
  ParameterSet& params = net.layers();
  require(grads.size() == params.size(), ErrorKind::kContract,
          "adam_step: gradient shape mismatch");
  if (state.m.empty()) state.m = zeros_like(params);
  if (state.v.empty()) state.v = zeros_like(params);

  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double b1 = state.beta1;
  const double b2 = state.beta2;

  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    require(g.rows() == p.rows() && g.cols() == p.cols(), ErrorKind::kContract,
            "adam_step: gradient shape mismatch");
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight);
    update(params[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
  }
}

}  // namespace flowmatch
