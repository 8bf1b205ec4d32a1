#pragma once

#include <string>
#include <vector>

#include "flowmatch/rng.hpp"
#include "flowmatch/types.hpp"

namespace flowmatch {

enum class Activation { kElu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

using ParameterSet = std::vector<Layer>;

// Time-conditioned velocity field v(t, x): an MLP on the concatenated input
// (x, t) with ELU hidden layers and a linear output layer.
class VectorFieldNet {
 public:
  VectorFieldNet() = default;
  VectorFieldNet(int state_dim, std::vector<int> hidden_dims,
                 Activation activation = Activation::kElu);

  // Uniform(-a, a) weights and biases with a = kInitGain / sqrt(fan_in).
  static constexpr double kInitGain = 1.0;
  static VectorFieldNet initialized(int state_dim, std::vector<int> hidden_dims,
                                    Rng& rng, bool zero_final_layer = false);

  int state_dim() const { return state_dim_; }
  int input_dim() const { return state_dim_ + 1; }
  const std::vector<int>& hidden_dims() const { return hidden_dims_; }
  Activation activation() const { return activation_; }

  ParameterSet& layers() { return layers_; }
  const ParameterSet& layers() const { return layers_; }

  Vector<double> forward(double t, const Vector<double>& x) const;
  // Row i of the result is v(t(i), xs.row(i)).
  Points<double> forward_batch(const Vector<double>& t, const Points<double>& xs) const;
  // Shared time for every row; this is the signature the ODE solvers use.
  Points<double> operator()(double t, const Points<double>& xs) const;

  Index num_parameters() const;
  Vector<double> flatten() const;
  void unflatten(const Vector<double>& flat);

  // Shape and finiteness checks; throws a contract error.
  void check() const;

 private:
  int state_dim_ = 0;
  std::vector<int> hidden_dims_;
  Activation activation_ = Activation::kElu;
  ParameterSet layers_;
};

ParameterSet zeros_like(const ParameterSet& params);
Vector<double> flatten(const ParameterSet& params);

// One regression example: the field at (t, x) should equal `target`, with
// squared error scaled by `weight`.
struct RegressionBatch {
  Vector<double> t;
  Points<double> x;
  Points<double> target;
  Vector<double> weight;

  Index size() const { return t.size(); }
};

struct LossAndGrad {
  double loss = 0.0;
  ParameterSet grads;
};

// loss = (1/n) sum_i weight_i |v(t_i, x_i) - target_i|^2 and its exact
// reverse-mode gradient. Throws NumericalError with the offending row on a
// non-finite residual.
LossAndGrad loss_and_grad(const VectorFieldNet& net, const RegressionBatch& batch);
double loss_only(const VectorFieldNet& net, const RegressionBatch& batch);

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ParameterSet m;
  ParameterSet v;

  static AdamState for_net(const VectorFieldNet& net, double lr = 1e-3);
};

// Bias-corrected Adam; updates `net` and `state` in place.
void adam_step(VectorFieldNet& net, const ParameterSet& grads, AdamState& state);

}  // namespace flowmatch
