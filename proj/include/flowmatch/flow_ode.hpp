#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flowmatch/errors.hpp"
#include "flowmatch/types.hpp"

namespace flowmatch {

// m trajectories integrated on a shared time grid from t = 0 to t = 1. A field
// is any callable `Points<double>(double t, const Points<double>& xs)` that
// maps an m x d state to m x d velocities (VectorFieldNet qualifies).
struct Trajectory {
  std::vector<double> times;                // strictly increasing, 0 ... 1
  std::vector<Points<double>> states;       // states[k] at times[k] (if recorded)
  Points<double> final_state;
  std::vector<double> eval_times;           // where |v|^2 was sampled
  std::vector<Vector<double>> eval_sq_norms;
  Vector<double> path_energy;               // integrator's own running estimate
  long nfe = 0;
  long accepted = 0;
  long rejected = 0;
  std::vector<double> step_errors;          // scaled error norm per accepted step

  Index count() const { return final_state.rows(); }
};

// Trapezoidal rule over the recorded field norms. The interval after the last
// recorded evaluation is held at that value, so Euler trajectories (which never
// evaluate at t = 1) need no extra field evaluation.
inline Vector<double> path_energy(const Trajectory& traj) {
  require(!traj.eval_times.empty(), ErrorKind::kContract,
          "path_energy: trajectory has no recorded field norms");
  const std::size_t k = traj.eval_times.size();
  Vector<double> e = traj.eval_sq_norms.front() * traj.eval_times.front();
  for (std::size_t i = 1; i < k; ++i) {
    const double h = traj.eval_times[i] - traj.eval_times[i - 1];
    e += 0.5 * h * (traj.eval_sq_norms[i - 1] + traj.eval_sq_norms[i]);
  }
  e += (1.0 - traj.eval_times.back()) * traj.eval_sq_norms.back();
  return e;
}

namespace detail {

inline void check_finite(const Points<double>& x, long step, double t) {
  if (!x.allFinite())
    throw IntegrationError(ErrorKind::kDivergence,
                           "integration diverged at step " + std::to_string(step) +
                               " (t = " + std::to_string(t) + ")",
                           step, t);
}

inline double rms(const Eigen::ArrayXXd& a) {
  return std::sqrt(a.square().mean());
}

}  // namespace detail

// Fixed-step forward Euler; nfe = steps; path_energy is the left-endpoint sum.
template <typename Field>
Trajectory integrate_euler(const Field& field, const Points<double>& x0, long steps,
                           bool record_states = true) {
  require(steps >= 1, ErrorKind::kContract, "integrate_euler: steps must be >= 1");
  Trajectory traj;
  const double h = 1.0 / static_cast<double>(steps);
  Points<double> x = x0;
  traj.path_energy = Vector<double>::Zero(x0.rows());
  traj.times.push_back(0.0);
  if (record_states) traj.states.push_back(x);
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    const Points<double> v = field(t, x);
    ++traj.nfe;
    const Vector<double> sq = v.rowwise().squaredNorm();
    traj.eval_times.push_back(t);
    traj.eval_sq_norms.push_back(sq);
    traj.path_energy += h * sq;
    x += h * v;
    const double t_next = k + 1 == steps ? 1.0 : static_cast<double>(k + 1) / steps;
    detail::check_finite(x, k, t_next);
    traj.times.push_back(t_next);
    if (record_states) traj.states.push_back(x);
    ++traj.accepted;
  }
  traj.final_state = std::move(x);
  return traj;
}

struct Dopri5Options {
  double rtol = 1e-5;
  double atol = 1e-5;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  double beta = 0.04;  // PI controller memory exponent
  long max_steps = 1000000;
};

// Dormand-Prince 5(4) with PI step-size control and the Hairer initial-step
// heuristic. First-same-as-last: each attempted step costs 6 new evaluations;
// the initial derivative and the step-size probe add 2, so
// nfe = 6 * (accepted + rejected) + 2.
template <typename Field>
Trajectory integrate_dopri5(const Field& field, const Points<double>& x0,
                            const Dopri5Options& opt = {}, bool record_states = true) {
  require(opt.rtol > 0.0 && opt.atol > 0.0, ErrorKind::kContract,
          "integrate_dopri5: tolerances must be > 0");
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  // 5th minus embedded 4th order weights.
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  Trajectory traj;
  Points<double> x = x0;
  double t = 0.0;
  const auto scale = [&](const Points<double>& a) {
    return (opt.atol + opt.rtol * a.array().abs()).eval();
  };

  Points<double> k1 = field(t, x);
  traj.nfe = 1;
  detail::check_finite(k1, 0, t);

  // Initial step size.
  double h;
  {
    const Eigen::ArrayXXd sc = scale(x);
    const double d0 = detail::rms(x.array() / sc);
    const double d1 = detail::rms(k1.array() / sc);
    const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    const Points<double> probe = x + h0 * k1;
    const Points<double> f1 = field(t + h0, probe);
    ++traj.nfe;
    const double d2 = detail::rms((f1 - k1).array() / sc) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    h = std::min({100.0 * h0, h1, 1.0});
  }

  traj.path_energy = Vector<double>::Zero(x0.rows());
  traj.times.push_back(0.0);
  if (record_states) traj.states.push_back(x);
  traj.eval_times.push_back(0.0);
  traj.eval_sq_norms.push_back(k1.rowwise().squaredNorm());

  double err_prev = 1e-4;
  bool last_rejected = false;
  long attempts = 0;
  while (t < 1.0) {
    if (++attempts > opt.max_steps)
      throw IntegrationError(ErrorKind::kStiffness,
                             "integrate_dopri5: step budget exhausted at t = " + std::to_string(t),
                             attempts, t);
    if (h < 1e-14 * std::max(1.0, std::abs(t)))
      throw IntegrationError(ErrorKind::kStiffness,
                             "integrate_dopri5: step size underflow at t = " + std::to_string(t),
                             attempts, t);
    const bool final_step = t + h >= 1.0;
    if (final_step) h = 1.0 - t;

    const Points<double> k2 = field(t + c2 * h, x + h * (a21 * k1));
    const Points<double> k3 = field(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
    const Points<double> k4 = field(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Points<double> k5 =
        field(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Points<double> k6 =
        field(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Points<double> x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double t_new = final_step ? 1.0 : t + h;
    Points<double> k7 = field(t_new, x_new);
    traj.nfe += 6;

    const Points<double> err_vec =
        h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Eigen::ArrayXXd sc =
        opt.atol + opt.rtol * x.array().abs().max(x_new.array().abs());
    double err = detail::rms(err_vec.array() / sc);
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();

    if (err <= 1.0) {
      detail::check_finite(x_new, traj.accepted, t_new);
      const Vector<double> sq_new = k7.rowwise().squaredNorm();
      traj.path_energy += 0.5 * (t_new - t) * (traj.eval_sq_norms.back() + sq_new);
      traj.eval_times.push_back(t_new);
      traj.eval_sq_norms.push_back(sq_new);
      traj.step_errors.push_back(err);
      ++traj.accepted;
      t = t_new;
      x = std::move(x_new);
      k1 = std::move(k7);
      traj.times.push_back(t);
      if (record_states) traj.states.push_back(x);

      double factor = err == 0.0 ? opt.max_factor
                                 : opt.safety * std::pow(err, -(0.2 - 0.75 * opt.beta)) *
                                       std::pow(err_prev, opt.beta);
      factor = std::clamp(factor, opt.min_factor, opt.max_factor);
      if (last_rejected) factor = std::min(factor, 1.0);
      h *= factor;
      err_prev = std::max(err, 1e-4);
      last_rejected = false;
    } else {
      ++traj.rejected;
      const double factor =
          std::clamp(opt.safety * std::pow(err, -0.2), opt.min_factor, 1.0);
      h *= factor;
      last_rejected = true;
    }
  }
  traj.final_state = std::move(x);
  return traj;
}

enum class SolverKind { kEuler, kDopri5 };

inline const char* to_string(SolverKind k) { return k == SolverKind::kEuler ? "euler" : "dopri5"; }

inline SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "euler") return SolverKind::kEuler;
  if (name == "dopri5") return SolverKind::kDopri5;
  throw_error(ErrorKind::kConfig, "unknown solver '" + name + "'");
}

struct SolverConfig {
  SolverKind kind = SolverKind::kEuler;
  long steps = 100;  // Euler
  Dopri5Options dopri;
};

template <typename Field>
Trajectory integrate(const Field& field, const Points<double>& x0, const SolverConfig& solver,
                     bool record_states = false) {
  return solver.kind == SolverKind::kEuler
             ? integrate_euler(field, x0, solver.steps, record_states)
             : integrate_dopri5(field, x0, solver.dopri, record_states);
}

}  // namespace flowmatch
