#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fsr/sched.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

/// velocity evaluation as a callable so samplers stay independent of the
/// network implementation
template <typename T>
using VelocityFn = std::function<Tensor<T>(const Tensor<T>& x, double t)>;

template <typename T>
struct Trajectory {
  // (t, x) from t = 1 down to t = 0
  std::vector<std::pair<double, Tensor<T>>> states;
  const Tensor<T>& final_state() const { return states.back().second; }
};

/// x + (t_to - t_from) * v
template <typename T>
Tensor<T> euler_step(const Tensor<T>& x, double t_from, double t_to, const Tensor<T>& v) {
  check_same_shape(x, v, "euler_step");
  Tensor<T> out = x;
  const T dt = static_cast<T>(t_to - t_from);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += dt * v.data[i];
  return out;
}

/// teacher estimate X̂_t = X_{t'} - (t'-t) * v_phi(X_{t'}, t')
template <typename T>
Tensor<T> teacher_step(const Tensor<T>& x_tprime, double t, double t_prime, const VelocityFn<T>& teacher) {
  if (t >= t_prime) throw std::invalid_argument("teacher_step: requires t < t_prime");
  return euler_step(x_tprime, t_prime, t, teacher(x_tprime, t_prime));
}

/// Euler integration down the reversed grid from t=1 to t=0; the final state
/// is the SR prediction.
template <typename T>
Trajectory<T> sample_ode(const Tensor<T>& x_lr, const VelocityFn<T>& net, const Scheduler& grid) {
  if (grid.grid.empty()) throw std::invalid_argument("sample_ode: empty grid");
  Trajectory<T> traj;
  Tensor<T> x = x_lr;
  double t = 1.0;
  traj.states.emplace_back(t, x);
  for (auto it = grid.grid.rbegin(); it != grid.grid.rend(); ++it) {
    const double t_from = *it;
    const double t_to = (it + 1 == grid.grid.rend()) ? 0.0 : *(it + 1);
    x = euler_step(x, t_from, t_to, net(x, t_from));
    traj.states.emplace_back(t_to, x);
  }
  return traj;
}

/// midpoint (RK2) integrator, kept as a test oracle for solver-order checks
template <typename T>
Tensor<T> midpoint_integrate(const Tensor<T>& x1, const VelocityFn<T>& net, int steps) {
  Tensor<T> x = x1;
  const double dt = -1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = 1.0 + k * dt;
    Tensor<T> v = net(x, t);
    Tensor<T> xm = x;
    for (int64_t i = 0; i < x.numel(); ++i) xm.data[i] += static_cast<T>(dt / 2) * v.data[i];
    Tensor<T> vm = net(xm, t + dt / 2);
    for (int64_t i = 0; i < x.numel(); ++i) x.data[i] += static_cast<T>(dt) * vm.data[i];
  }
  return x;
}

template <typename T>
Tensor<T> clamp01(Tensor<T> x) {
  for (auto& v : x.data) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return x;
}

}  // namespace fsr
