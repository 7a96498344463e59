#pragma once

#include <array>
#include <string>

#include "fsr/graph.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

enum class FlowKind { sr_flow, noise_to_hr, noised_lr_to_hr };

struct FlowVariant {
  FlowKind kind = FlowKind::sr_flow;
  double kappa = 0.2;  // noise level for noised_lr_to_hr
};

inline const char* flow_kind_name(FlowKind k) {
  switch (k) {
    case FlowKind::sr_flow: return "sr_flow";
    case FlowKind::noise_to_hr: return "noise_to_hr";
    case FlowKind::noised_lr_to_hr: return "noised_lr_to_hr";
  }
  return "?";
}

struct LossWeights {
  double lambda_p = 2.0;
  double lambda_cd = 0.1;
  double lambda_adv = 0.05;
};

// Sobel kernels, horizontal and vertical gradients.
template <typename T>
constexpr std::array<T, 9> sobel_x_kernel() {
  return {T(-1), T(0), T(1), T(-2), T(0), T(2), T(-1), T(0), T(1)};
}
template <typename T>
constexpr std::array<T, 9> sobel_y_kernel() {
  return {T(-1), T(-2), T(-1), T(0), T(0), T(0), T(1), T(2), T(1)};
}

// ---- value-level operations ----

/// x_t = (1 - t) * x_hr + t * x1
template <typename T>
Tensor<T> interp(const Tensor<T>& x_hr, const Tensor<T>& x1, double t) {
  check_same_shape(x_hr, x1, "interp");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("interp: t outside [0,1]: " + std::to_string(t));
  Tensor<T> out = x_hr;
  const T tt = static_cast<T>(t), omt = static_cast<T>(1.0 - t);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = omt * x_hr.data[i] + tt * x1.data[i];
  return out;
}

/// constant straight-path derivative x1 - x_hr
template <typename T>
Tensor<T> velocity_target(const Tensor<T>& x_hr, const Tensor<T>& x1) {
  check_same_shape(x_hr, x1, "velocity_target");
  Tensor<T> out = x1;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= x_hr.data[i];
  return out;
}

/// consistency function f = x_t - t * v, mapping a trajectory point to its origin
template <typename T>
Tensor<T> consistency_fn(const Tensor<T>& x_t, double t, const Tensor<T>& v) {
  check_same_shape(x_t, v, "consistency_fn");
  Tensor<T> out = x_t;
  const T tt = static_cast<T>(t);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= tt * v.data[i];
  return out;
}

/// depthwise Sobel with replicate padding (value form, for metrics)
template <typename T>
Tensor<T> sobel_filter(const Tensor<T>& x, bool vertical) {
  Graph<T> g;
  auto v = g.leaf(x, false);
  auto r = g.filter3x3_replicate(v, vertical ? sobel_y_kernel<T>() : sobel_x_kernel<T>());
  return g.value(r);
}

template <typename T>
double mse_value(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mse");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

/// mean |Sobel(a) - Sobel(b)| averaged over both orientations; the documented
/// LPIPS stand-in.
template <typename T>
double perceptual_surrogate(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "perceptual_surrogate");
  double total = 0.0;
  for (int orient = 0; orient < 2; ++orient) {
    const Tensor<T> ga = sobel_filter(a, orient == 1);
    const Tensor<T> gb = sobel_filter(b, orient == 1);
    double s = 0.0;
    for (int64_t i = 0; i < ga.numel(); ++i)
      s += std::abs(static_cast<double>(ga.data[i]) - static_cast<double>(gb.data[i]));
    total += s / static_cast<double>(ga.numel());
  }
  return total / 2.0;
}

/// MSE + lambda_p * gradient-difference surrogate (value form)
template <typename T>
double flow_loss_value(const Tensor<T>& x_hat, const Tensor<T>& x_hr, double lambda_p) {
  return mse_value(x_hat, x_hr) + lambda_p * perceptual_surrogate(x_hat, x_hr);
}

// ---- graph-level operations (differentiable) ----

template <typename T>
typename Graph<T>::Var consistency_fn_g(Graph<T>& g, typename Graph<T>::Var x_t, double t,
                                        typename Graph<T>::Var v) {
  return g.sub(x_t, g.scale(v, static_cast<T>(t)));
}

template <typename T>
typename Graph<T>::Var mse_g(Graph<T>& g, typename Graph<T>::Var a, typename Graph<T>::Var b) {
  return g.mean(g.square(g.sub(a, b)));
}

template <typename T>
typename Graph<T>::Var surrogate_g(Graph<T>& g, typename Graph<T>::Var a, typename Graph<T>::Var b) {
  auto dx = g.mean(g.abs(g.sub(g.filter3x3_replicate(a, sobel_x_kernel<T>()),
                               g.filter3x3_replicate(b, sobel_x_kernel<T>()))));
  auto dy = g.mean(g.abs(g.sub(g.filter3x3_replicate(a, sobel_y_kernel<T>()),
                               g.filter3x3_replicate(b, sobel_y_kernel<T>()))));
  return g.scale(g.add(dx, dy), T(0.5));
}

template <typename T>
typename Graph<T>::Var flow_loss_g(Graph<T>& g, typename Graph<T>::Var x_hat,
                                   typename Graph<T>::Var x_hr, double lambda_p) {
  return g.add(mse_g(g, x_hat, x_hr), g.scale(surrogate_g(g, x_hat, x_hr), static_cast<T>(lambda_p)));
}

/// mean squared distance; gradients flow only through student_pred (target
/// must be a non-grad leaf).
template <typename T>
typename Graph<T>::Var cd_loss_g(Graph<T>& g, typename Graph<T>::Var student_pred,
                                 typename Graph<T>::Var target_pred) {
  return mse_g(g, student_pred, target_pred);
}

/// consistency term + HR term; hr_perceptual selects between the
/// MSE+surrogate distance and plain MSE for the HR term.
template <typename T>
typename Graph<T>::Var hrcd_loss_g(Graph<T>& g, typename Graph<T>::Var student_at_tprime,
                                   typename Graph<T>::Var target_at_t,
                                   typename Graph<T>::Var student_at_t,
                                   typename Graph<T>::Var x_hr, double lambda_p,
                                   bool hr_perceptual = true) {
  auto cd = cd_loss_g(g, student_at_tprime, target_at_t);
  auto hr = hr_perceptual ? flow_loss_g(g, student_at_t, x_hr, lambda_p) : mse_g(g, student_at_t, x_hr);
  return g.add(cd, hr);
}

template <typename T>
struct HingeLosses {
  typename Graph<T>::Var disc;
  typename Graph<T>::Var gen;
};

/// disc = mean max(0, 1 - d_real) + mean max(0, 1 + d_fake); gen = -mean d_fake
template <typename T>
HingeLosses<T> hinge_losses_g(Graph<T>& g, typename Graph<T>::Var d_real, typename Graph<T>::Var d_fake) {
  auto dl = g.add(g.mean(g.relu(g.affine(d_real, T(-1), T(1)))),
                  g.mean(g.relu(g.add_scalar(d_fake, T(1)))));
  auto gl = g.neg(g.mean(d_fake));
  return {dl, gl};
}

/// value form of the hinge pair for reporting
template <typename T>
std::pair<double, double> hinge_losses_value(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  double dl = 0.0, gl = 0.0;
  for (int64_t i = 0; i < d_real.numel(); ++i)
    dl += std::max(0.0, 1.0 - static_cast<double>(d_real.data[i]));
  dl /= static_cast<double>(d_real.numel());
  double df = 0.0;
  for (int64_t i = 0; i < d_fake.numel(); ++i) {
    df += std::max(0.0, 1.0 + static_cast<double>(d_fake.data[i]));
    gl -= static_cast<double>(d_fake.data[i]);
  }
  dl += df / static_cast<double>(d_fake.numel());
  gl /= static_cast<double>(d_fake.numel());
  return {dl, gl};
}

/// L = L_flow + lambda_cd * L_hrcd + lambda_adv * L_adv
inline double total_loss(double l_flow, double l_hrcd, double l_adv, const LossWeights& w) {
  return l_flow + w.lambda_cd * l_hrcd + w.lambda_adv * l_adv;
}

}  // namespace fsr
