#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsr/checkpoint.hpp"
#include "fsr/degrade.hpp"
#include "fsr/eval.hpp"
#include "fsr/flow.hpp"
#include "fsr/net.hpp"
#include "fsr/sample.hpp"
#include "fsr/sched.hpp"

namespace fsr {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Stage { flow_pretrain, consistency };
enum class Objective { cd, hr, hrcd };
enum class Pairing { fast_slow, n_interval, slow_only };

struct TrainConfig {
  Stage stage = Stage::flow_pretrain;
  int64_t steps = 800;
  int64_t batch = 8;
  double lr = 1e-3;
  double ema_mu = 0.999;
  LossWeights weights;
  FlowVariant flow_variant;
  SchedConfig sched;
  Pairing pairing = Pairing::fast_slow;
  int n_interval = 50;
  Objective objective = Objective::hrcd;
  bool hr_perceptual = true;  // HR term distance: MSE+surrogate vs plain MSE
  bool adv_enabled = false;
  uint64_t seed = 0;
  int64_t checkpoint_every = 500;
  int64_t eval_every = 0;  // 0 disables periodic eval

  void validate() const {
    if (steps < 0 || batch < 1) throw std::invalid_argument("TrainConfig: steps >= 0, batch >= 1 required");
    if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (ema_mu <= 0 || ema_mu >= 1) throw std::invalid_argument("TrainConfig: ema_mu must be in (0,1)");
    if (stage == Stage::consistency && batch < 2)
      throw std::invalid_argument("TrainConfig: consistency stage requires batch >= 2");
  }
};

using Params = std::map<std::string, Tensor<float>>;
using LossReport = std::map<std::string, double>;

// ---- optimizer ----

template <typename T>
struct AdamState {
  std::map<std::string, Tensor<T>> m, v;
  int64_t t = 0;
};

/// standard bias-corrected Adam update
template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& st, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor<T>& g = git->second;
    Tensor<T>& m = st.m.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
    Tensor<T>& v = st.v.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = beta1 * static_cast<double>(m.data[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v.data[i]) + (1.0 - beta2) * gi * gi;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      p.data[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

/// theta_minus <- mu * theta_minus + (1 - mu) * theta, elementwise
template <typename T>
void ema_update(std::map<std::string, Tensor<T>>& theta_minus,
                const std::map<std::string, Tensor<T>>& theta, double mu) {
  for (auto& [name, pm] : theta_minus) {
    const Tensor<T>& p = theta.at(name);
    check_same_shape(pm, p, "ema_update");
    for (int64_t i = 0; i < pm.numel(); ++i)
      pm.data[i] = static_cast<T>(mu * static_cast<double>(pm.data[i]) +
                                  (1.0 - mu) * static_cast<double>(p.data[i]));
  }
}

// ---- training state ----

template <typename T>
struct TrainState {
  VelocityField<T> theta;
  VelocityField<T> theta_minus;          // EMA target (consistency stage)
  VelocityField<T> phi;                  // frozen teacher (consistency stage)
  std::optional<Discriminator<T>> disc;
  AdamState<T> opt;
  AdamState<T> disc_opt;
  int64_t step = 0;
  uint64_t seed = 0;
};

namespace detail {

template <typename T>
std::map<std::string, Tensor<T>> named_grads(const GradMap<T>& grads, const NetVars<T>& vars) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, var] : vars.p) {
    auto it = grads.find(var.id);
    if (it != grads.end()) out.emplace(name, it->second);
  }
  return out;
}

template <typename T>
void accumulate(std::map<std::string, Tensor<T>>& into, const std::map<std::string, Tensor<T>>& add) {
  for (const auto& [name, g] : add) {
    auto [it, fresh] = into.try_emplace(name, g);
    if (!fresh)
      for (int64_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
  }
}

}  // namespace detail

/// Per-sample SR-flow objective: draw t, form x_t, predict v, map to the
/// origin through the consistency function and apply the image-space flow
/// loss. Gradients are scaled by grad_scale and accumulated.
template <typename T>
double flow_sample_backward(VelocityField<T>& net, const Tensor<T>& x_hr, const Tensor<T>& x_lr,
                            const TrainConfig& cfg, Rng& rng, double grad_scale,
                            std::map<std::string, Tensor<T>>& grad_accum) {
  const double t = sample_train_time(cfg.sched, rng);
  const Tensor<T> x1 = variant_endpoint(cfg.flow_variant, x_lr, rng);
  const Tensor<T> x_t = interp(x_hr, x1, t);

  Graph<T> g;
  auto vars = register_params(g, net.params, true);
  auto xt = g.leaf(x_t, false);
  auto hr = g.leaf(x_hr, false);
  std::optional<typename Graph<T>::Var> cond;
  if (net.cfg.condition_lr) cond = g.leaf(x_lr, false);
  auto v = net_forward(g, net.cfg, vars, xt, t, cond);
  auto x_hat = consistency_fn_g(g, xt, t, v);
  auto loss = flow_loss_g(g, x_hat, hr, cfg.weights.lambda_p);
  const double value = static_cast<double>(g.value(loss).item());
  auto grads = g.backward(g.scale(loss, static_cast<T>(grad_scale)));
  detail::accumulate(grad_accum, detail::named_grads(grads, vars));
  return value;
}

/// One SR-flow pretraining step over a batch; returns named loss values.
template <typename T>
LossReport flow_pretrain_step(TrainState<T>& state, const std::vector<const ImagePair*>& batch,
                              const TrainConfig& cfg, Rng& rng) {
  std::map<std::string, Tensor<T>> grad_accum;
  double loss_sum = 0.0;
  for (const ImagePair* pair : batch) {
    const Tensor<T> hr = pair->x_hr.template cast<T>();
    const Tensor<T> lr = pair->x_lr.template cast<T>();
    loss_sum += flow_sample_backward(state.theta, hr, lr, cfg, rng,
                                     1.0 / static_cast<double>(batch.size()), grad_accum);
  }
  const double loss = loss_sum / static_cast<double>(batch.size());
  if (!std::isfinite(loss))
    throw NumericError("non-finite flow loss at step " + std::to_string(state.step) +
                       " (seed " + std::to_string(state.seed) + ")");
  adam_step(state.theta.params, grad_accum, state.opt, cfg.lr);
  state.step += 1;
  return {{"flow", loss}, {"total", loss}};
}

inline TimePair draw_time_pair(const TrainConfig& cfg, const Scheduler& fast, const Scheduler& slow, Rng& rng) {
  switch (cfg.pairing) {
    case Pairing::fast_slow: return fast_slow_pair(fast, slow, rng);
    case Pairing::n_interval: return n_interval_pair(cfg.n_interval, rng);
    case Pairing::slow_only: return grid_adjacent_pair(slow, rng);
  }
  throw std::invalid_argument("draw_time_pair: unknown pairing");
}

/// One consistency step: the batch is split in half; group A keeps the flow
/// objective, group B runs HR-regularized consistency distillation against
/// the frozen teacher and the EMA target, with an optional adversarial term.
template <typename T>
LossReport consistency_step(TrainState<T>& state, const std::vector<const ImagePair*>& batch,
                            const TrainConfig& cfg, Rng& rng) {
  if (batch.size() < 2) throw std::invalid_argument("consistency_step: batch >= 2 required");
  const size_t n_a = batch.size() / 2;
  const size_t n_b = batch.size() - n_a;
  const Scheduler fast = shift_grid(uniform_grid(cfg.sched.fast_steps), cfg.sched.shift_s);
  const Scheduler slow = shift_grid(uniform_grid(cfg.sched.slow_steps), cfg.sched.shift_s);

  std::map<std::string, Tensor<T>> grad_accum, disc_grad_accum;
  double l_flow = 0.0, l_cd = 0.0, l_hr = 0.0, l_adv_g = 0.0, l_adv_d = 0.0;

  // group A: flow alignment
  for (size_t i = 0; i < n_a; ++i) {
    const Tensor<T> hr = batch[i]->x_hr.template cast<T>();
    const Tensor<T> lr = batch[i]->x_lr.template cast<T>();
    l_flow += flow_sample_backward(state.theta, hr, lr, cfg, rng, 1.0 / static_cast<double>(n_a), grad_accum);
  }
  l_flow /= static_cast<double>(n_a);

  // group B: consistency distillation
  for (size_t i = n_a; i < batch.size(); ++i) {
    const Tensor<T> hr = batch[i]->x_hr.template cast<T>();
    const Tensor<T> lr = batch[i]->x_lr.template cast<T>();
    const TimePair tp = draw_time_pair(cfg, fast, slow, rng);
    const Tensor<T> x1 = variant_endpoint(cfg.flow_variant, lr, rng);
    const Tensor<T> x_tp = interp(hr, x1, tp.t_prime);
    const Tensor<T>* cond_ptr = state.theta.cfg.condition_lr ? &lr : nullptr;

    // teacher one-step estimate; phi never receives gradients
    const Tensor<T> x_hat_t =
        teacher_step<T>(x_tp, tp.t, tp.t_prime,
                        [&](const Tensor<T>& x, double t) { return eval_velocity(state.phi, x, t, cond_ptr); });
    // gradient-free EMA target f_{theta^-}(x_hat_t, t)
    const Tensor<T> target =
        consistency_fn(x_hat_t, tp.t, eval_velocity(state.theta_minus, x_hat_t, tp.t, cond_ptr));

    Graph<T> g;
    auto vars = register_params(g, state.theta.params, true);
    auto xtp = g.leaf(x_tp, false);
    auto xhat = g.leaf(x_hat_t, false);
    auto hrv = g.leaf(hr, false);
    auto tgt = g.leaf(target, false);
    std::optional<typename Graph<T>::Var> cond;
    if (cond_ptr) cond = g.leaf(*cond_ptr, false);

    auto f_tprime = consistency_fn_g(g, xtp, tp.t_prime,
                                     net_forward(g, state.theta.cfg, vars, xtp, tp.t_prime, cond));
    typename Graph<T>::Var objective;
    double cd_val = 0.0, hr_val = 0.0;
    if (cfg.objective == Objective::cd) {
      objective = cd_loss_g(g, f_tprime, tgt);
      cd_val = static_cast<double>(g.value(objective).item());
    } else {
      auto f_t = consistency_fn_g(g, xhat, tp.t,
                                  net_forward(g, state.theta.cfg, vars, xhat, tp.t, cond));
      auto hr_term = cfg.hr_perceptual ? flow_loss_g(g, f_t, hrv, cfg.weights.lambda_p)
                                       : mse_g(g, f_t, hrv);
      if (cfg.objective == Objective::hr) {
        objective = hr_term;
      } else {
        auto cd_term = cd_loss_g(g, f_tprime, tgt);
        cd_val = static_cast<double>(g.value(cd_term).item());
        objective = g.add(cd_term, hr_term);
      }
      hr_val = static_cast<double>(g.value(hr_term).item());
    }
    l_cd += cd_val;
    l_hr += hr_val;

    auto total = g.scale(objective, static_cast<T>(cfg.weights.lambda_cd / static_cast<double>(n_b)));
    std::optional<NetVars<T>> disc_vars_frozen;
    if (cfg.adv_enabled) {
      disc_vars_frozen = register_params(g, state.disc->params, false);
      auto d_fake = disc_forward(g, state.disc->cfg, *disc_vars_frozen, f_tprime, tp.t_prime);
      auto gen = g.neg(g.mean(d_fake));
      l_adv_g += static_cast<double>(g.value(gen).item());
      total = g.add(total, g.scale(gen, static_cast<T>(cfg.weights.lambda_adv / static_cast<double>(n_b))));
    }
    auto grads = g.backward(total);
    detail::accumulate(grad_accum, detail::named_grads(grads, vars));

    // discriminator update on the detached one-step prediction
    if (cfg.adv_enabled) {
      Graph<T> dg;
      auto dvars = register_params(dg, state.disc->params, true);
      auto fake = dg.leaf(g.value(f_tprime), false);
      auto real = dg.leaf(hr, false);
      auto d_real = disc_forward(dg, state.disc->cfg, dvars, real, tp.t_prime);
      auto d_fake = disc_forward(dg, state.disc->cfg, dvars, fake, tp.t_prime);
      auto hinge = hinge_losses_g(dg, d_real, d_fake);
      l_adv_d += static_cast<double>(dg.value(hinge.disc).item());
      auto dgrads = dg.backward(dg.scale(hinge.disc, static_cast<T>(1.0 / static_cast<double>(n_b))));
      detail::accumulate(disc_grad_accum, detail::named_grads(dgrads, dvars));
    }
  }
  l_cd /= static_cast<double>(n_b);
  l_hr /= static_cast<double>(n_b);
  l_adv_g /= static_cast<double>(n_b);
  l_adv_d /= static_cast<double>(n_b);
  const double l_obj = (cfg.objective == Objective::cd) ? l_cd
                       : (cfg.objective == Objective::hr) ? l_hr
                                                          : l_cd + l_hr;
  const double total = l_flow + cfg.weights.lambda_cd * l_obj +
                       (cfg.adv_enabled ? cfg.weights.lambda_adv * l_adv_g : 0.0);
  if (!std::isfinite(total))
    throw NumericError("non-finite consistency loss at step " + std::to_string(state.step) +
                       " (seed " + std::to_string(state.seed) + ")");

  adam_step(state.theta.params, grad_accum, state.opt, cfg.lr);
  ema_update(state.theta_minus.params, state.theta.params, cfg.ema_mu);
  if (cfg.adv_enabled) adam_step(state.disc->params, disc_grad_accum, state.disc_opt, cfg.lr);
  state.step += 1;

  LossReport report{{"flow", l_flow}, {"cd", l_cd},       {"hr", l_hr},       {"hrcd", l_cd + l_hr},
                    {"adv_g", l_adv_g}, {"adv_d", l_adv_d}, {"total", total}};
  return report;
}

}  // namespace fsr
