#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsr/graph.hpp"
#include "fsr/rng.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

struct NetConfig {
  int64_t in_channels = 3;
  int64_t base_channels = 16;
  int64_t depth = 2;  // <= 3 at desk scale
  int64_t time_embed_dim = 64;
  bool condition_lr = false;

  void validate() const {
    if (in_channels < 1 || base_channels < 1 || depth < 1 || time_embed_dim < 1)
      throw std::invalid_argument("NetConfig: all fields must be positive");
    if (depth > 3) throw std::invalid_argument("NetConfig: depth must be <= 3");
    if (time_embed_dim % 2) throw std::invalid_argument("NetConfig: time_embed_dim must be even");
  }
};

/// sinusoidal features [sin(w_k t) ..., cos(w_k t) ...] with geometric
/// frequencies from 1 to 1000, shaped [1, dim, 1, 1]
template <typename T>
Tensor<T> time_embed(double t, int64_t dim) {
  if (dim < 2 || dim % 2) throw std::invalid_argument("time_embed: dim must be even and >= 2");
  const int64_t half = dim / 2;
  Tensor<T> e({1, dim, 1, 1});
  for (int64_t k = 0; k < half; ++k) {
    const double w = (half == 1) ? 1.0 : std::pow(1000.0, static_cast<double>(k) / static_cast<double>(half - 1));
    e.data[static_cast<size_t>(k)] = static_cast<T>(std::sin(w * t));
    e.data[static_cast<size_t>(half + k)] = static_cast<T>(std::cos(w * t));
  }
  return e;
}

namespace detail {

template <typename T>
Tensor<T> he_normal(std::vector<int64_t> shape, Rng& rng) {
  Tensor<T> w(std::move(shape));
  const int64_t fan_in = w.shape[1] * w.shape[2] * w.shape[3];
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(std * rng.normal());
  return w;
}

}  // namespace detail

/// Parameterized velocity field v_theta(X_t, t [, X_LR]): a small U-shaped
/// time-conditioned conv net. Parameter shapes are fully determined by the
/// config; the final 3x3 conv is zero-initialized so the untrained one-step
/// prediction is the identity restoration.
template <typename T>
struct VelocityField {
  NetConfig cfg;
  std::map<std::string, Tensor<T>> params;

  static VelocityField init(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    VelocityField net;
    net.cfg = cfg;
    Rng rng(splitmix64(seed));
    const int64_t cin = cfg.in_channels * (cfg.condition_lr ? 2 : 1);
    auto conv = [&](const std::string& name, int64_t o, int64_t i, int64_t k) {
      net.params[name + ".w"] = detail::he_normal<T>({o, i, k, k}, rng);
      net.params[name + ".b"] = Tensor<T>::zeros({o});
    };
    conv("stem", cfg.base_channels, cin, 3);
    for (int64_t l = 0; l < cfg.depth; ++l) {
      const int64_t c = cfg.base_channels << l;
      if (l > 0) conv("down" + std::to_string(l), c, c / 2, 3);
      conv("temb" + std::to_string(l), c, cfg.time_embed_dim, 1);
      conv("enc" + std::to_string(l) + ".c1", c, c, 3);
      conv("enc" + std::to_string(l) + ".c2", c, c, 3);
    }
    for (int64_t l = cfg.depth - 1; l >= 1; --l) {
      const int64_t c = cfg.base_channels << l;
      conv("up" + std::to_string(l), c / 2, c, 3);
      conv("dec" + std::to_string(l - 1), c / 2, c / 2, 3);
    }
    net.params["head.w"] = Tensor<T>::zeros({cfg.in_channels, cfg.base_channels, 3, 3});
    net.params["head.b"] = Tensor<T>::zeros({cfg.in_channels});
    return net;
  }

  template <typename U>
  VelocityField<U> cast() const {
    VelocityField<U> out;
    out.cfg = cfg;
    for (const auto& [k, v] : params) out.params[k] = v.template cast<U>();
    return out;
  }
};

/// graph handles for one registration of a parameter set
template <typename T>
struct NetVars {
  std::map<std::string, typename Graph<T>::Var> p;
  typename Graph<T>::Var at(const std::string& name) const { return p.at(name); }
};

template <typename T>
NetVars<T> register_params(Graph<T>& g, const std::map<std::string, Tensor<T>>& params, bool requires_grad) {
  NetVars<T> vars;
  for (const auto& [name, tensor] : params) vars.p[name] = g.leaf(tensor, requires_grad);
  return vars;
}

template <typename T>
typename Graph<T>::Var net_forward(Graph<T>& g, const NetConfig& cfg, const NetVars<T>& w,
                                   typename Graph<T>::Var x_t, double t,
                                   std::optional<typename Graph<T>::Var> x_lr = std::nullopt) {
  using Var = typename Graph<T>::Var;
  if (cfg.condition_lr != x_lr.has_value())
    throw std::invalid_argument(cfg.condition_lr ? "net_forward: missing LR condition"
                                                 : "net_forward: unexpected LR condition");
  Var h = cfg.condition_lr ? g.concat_channels(x_t, *x_lr) : x_t;
  auto conv = [&](Var v, const std::string& name, int64_t stride, int64_t pad) {
    return g.conv2d(v, w.at(name + ".w"), w.at(name + ".b"), stride, pad);
  };
  Var emb = g.leaf(time_embed<T>(t, cfg.time_embed_dim), false);
  h = conv(h, "stem", 1, 1);
  std::vector<Var> skips;
  for (int64_t l = 0; l < cfg.depth; ++l) {
    if (l > 0) h = g.silu(conv(g.down2(h), "down" + std::to_string(l), 1, 1));
    Var tb = g.reshape(conv(emb, "temb" + std::to_string(l), 1, 0), {cfg.base_channels << l});
    h = g.add_channel_bias(h, tb);
    h = g.silu(conv(h, "enc" + std::to_string(l) + ".c1", 1, 1));
    h = g.silu(conv(h, "enc" + std::to_string(l) + ".c2", 1, 1));
    skips.push_back(h);
  }
  for (int64_t l = cfg.depth - 1; l >= 1; --l) {
    h = g.silu(conv(g.up2(h), "up" + std::to_string(l), 1, 1));
    h = g.add(h, skips[static_cast<size_t>(l - 1)]);
    h = g.silu(conv(h, "dec" + std::to_string(l - 1), 1, 1));
  }
  return conv(h, "head", 1, 1);
}

/// evaluation without gradients
template <typename T>
Tensor<T> eval_velocity(const VelocityField<T>& net, const Tensor<T>& x_t, double t,
                        const Tensor<T>* x_lr = nullptr) {
  Graph<T> g;
  auto vars = register_params(g, net.params, false);
  auto xv = g.leaf(x_t, false);
  std::optional<typename Graph<T>::Var> cond;
  if (x_lr) cond = g.leaf(*x_lr, false);
  return g.value(net_forward(g, net.cfg, vars, xv, t, cond));
}

// ---- discriminator ----

struct DiscConfig {
  int64_t in_channels = 3;
  int64_t base_channels = 16;
  int64_t time_embed_dim = 64;
};

/// 3 strided convs + a score head producing a per-patch score map; time
/// embedding injected at the first level like the main net.
template <typename T>
struct Discriminator {
  DiscConfig cfg;
  std::map<std::string, Tensor<T>> params;

  static Discriminator init(const DiscConfig& cfg, uint64_t seed) {
    Discriminator d;
    d.cfg = cfg;
    Rng rng(splitmix64(seed));
    auto conv = [&](const std::string& name, int64_t o, int64_t i, int64_t k) {
      d.params[name + ".w"] = detail::he_normal<T>({o, i, k, k}, rng);
      d.params[name + ".b"] = Tensor<T>::zeros({o});
    };
    conv("c0", cfg.base_channels, cfg.in_channels, 3);
    conv("temb", cfg.base_channels, cfg.time_embed_dim, 1);
    conv("c1", cfg.base_channels * 2, cfg.base_channels, 3);
    conv("c2", cfg.base_channels * 4, cfg.base_channels * 2, 3);
    conv("head", 1, cfg.base_channels * 4, 3);
    return d;
  }

  template <typename U>
  Discriminator<U> cast() const {
    Discriminator<U> out;
    out.cfg = cfg;
    for (const auto& [k, v] : params) out.params[k] = v.template cast<U>();
    return out;
  }
};

template <typename T>
typename Graph<T>::Var disc_forward(Graph<T>& g, const DiscConfig& cfg, const NetVars<T>& w,
                                    typename Graph<T>::Var x, double t) {
  auto conv = [&](typename Graph<T>::Var v, const std::string& name, int64_t stride, int64_t pad) {
    return g.conv2d(v, w.at(name + ".w"), w.at(name + ".b"), stride, pad);
  };
  auto emb = g.leaf(time_embed<T>(t, cfg.time_embed_dim), false);
  auto h = conv(x, "c0", 2, 1);
  h = g.add_channel_bias(h, g.reshape(conv(emb, "temb", 1, 0), {cfg.base_channels}));
  h = g.silu(h);
  h = g.silu(conv(h, "c1", 2, 1));
  h = g.silu(conv(h, "c2", 2, 1));
  return conv(h, "head", 1, 1);
}

template <typename T>
Tensor<T> eval_disc(const Discriminator<T>& d, const Tensor<T>& x, double t) {
  Graph<T> g;
  auto vars = register_params(g, d.params, false);
  return g.value(disc_forward(g, d.cfg, vars, g.leaf(x, false), t));
}

}  // namespace fsr
