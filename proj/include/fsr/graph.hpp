#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

template <typename T>
using GradMap = std::map<int, Tensor<T>>;

/// Reverse-mode tape. Nodes are appended in topological order; a Graph lives
/// for one training step and is confined to one thread.
template <typename T>
class Graph {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {}, nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_[check(v)].value; }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    check_same_shape(x, y, "add");
    Tensor<T> out = x;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += y.data[i];
    return push(std::move(out), rg(a) || rg(b), {a.id, b.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  g.accum(g.nodes_[id].inputs[0], go);
                  g.accum(g.nodes_[id].inputs[1], go);
                });
  }

  Var sub(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    check_same_shape(x, y, "sub");
    Tensor<T> out = x;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= y.data[i];
    return push(std::move(out), rg(a) || rg(b), {a.id, b.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  g.accum(g.nodes_[id].inputs[0], go);
                  Tensor<T> neg = go;
                  for (auto& v : neg.data) v = -v;
                  g.accum(g.nodes_[id].inputs[1], neg);
                });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    check_same_shape(x, y, "mul");
    Tensor<T> out = x;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= y.data[i];
    return push(std::move(out), rg(a) || rg(b), {a.id, b.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  const int ia = g.nodes_[id].inputs[0], ib = g.nodes_[id].inputs[1];
                  Tensor<T> ga = go, gb = go;
                  const Tensor<T>&x = g.nodes_[ia].value, &y = g.nodes_[ib].value;
                  for (int64_t i = 0; i < go.numel(); ++i) {
                    ga.data[i] *= y.data[i];
                    gb.data[i] *= x.data[i];
                  }
                  g.accum(ia, ga);
                  g.accum(ib, gb);
                });
  }

  /// a*s + c, scalar affine
  Var affine(Var a, T s, T c = T(0)) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = v * s + c;
    return push(std::move(out), rg(a), {a.id},
                [s](Graph& g, int id) {
                  Tensor<T> ga = g.grads_[id];
                  for (auto& v : ga.data) v *= s;
                  g.accum(g.nodes_[id].inputs[0], ga);
                });
  }

  Var scale(Var a, T s) { return affine(a, s, T(0)); }
  Var add_scalar(Var a, T c) { return affine(a, T(1), c); }
  Var neg(Var a) { return affine(a, T(-1), T(0)); }

  Var silu(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = v * sigmoid(v);
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const int ia = g.nodes_[id].inputs[0];
                  const Tensor<T>& x = g.nodes_[ia].value;
                  Tensor<T> ga = g.grads_[id];
                  for (int64_t i = 0; i < ga.numel(); ++i) {
                    const T s = sigmoid(x.data[i]);
                    ga.data[i] *= s * (T(1) + x.data[i] * (T(1) - s));
                  }
                  g.accum(ia, ga);
                });
  }

  Var square(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = v * v;
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const int ia = g.nodes_[id].inputs[0];
                  const Tensor<T>& x = g.nodes_[ia].value;
                  Tensor<T> ga = g.grads_[id];
                  for (int64_t i = 0; i < ga.numel(); ++i) ga.data[i] *= T(2) * x.data[i];
                  g.accum(ia, ga);
                });
  }

  Var abs(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = std::abs(v);
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const int ia = g.nodes_[id].inputs[0];
                  const Tensor<T>& x = g.nodes_[ia].value;
                  Tensor<T> ga = g.grads_[id];
                  for (int64_t i = 0; i < ga.numel(); ++i)
                    ga.data[i] *= (x.data[i] > T(0)) ? T(1) : (x.data[i] < T(0) ? T(-1) : T(0));
                  g.accum(ia, ga);
                });
  }

  Var relu(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const int ia = g.nodes_[id].inputs[0];
                  const Tensor<T>& x = g.nodes_[ia].value;
                  Tensor<T> ga = g.grads_[id];
                  for (int64_t i = 0; i < ga.numel(); ++i)
                    if (x.data[i] <= T(0)) ga.data[i] = T(0);
                  g.accum(ia, ga);
                });
  }

  // ---- structure ----

  /// Cross-correlation, NCHW input, OIHW kernel, optional per-output-channel
  /// bias of shape [O].
  Var conv2d(Var input, Var kernel, Var bias, int64_t stride, int64_t pad) {
    const Tensor<T>&x = value(input), &w = value(kernel);
    if (x.ndim() != 4 || w.ndim() != 4)
      throw std::invalid_argument("conv2d: need NCHW input and OIHW kernel, got " + x.shape_str() + " and " + w.shape_str());
    if (x.shape[1] != w.shape[1])
      throw std::invalid_argument("conv2d: input channels " + x.shape_str() + " do not match kernel " + w.shape_str());
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    const int64_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
    const int64_t O = w.shape[0], KH = w.shape[2], KW = w.shape[3];
    const int64_t OH = (H + 2 * pad - KH) / stride + 1;
    const int64_t OW = (W + 2 * pad - KW) / stride + 1;
    if (OH <= 0 || OW <= 0)
      throw std::invalid_argument("conv2d: non-positive output extents for " + x.shape_str() + " with kernel " + w.shape_str());
    if (bias.valid()) {
      const Tensor<T>& b = value(bias);
      if (b.numel() != O)
        throw std::invalid_argument("conv2d: bias " + b.shape_str() + " does not match kernel " + w.shape_str());
    }
    Tensor<T> out({N, O, OH, OW});
    conv2d_forward(x, w, bias.valid() ? &value(bias) : nullptr, stride, pad, out);
    std::vector<int> ins = {input.id, kernel.id};
    if (bias.valid()) ins.push_back(bias.id);
    const bool need = rg(input) || rg(kernel) || (bias.valid() && rg(bias));
    return push(std::move(out), need, std::move(ins),
                [stride, pad](Graph& g, int id) {
                  auto& node = g.nodes_[id];
                  const Tensor<T>& go = g.grads_[id];
                  const int ii = node.inputs[0], ik = node.inputs[1];
                  const Tensor<T>&x = g.nodes_[ii].value, &w = g.nodes_[ik].value;
                  Tensor<T> gx = Tensor<T>::zeros(x.shape);
                  Tensor<T> gw = Tensor<T>::zeros(w.shape);
                  conv2d_backward(x, w, stride, pad, go, gx, gw);
                  g.accum(ii, gx);
                  g.accum(ik, gw);
                  if (node.inputs.size() == 3) {
                    const int ib = node.inputs[2];
                    Tensor<T> gb = Tensor<T>::zeros(g.nodes_[ib].value.shape);
                    const int64_t O = go.shape[1], HW = go.shape[2] * go.shape[3];
                    for (int64_t n = 0; n < go.shape[0]; ++n)
                      for (int64_t o = 0; o < O; ++o) {
                        const T* p = &go.data[static_cast<size_t>((n * O + o) * HW)];
                        T s = T(0);
                        for (int64_t i = 0; i < HW; ++i) s += p[i];
                        gb.data[static_cast<size_t>(o)] += s;
                      }
                    g.accum(ib, gb);
                  }
                });
  }

  /// nearest-neighbour 2x upsample
  Var up2(Var a) {
    const Tensor<T>& x = value(a);
    if (x.ndim() != 4) throw std::invalid_argument("up2: need NCHW, got " + x.shape_str());
    const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    Tensor<T> out({N, C, 2 * H, 2 * W});
    for (int64_t nc = 0; nc < N * C; ++nc)
      for (int64_t h = 0; h < 2 * H; ++h) {
        const T* src = &x.data[static_cast<size_t>((nc * H + h / 2) * W)];
        T* dst = &out.data[static_cast<size_t>((nc * 2 * H + h) * 2 * W)];
        for (int64_t w = 0; w < 2 * W; ++w) dst[w] = src[w / 2];
      }
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  const Tensor<T>& x = g.nodes_[g.nodes_[id].inputs[0]].value;
                  Tensor<T> gx = Tensor<T>::zeros(x.shape);
                  const int64_t H = x.shape[2], W = x.shape[3];
                  for (int64_t nc = 0; nc < x.shape[0] * x.shape[1]; ++nc)
                    for (int64_t h = 0; h < 2 * H; ++h) {
                      const T* src = &go.data[static_cast<size_t>((nc * 2 * H + h) * 2 * W)];
                      T* dst = &gx.data[static_cast<size_t>((nc * H + h / 2) * W)];
                      for (int64_t w = 0; w < 2 * W; ++w) dst[w / 2] += src[w];
                    }
                  g.accum(g.nodes_[id].inputs[0], gx);
                });
  }

  /// 2x2 area-average downsample; requires even H, W
  Var down2(Var a) {
    const Tensor<T>& x = value(a);
    if (x.ndim() != 4) throw std::invalid_argument("down2: need NCHW, got " + x.shape_str());
    const int64_t H = x.shape[2], W = x.shape[3];
    if (H % 2 || W % 2) throw std::invalid_argument("down2: odd extents in " + x.shape_str());
    Tensor<T> out({x.shape[0], x.shape[1], H / 2, W / 2});
    for (int64_t nc = 0; nc < x.shape[0] * x.shape[1]; ++nc)
      for (int64_t h = 0; h < H / 2; ++h) {
        const T* r0 = &x.data[static_cast<size_t>((nc * H + 2 * h) * W)];
        const T* r1 = r0 + W;
        T* dst = &out.data[static_cast<size_t>((nc * (H / 2) + h) * (W / 2))];
        for (int64_t w = 0; w < W / 2; ++w)
          dst[w] = (r0[2 * w] + r0[2 * w + 1] + r1[2 * w] + r1[2 * w + 1]) * T(0.25);
      }
    return push(std::move(out), rg(a), {a.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  const Tensor<T>& x = g.nodes_[g.nodes_[id].inputs[0]].value;
                  Tensor<T> gx = Tensor<T>::zeros(x.shape);
                  const int64_t H = x.shape[2], W = x.shape[3];
                  for (int64_t nc = 0; nc < x.shape[0] * x.shape[1]; ++nc)
                    for (int64_t h = 0; h < H / 2; ++h) {
                      T* r0 = &gx.data[static_cast<size_t>((nc * H + 2 * h) * W)];
                      T* r1 = r0 + W;
                      const T* src = &go.data[static_cast<size_t>((nc * (H / 2) + h) * (W / 2))];
                      for (int64_t w = 0; w < W / 2; ++w) {
                        const T q = src[w] * T(0.25);
                        r0[2 * w] += q;
                        r0[2 * w + 1] += q;
                        r1[2 * w] += q;
                        r1[2 * w + 1] += q;
                      }
                    }
                  g.accum(g.nodes_[id].inputs[0], gx);
                });
  }

  Var concat_channels(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    if (x.ndim() != 4 || y.ndim() != 4 || x.shape[0] != y.shape[0] || x.shape[2] != y.shape[2] || x.shape[3] != y.shape[3])
      throw std::invalid_argument("concat_channels: incompatible " + x.shape_str() + " and " + y.shape_str());
    const int64_t N = x.shape[0], Ca = x.shape[1], Cb = y.shape[1], HW = x.shape[2] * x.shape[3];
    Tensor<T> out({N, Ca + Cb, x.shape[2], x.shape[3]});
    for (int64_t n = 0; n < N; ++n) {
      std::copy(&x.data[static_cast<size_t>(n * Ca * HW)], &x.data[static_cast<size_t>(n * Ca * HW)] + Ca * HW,
                &out.data[static_cast<size_t>(n * (Ca + Cb) * HW)]);
      std::copy(&y.data[static_cast<size_t>(n * Cb * HW)], &y.data[static_cast<size_t>(n * Cb * HW)] + Cb * HW,
                &out.data[static_cast<size_t>(n * (Ca + Cb) * HW)] + Ca * HW);
    }
    return push(std::move(out), rg(a) || rg(b), {a.id, b.id},
                [Ca, Cb, HW](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  const int ia = g.nodes_[id].inputs[0], ib = g.nodes_[id].inputs[1];
                  Tensor<T> ga = Tensor<T>::zeros(g.nodes_[ia].value.shape);
                  Tensor<T> gb = Tensor<T>::zeros(g.nodes_[ib].value.shape);
                  const int64_t N = go.shape[0];
                  for (int64_t n = 0; n < N; ++n) {
                    const T* src = &go.data[static_cast<size_t>(n * (Ca + Cb) * HW)];
                    std::copy(src, src + Ca * HW, &ga.data[static_cast<size_t>(n * Ca * HW)]);
                    std::copy(src + Ca * HW, src + (Ca + Cb) * HW, &gb.data[static_cast<size_t>(n * Cb * HW)]);
                  }
                  g.accum(ia, ga);
                  g.accum(ib, gb);
                });
  }

  /// x[n,c,h,w] + b[c]; b may be shaped [C] or [1,C,1,1]
  Var add_channel_bias(Var a, Var b) {
    const Tensor<T>&x = value(a), &bv = value(b);
    if (x.ndim() != 4 || bv.numel() != x.shape[1])
      throw std::invalid_argument("add_channel_bias: " + x.shape_str() + " vs " + bv.shape_str());
    const int64_t N = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    Tensor<T> out = x;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        T* p = &out.data[static_cast<size_t>((n * C + c) * HW)];
        const T bc = bv.data[static_cast<size_t>(c)];
        for (int64_t i = 0; i < HW; ++i) p[i] += bc;
      }
    return push(std::move(out), rg(a) || rg(b), {a.id, b.id},
                [](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  const int ia = g.nodes_[id].inputs[0], ib = g.nodes_[id].inputs[1];
                  g.accum(ia, go);
                  Tensor<T> gb = Tensor<T>::zeros(g.nodes_[ib].value.shape);
                  const int64_t N = go.shape[0], C = go.shape[1], HW = go.shape[2] * go.shape[3];
                  for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c) {
                      const T* p = &go.data[static_cast<size_t>((n * C + c) * HW)];
                      T s = T(0);
                      for (int64_t i = 0; i < HW; ++i) s += p[i];
                      gb.data[static_cast<size_t>(c)] += s;
                    }
                  g.accum(ib, gb);
                });
  }

  Var reshape(Var a, std::vector<int64_t> shape) {
    const Tensor<T>& x = value(a);
    if (Tensor<T>::numel_of(shape) != x.numel())
      throw std::invalid_argument("reshape: element count mismatch for " + x.shape_str());
    Tensor<T> out = x;
    out.shape = shape;
    auto old_shape = x.shape;
    return push(std::move(out), rg(a), {a.id},
                [old_shape](Graph& g, int id) {
                  Tensor<T> ga = g.grads_[id];
                  ga.shape = old_shape;
                  g.accum(g.nodes_[id].inputs[0], ga);
                });
  }

  /// depthwise 3x3 correlation with a fixed (non-learnable) kernel and
  /// replicate padding; used by the gradient-difference perceptual surrogate.
  Var filter3x3_replicate(Var a, const std::array<T, 9>& k) {
    const Tensor<T>& x = value(a);
    if (x.ndim() != 4) throw std::invalid_argument("filter3x3: need NCHW, got " + x.shape_str());
    Tensor<T> out(x.shape);
    filter3x3_apply(x, k, out);
    return push(std::move(out), rg(a), {a.id},
                [k](Graph& g, int id) {
                  const Tensor<T>& go = g.grads_[id];
                  // grad input = correlation with the flipped kernel, transposed
                  // scatter of replicate padding
                  const Tensor<T>& x = g.nodes_[g.nodes_[id].inputs[0]].value;
                  Tensor<T> gx = Tensor<T>::zeros(x.shape);
                  filter3x3_backward(go, k, gx);
                  g.accum(g.nodes_[id].inputs[0], gx);
                });
  }

  // ---- reductions ----

  Var sum(Var a) {
    const Tensor<T>& x = value(a);
    T s = T(0);
    for (T v : x.data) s += v;
    return push(Tensor<T>::scalar(s), rg(a), {a.id},
                [](Graph& g, int id) {
                  const T go = g.grads_[id].data[0];
                  const Tensor<T>& x = g.nodes_[g.nodes_[id].inputs[0]].value;
                  Tensor<T> gx = Tensor<T>::full(x.shape, go);
                  g.accum(g.nodes_[id].inputs[0], gx);
                });
  }

  Var mean(Var a) {
    const int64_t n = value(a).numel();
    return scale(sum(a), T(1) / static_cast<T>(n));
  }

  // ---- backward ----

  /// Reverse-mode accumulation from a scalar loss. Returns gradients for all
  /// requires_grad leaves reachable from the loss; the graph is unchanged.
  GradMap<T> backward(Var loss) {
    const int lid = check(loss);
    if (nodes_[lid].value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + nodes_[lid].value.shape_str());
    // reachable requires_grad subgraph
    std::vector<char> reach(nodes_.size(), 0);
    reach[static_cast<size_t>(lid)] = 1;
    for (int i = lid; i >= 0; --i) {
      if (!reach[static_cast<size_t>(i)] || !nodes_[i].requires_grad) continue;
      for (int in : nodes_[i].inputs)
        if (nodes_[in].requires_grad) reach[static_cast<size_t>(in)] = 1;
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[static_cast<size_t>(lid)] = Tensor<T>::scalar(T(1));
    for (int i = lid; i >= 0; --i) {
      if (!reach[static_cast<size_t>(i)] || grads_[static_cast<size_t>(i)].numel() == 0) continue;
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
    GradMap<T> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!reach[i] || !nodes_[i].requires_grad || nodes_[i].back) continue;
      if (grads_[i].numel() == 0) grads_[i] = Tensor<T>::zeros(nodes_[i].value.shape);
      out.emplace(static_cast<int>(i), std::move(grads_[i]));
    }
    grads_.clear();
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::vector<int> inputs;
    std::function<void(Graph&, int)> back;
  };

  bool rg(Var v) const { return nodes_[check(v)].requires_grad; }

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("invalid graph node id");
    return v.id;
  }

  Var push(Tensor<T> value, bool requires_grad, std::vector<int> inputs, std::function<void(Graph&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.inputs = std::move(inputs);
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void accum(int id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor<T>& dst = grads_[static_cast<size_t>(id)];
    if (dst.numel() == 0) {
      dst = g;
    } else {
      for (int64_t i = 0; i < dst.numel(); ++i) dst.data[i] += g.data[i];
    }
  }

  static T sigmoid(T v) { return T(1) / (T(1) + std::exp(-v)); }

  static void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                             int64_t stride, int64_t pad, Tensor<T>& out) {
    const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int64_t O = w.shape[0], KH = w.shape[2], KW = w.shape[3];
    const int64_t OH = out.shape[2], OW = out.shape[3];
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o) {
        T* outp = &out.data[static_cast<size_t>(((n * O + o) * OH) * OW)];
        const T bias = b ? b->data[static_cast<size_t>(o)] : T(0);
        for (int64_t i = 0; i < OH * OW; ++i) outp[i] = bias;
        for (int64_t c = 0; c < C; ++c) {
          const T* xp = &x.data[static_cast<size_t>(((n * C + c) * H) * W)];
          const T* wp = &w.data[static_cast<size_t>(((o * C + c) * KH) * KW)];
          for (int64_t kh = 0; kh < KH; ++kh)
            for (int64_t kw = 0; kw < KW; ++kw) {
              const T wv = wp[kh * KW + kw];
              if (wv == T(0)) continue;
              for (int64_t oh = 0; oh < OH; ++oh) {
                const int64_t ih = oh * stride + kh - pad;
                if (ih < 0 || ih >= H) continue;
                const T* xrow = xp + ih * W;
                T* orow = outp + oh * OW;
                const int64_t base = kw - pad;
                if (stride == 1) {
                  int64_t lo = std::max<int64_t>(0, -base);
                  int64_t hi = std::min<int64_t>(OW, W - base);
                  for (int64_t ow = lo; ow < hi; ++ow) orow[ow] += wv * xrow[ow + base];
                } else {
                  for (int64_t ow = 0; ow < OW; ++ow) {
                    const int64_t iw = ow * stride + base;
                    if (iw >= 0 && iw < W) orow[ow] += wv * xrow[iw];
                  }
                }
              }
            }
        }
      }
  }

  static void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad,
                              const Tensor<T>& go, Tensor<T>& gx, Tensor<T>& gw) {
    const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int64_t O = w.shape[0], KH = w.shape[2], KW = w.shape[3];
    const int64_t OH = go.shape[2], OW = go.shape[3];
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o) {
        const T* gop = &go.data[static_cast<size_t>(((n * O + o) * OH) * OW)];
        for (int64_t c = 0; c < C; ++c) {
          const T* xp = &x.data[static_cast<size_t>(((n * C + c) * H) * W)];
          T* gxp = &gx.data[static_cast<size_t>(((n * C + c) * H) * W)];
          const T* wp = &w.data[static_cast<size_t>(((o * C + c) * KH) * KW)];
          T* gwp = &gw.data[static_cast<size_t>(((o * C + c) * KH) * KW)];
          for (int64_t kh = 0; kh < KH; ++kh)
            for (int64_t kw = 0; kw < KW; ++kw) {
              const T wv = wp[kh * KW + kw];
              T wacc = T(0);
              for (int64_t oh = 0; oh < OH; ++oh) {
                const int64_t ih = oh * stride + kh - pad;
                if (ih < 0 || ih >= H) continue;
                const T* xrow = xp + ih * W;
                T* gxrow = gxp + ih * W;
                const T* gorow = gop + oh * OW;
                const int64_t base = kw - pad;
                if (stride == 1) {
                  int64_t lo = std::max<int64_t>(0, -base);
                  int64_t hi = std::min<int64_t>(OW, W - base);
                  for (int64_t ow = lo; ow < hi; ++ow) {
                    wacc += gorow[ow] * xrow[ow + base];
                    gxrow[ow + base] += gorow[ow] * wv;
                  }
                } else {
                  for (int64_t ow = 0; ow < OW; ++ow) {
                    const int64_t iw = ow * stride + base;
                    if (iw >= 0 && iw < W) {
                      wacc += gorow[ow] * xrow[iw];
                      gxrow[iw] += gorow[ow] * wv;
                    }
                  }
                }
              }
              gwp[kh * KW + kw] += wacc;
            }
        }
      }
  }

  static int64_t clampi(int64_t v, int64_t lo, int64_t hi) { return v < lo ? lo : (v > hi ? hi : v); }

  static void filter3x3_apply(const Tensor<T>& x, const std::array<T, 9>& k, Tensor<T>& out) {
    const int64_t H = x.shape[2], W = x.shape[3];
    for (int64_t nc = 0; nc < x.shape[0] * x.shape[1]; ++nc) {
      const T* xp = &x.data[static_cast<size_t>(nc * H * W)];
      T* op = &out.data[static_cast<size_t>(nc * H * W)];
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          T s = T(0);
          for (int64_t dh = -1; dh <= 1; ++dh)
            for (int64_t dw = -1; dw <= 1; ++dw)
              s += k[static_cast<size_t>((dh + 1) * 3 + (dw + 1))] *
                   xp[clampi(h + dh, 0, H - 1) * W + clampi(w + dw, 0, W - 1)];
          op[h * W + w] = s;
        }
    }
  }

  static void filter3x3_backward(const Tensor<T>& go, const std::array<T, 9>& k, Tensor<T>& gx) {
    const int64_t H = gx.shape[2], W = gx.shape[3];
    for (int64_t nc = 0; nc < gx.shape[0] * gx.shape[1]; ++nc) {
      const T* gp = &go.data[static_cast<size_t>(nc * H * W)];
      T* gxp = &gx.data[static_cast<size_t>(nc * H * W)];
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const T g = gp[h * W + w];
          for (int64_t dh = -1; dh <= 1; ++dh)
            for (int64_t dw = -1; dw <= 1; ++dw)
              gxp[clampi(h + dh, 0, H - 1) * W + clampi(w + dw, 0, W - 1)] +=
                  g * k[static_cast<size_t>((dh + 1) * 3 + (dw + 1))];
        }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

}  // namespace fsr
