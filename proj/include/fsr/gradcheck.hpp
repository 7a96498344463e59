#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "fsr/rng.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

/// Central-difference gradient check. loss_fn must be deterministic in the
/// parameters. Checks up to max_coords_per_param sampled coordinates of each
/// parameter and returns the worst relative error
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
template <typename T>
double grad_check(const std::function<double(const std::map<std::string, Tensor<T>>&)>& loss_fn,
                  const std::function<std::map<std::string, Tensor<T>>(const std::map<std::string, Tensor<T>>&)>& grad_fn,
                  std::map<std::string, Tensor<T>> params, double eps,
                  int64_t max_coords_per_param = 24, uint64_t seed = 0x5eed) {
  const auto analytic = grad_fn(params);
  Rng rng(seed);
  double max_rel = 0.0;
  for (auto& [name, p] : params) {
    auto it = analytic.find(name);
    const int64_t n = p.numel();
    const int64_t samples = std::min<int64_t>(n, max_coords_per_param);
    for (int64_t s = 0; s < samples; ++s) {
      const int64_t i = (samples == n) ? s : rng.uniform_int(n);
      const T orig = p.data[static_cast<size_t>(i)];
      p.data[static_cast<size_t>(i)] = orig + static_cast<T>(eps);
      const double lp = loss_fn(params);
      p.data[static_cast<size_t>(i)] = orig - static_cast<T>(eps);
      const double lm = loss_fn(params);
      p.data[static_cast<size_t>(i)] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = (it == analytic.end()) ? 0.0 : static_cast<double>(it->second.data[static_cast<size_t>(i)]);
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace fsr
