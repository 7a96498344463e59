#pragma once

#include <cstdint>
#include <string>

#include "fsr/tensor.hpp"

namespace fsr {

struct DegradeConfig {
  int scale = 2;                       // {2, 4}
  double blur_sigma_lo = 0.4;
  double blur_sigma_hi = 1.6;
  double noise_sigma_lo = 0.0;
  double noise_sigma_hi = 0.06;
  uint64_t seed = 0;

  void validate() const;
};

/// (X_HR, X_LR) pair in NCHW, values in [0,1], X_LR pre-upscaled to HR size.
struct ImagePair {
  TensorD x_hr;
  TensorD x_lr;
};

enum class UpscaleMethod { nearest, bilinear };

/// Procedural HR source: band-limited value noise + oriented sinusoid
/// gratings + random polygons; deterministic in seed; values in [0,1].
/// Shape 1 x channels x size x size.
TensorD make_texture(uint64_t seed, int size, int channels = 3);

/// Gaussian blur with replicate borders; sigma ~ 0 is the identity.
TensorD gaussian_blur(const TensorD& x, double sigma);

/// 2x2 area-average downsample (NCHW, even extents)
TensorD area_down2(const TensorD& x);

/// blur -> repeated 2x area downsample to 1/scale -> additive Gaussian noise
/// -> clamp to [0,1]; deterministic in (cfg.seed, seed).
TensorD degrade(const TensorD& x_hr, const DegradeConfig& cfg, uint64_t seed);

/// spatial extents multiplied by scale
TensorD upscale(const TensorD& x_small, int scale, UpscaleMethod method);

/// make_texture -> degrade -> upscale(nearest)
ImagePair make_pair(uint64_t seed, int size, const DegradeConfig& cfg);

}  // namespace fsr
