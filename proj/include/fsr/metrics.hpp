#pragma once

#include <string>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

/// 10*log10(1/MSE) for values in [0,1]; +inf sentinel when MSE == 0.
/// With y_channel and C == 3, BT.601 luma conversion is applied first.
double psnr(const TensorD& a, const TensorD& b, bool y_channel = true);

/// single-scale SSIM, 11x11 Gaussian window sigma=1.5, C1=(0.01)^2,
/// C2=(0.03)^2, mean over windows; Y channel for RGB. H, W >= 11 required.
double ssim(const TensorD& a, const TensorD& b);

/// BT.601 luma of an NCHW RGB tensor, as Nx1xHxW
TensorD to_luma(const TensorD& x);

struct EvalRow {
  std::string label;
  int steps = 0;  // 0 for baselines
  double psnr_db = 0.0;
  double ssim = 0.0;
  double surrogate_lpips = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string config_digest;
  std::string seeds;
  std::string note;

  std::string to_table() const;
  std::string to_records() const;
};

}  // namespace fsr
