#pragma once

#include <stdexcept>
#include <string>

#include "fsr/tensor.hpp"

namespace fsr {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB PNG. Tensors are [1,3,H,W] with values in [0,1]; writing clamps
/// and rounds to the nearest byte, so a PNG round trip quantizes to 1/255.
TensorD read_png(const std::string& path);
void write_png(const std::string& path, const TensorD& img);

/// Raw float32 sidecar ("FSRF"): lossless round trip for tensors of any
/// shape. Used when exact values matter (trajectory dumps, corpus files).
TensorD read_fsrf(const std::string& path);
void write_fsrf(const std::string& path, const TensorD& img);

/// Dispatch on extension: .png or .fsrf.
TensorD read_image(const std::string& path);
void write_image(const std::string& path, const TensorD& img);

}  // namespace fsr
