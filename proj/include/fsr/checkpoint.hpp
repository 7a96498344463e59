#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "fsr/net.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// On-disk model state: magic "FSR1", format version, config digest, step,
/// named little-endian float32 blobs with shape headers, trailing CRC32.
struct CheckpointData {
  uint64_t config_digest = 0;
  uint64_t step = 0;
  std::map<std::string, TensorF> blobs;
  std::map<std::string, std::string> meta;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// FNV-1a over a canonical string
uint64_t fnv1a(const std::string& s);

/// digest of the architecture-determining config keys
uint64_t net_config_digest(const NetConfig& cfg);

/// atomic write (temp + rename)
void save_checkpoint(const CheckpointData& data, const std::string& path);

/// verifies checksum, version, and (when given) config digest; each failure
/// is reported distinctly
CheckpointData load_checkpoint(const std::string& path,
                               std::optional<uint64_t> expect_digest = std::nullopt);

}  // namespace fsr
