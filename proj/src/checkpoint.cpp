#include "fsr/checkpoint.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace fsr {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t net_config_digest(const NetConfig& cfg) {
  std::ostringstream os;
  os << "in_channels=" << cfg.in_channels << ";base_channels=" << cfg.base_channels
     << ";depth=" << cfg.depth << ";time_embed_dim=" << cfg.time_embed_dim
     << ";condition_lr=" << (cfg.condition_lr ? 1 : 0);
  return fnv1a(os.str());
}

namespace {

// all integers little-endian; this code assumes a little-endian host
void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::string& path) {
  std::string body;
  body.append("FSR1", 4);
  put_u32(body, kCheckpointVersion);
  put_u64(body, data.config_digest);
  put_u64(body, data.step);
  put_u32(body, static_cast<uint32_t>(data.meta.size()));
  for (const auto& [k, v] : data.meta) {
    put_str(body, k);
    put_str(body, v);
  }
  put_u32(body, static_cast<uint32_t>(data.blobs.size()));
  for (const auto& [name, t] : data.blobs) {
    put_str(body, name);
    put_u32(body, static_cast<uint32_t>(t.shape.size()));
    for (int64_t e : t.shape) put_u64(body, static_cast<uint64_t>(e));
    body.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  put_u32(body, crc);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint temp file: " + tmp);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw CheckpointError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("cannot rename " + tmp + " to " + path);
}

CheckpointData load_checkpoint(const std::string& path, std::optional<uint64_t> expect_digest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 4 + 4 + 8 + 8 + 4) throw CheckpointError("checkpoint too small: " + path);

  const uint32_t stored_crc = [&] {
    uint32_t v;
    std::memcpy(&v, buf.data() + buf.size() - 4, 4);
    return v;
  }();
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) throw CheckpointError("checksum failure in " + path);

  Reader r{buf};
  r.need(4);
  if (buf.compare(0, 4, "FSR1") != 0) throw CheckpointError("bad magic in " + path);
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("version mismatch in " + path + ": file has " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  CheckpointData data;
  data.config_digest = r.u64();
  if (expect_digest && *expect_digest != data.config_digest)
    throw CheckpointError("config digest mismatch in " + path);
  data.step = r.u64();
  const uint32_t n_meta = r.u32();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    data.meta[k] = r.str();
  }
  const uint32_t n_blobs = r.u32();
  for (uint32_t i = 0; i < n_blobs; ++i) {
    std::string name = r.str();
    const uint32_t ndim = r.u32();
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int64_t>(r.u64()));
    TensorF t(shape);
    const size_t bytes = t.data.size() * sizeof(float);
    r.need(bytes);
    std::memcpy(t.data.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
    data.blobs.emplace(std::move(name), std::move(t));
  }
  return data;
}

}  // namespace fsr
