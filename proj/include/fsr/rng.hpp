#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace fsr {

/// splitmix64 finalizer; the fixed hash used everywhere a derived seed is
/// needed (per-sample seeds, per-step seeds). Documented in corpus manifests.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// seed_i = splitmix64(base ^ splitmix64(i))
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  return splitmix64(base ^ splitmix64(index));
}

/// Deterministic RNG. Normal variates use Box-Muller on explicit uniforms so
/// sequences are bit-stable across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// uniform in (0, 1]
  double uniform_open0() { return 1.0 - uniform(); }

  /// uniform integer in [0, n)
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
  }

  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fsr
