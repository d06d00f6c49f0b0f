#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace ftirpad {

// Only the engine comes from <random>: its output sequence is fixed by the
// standard, whereas the std distributions are implementation-defined.  All
// derived draws below are written out so a seed reproduces the same values
// with every toolchain.
class Rng {
public:
  static constexpr std::string_view kName = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller.  Uses libm; not for pixel synthesis.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Approximately normal integer noise: Irwin-Hall sum of twelve 16-bit
  /// uniforms, scaled by sigma and rounded to nearest-even.  Pure integer
  /// arithmetic up to one multiply, so it is bit-stable across platforms.
  int noise(double sigma) {
    if (sigma <= 0.0) return 0;
    std::int64_t sum = 0;
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t v = engine_();
      for (int s = 0; s < 4; ++s) sum += static_cast<std::int64_t>((v >> (16 * s)) & 0xFFFF);
    }
    const double z = static_cast<double>(sum - 6 * 65536) / 65536.0;
    return static_cast<int>(std::nearbyint(sigma * z));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream of a top-level seed ("simulate", "split", ...).
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ splitmix64(fnv1a64(name)));
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return splitmix64(substream_seed(seed, name) + splitmix64(index + 1));
}

}  // namespace ftirpad
