#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace pinc {

/// Counter-based generator: the n-th draw is a pure function of (key, n).
///
/// Substreams are derived by hashing the parent key with a stream id, so every
/// consumer (surface batches, collocation noise, init, ...) can own an
/// independent, reproducible stream without sharing mutable state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGolden * ++counter_); }

  [[nodiscard]] Rng substream(std::uint64_t id) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(id + 0x3c6ef372fe94f82bULL));
    return child;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one draw per call, no cached state.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Named substream ids.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSurface = 2;
inline constexpr std::uint64_t kLocal = 3;
inline constexpr std::uint64_t kGlobal = 4;
inline constexpr std::uint64_t kNoise = 5;
inline constexpr std::uint64_t kMesh = 6;
inline constexpr std::uint64_t kSynth = 7;
inline constexpr std::uint64_t kEval = 8;
}  // namespace stream

}  // namespace pinc
