#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace taxoexpan {

// Counter-based random stream. A stream is identified by a 64-bit key and
// produces splitmix64(key + counter); split() derives an independent child
// key, so consumers can be handed reproducible sub-streams without sharing
// mutable state.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t seed) : key_(Mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  std::uint64_t NextU64() { return Mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform double in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t Below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection; exact and platform independent.
    std::uint64_t x = NextU64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = -bound % bound;
      while (low < threshold) {
        x = NextU64();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double Normal() {
    // Box-Muller; the second variate is discarded to keep the stream stateless.
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  RandomStream Split(std::uint64_t tag) const {
    RandomStream child;
    child.key_ = Mix(key_ ^ Mix(tag + 0xbf58476d1ce4e5b9ULL));
    return child;
  }

  RandomStream Split(std::string_view tag) const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return Split(h);
  }

 private:
  static std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace taxoexpan
