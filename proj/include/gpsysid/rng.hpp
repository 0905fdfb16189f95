#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gpsysid {

/// Stateless counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results do not depend on evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  /// Uniform in (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    const std::uint64_t bits = mix(mix(seed_ ^ mix(stream)) ^ counter);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two derived uniforms.
  double normal(std::uint64_t stream, std::uint64_t counter) const {
    const double u1 = uniform(stream, 2 * counter);
    const double u2 = uniform(stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

}  // namespace gpsysid
