#pragma once

#include <cstdint>

namespace leakmap {

// Counter-based generator: every draw is a pure function of (seed, stream, counter),
// so Monte-Carlo work can be split across workers without changing any result.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
    return mix(mix(seed_ ^ mix(stream)) + counter * 0xd1b54a32d192ed03ULL);
  }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
  }

  CounterRng split(std::uint64_t key) const { return CounterRng(mix(seed_ ^ mix(key + 1))); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace leakmap
