#pragma once

#include <cstdint>

namespace derivkit {

// Seed for the fixed sample set used by identity tests.
inline constexpr std::uint64_t kSampleSeed = 0x5eedf00dcafe1234ULL;
// Default seed for probe families (linearity probes, random test fields).
inline constexpr std::uint64_t kProbeSeed = 42;

// SplitMix64. Used instead of <random> distributions, whose output is
// implementation-defined, so that sample sets and reports are reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace derivkit
