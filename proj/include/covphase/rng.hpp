#pragma once
/// @file rng.hpp
/// Named, seeded, splittable random stream. Children are derived from the
/// parent seed and a label, so adding draws to one suite never shifts the
/// sequences seen by another. All draws go through explicit integer-to-double
/// conversion; reports built from the same seed are identical byte for byte.

#include <cstdint>
#include <string>

namespace covphase {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

  /// Independent child stream identified by a label.
  Rng split(const std::string& name) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the label
    for (unsigned char c : name) { h ^= c; h *= 1099511628211ull; }
    return Rng(mix(state_ ^ h));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;  // splitmix64 step
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + int(next_u64() % std::uint64_t(hi - lo + 1));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

}  // namespace covphase
