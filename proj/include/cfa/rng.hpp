#pragma once

#include <cstdint>
#include <random>

namespace cfa {

// Seedable, platform-stable random stream.
//
// The engine is std::mt19937_64, whose output sequence is fully specified
// by the standard, so identical seeds give identical streams on every
// platform. Normal variates are produced by the inverse-CDF transform
// (never std::normal_distribution, whose output is implementation
// defined).
//
// Stream splitting: a simulation replicate r draws from the stream seeded
// with base_seed XOR r, so replicates are reproducible independently and
// in any order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng for_replicate(std::uint64_t base_seed, std::uint64_t replicate) {
    return Rng(base_seed ^ replicate);
  }

  // Uniform on the open interval (0, 1).
  double uniform01();

  // Standard normal via inverse-CDF of uniform01().
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace cfa
