#include "cfa/rng.hpp"

#include "cfa/stats.hpp"

namespace cfa {

double Rng::uniform01() {
  // Map the top 53 bits of a 64-bit draw to the midpoint grid
  // (k + 0.5) * 2^-53, which can never produce exactly 0 or 1.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return inverse_normal_cdf(uniform01()); }

}  // namespace cfa
