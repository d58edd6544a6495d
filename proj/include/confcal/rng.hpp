#pragma once

#include <cstdint>
#include <vector>

namespace confcal {

/**
 * SplitMix64 generator.
 *
 * All seeded behavior in the library (shuffles, synthetic data) is pinned to
 * this generator so outputs are byte-reproducible across platforms and easy
 * to replicate in reference scripts. The standard-library distributions are
 * implementation-defined, so they are deliberately not used here.
 */
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Modulo bias is negligible for the bound
  /// sizes used here and keeps the draw sequence trivially specified.
  std::uint64_t bounded(std::uint64_t n) { return next() % n; }

private:
  std::uint64_t state_;
};

/// In-place Fisher-Yates shuffle driven by the pinned generator.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace confcal
