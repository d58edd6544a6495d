#pragma once

// Exhaustive reference for isotonic regression, independent of the PAV
// implementation: ties are merged, then every contiguous block partition
// with non-decreasing block means is scored by squared error. The squared
// error is strictly convex in the fitted values, so the minimizing fit is
// unique and exhaustion over feasible partitions must reproduce it exactly.

#include <cstdint>
#include <limits>
#include <vector>

namespace testsupport {

/// Per-sample fitted values of the best monotone step function for samples
/// already sorted by prediction. Tied predictions share one position.
inline std::vector<double> brute_force_isotonic(const std::vector<double>& preds,
                                                const std::vector<int>& labels) {
  const std::size_t n = preds.size();

  // merge equal predictions
  std::vector<std::uint64_t> sums;
  std::vector<std::uint64_t> counts;
  std::vector<std::size_t> block_of(n);
  std::size_t i = 0;
  while (i < n) {
    std::uint64_t sum = 0;
    std::uint64_t count = 0;
    const double p = preds[i];
    while (i < n && preds[i] == p) {
      sum += static_cast<std::uint64_t>(labels[i]);
      count += 1;
      block_of[i] = sums.size();
      ++i;
    }
    sums.push_back(sum);
    counts.push_back(count);
  }
  const std::size_t m = sums.size();

  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> best_fit;

  // bit b of `mask` set means a cut after merged block b
  for (std::uint64_t mask = 0; mask < (1ULL << (m - 1)); ++mask) {
    std::vector<double> level_of(m, 0.0);
    bool feasible = true;
    double prev_mean = -1.0;
    std::size_t start = 0;
    for (std::size_t b = 0; b < m; ++b) {
      const bool cut = b + 1 == m || ((mask >> b) & 1ULL) != 0;
      if (!cut) continue;
      std::uint64_t sum = 0;
      std::uint64_t count = 0;
      for (std::size_t k = start; k <= b; ++k) {
        sum += sums[k];
        count += counts[k];
      }
      const double mean = static_cast<double>(sum) / static_cast<double>(count);
      if (mean < prev_mean) {
        feasible = false;
        break;
      }
      for (std::size_t k = start; k <= b; ++k) level_of[k] = mean;
      prev_mean = mean;
      start = b + 1;
    }
    if (!feasible) continue;

    double sse = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double d = static_cast<double>(labels[s]) - level_of[block_of[s]];
      sse += d * d;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_fit.resize(n);
      for (std::size_t s = 0; s < n; ++s) best_fit[s] = level_of[block_of[s]];
    }
  }
  return best_fit;
}

}  // namespace testsupport
