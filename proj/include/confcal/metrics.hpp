#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "confcal/core.hpp"
#include "confcal/rng.hpp"

namespace confcal {

namespace metrics_detail {

inline std::vector<std::size_t> bin_sizes(std::size_t n, std::size_t bins) {
  const std::size_t base = n / bins;
  const std::size_t extra = n % bins;
  std::vector<std::size_t> sizes(bins, base);
  for (std::size_t i = 0; i < extra; ++i) sizes[i] += 1;
  return sizes;
}

inline std::vector<std::size_t> order_by_prediction(std::span<const double> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a] != preds[b] ? preds[a] < preds[b] : a < b;
  });
  return order;
}

}  // namespace metrics_detail

/**
 * Field-level relative calibration error: each field-value subset
 * contributes |subset| * |sum(y - p_hat)| / sum(y), normalized by the full
 * dataset size. Subsets with zero positives have an undefined ratio and are
 * skipped; the normalizer stays the full dataset size.
 */
inline double field_rce(std::span<const double> preds, std::span<const int> labels,
                        const std::vector<std::vector<std::size_t>>& groups) {
  if (preds.empty()) throw DataError("field_rce: empty dataset");
  double total = 0.0;
  for (const auto& idx : groups) {
    double residual = 0.0;
    std::uint64_t positives = 0;
    for (std::size_t i : idx) {
      residual += static_cast<double>(labels[i]) - preds[i];
      positives += static_cast<std::uint64_t>(labels[i]);
    }
    if (positives == 0) continue;
    total += static_cast<double>(idx.size()) * std::abs(residual) /
             static_cast<double>(positives);
  }
  return total / static_cast<double>(preds.size());
}

inline std::vector<std::vector<std::size_t>> value_groups(const Dataset& ds,
                                                          const std::string& field) {
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [value, idx] : partition(ds, field)) groups.push_back(std::move(idx));
  return groups;
}

inline std::vector<double> predictions_of(const Dataset& ds) {
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ds.samples[i].prediction;
  return out;
}

inline std::vector<int> labels_of(const Dataset& ds) {
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ds.samples[i].label;
  return out;
}

inline double field_rce(const Dataset& ds, const std::string& field) {
  return field_rce(predictions_of(ds), labels_of(ds), value_groups(ds, field));
}

inline double multi_field_rce(const Dataset& ds, const std::vector<std::string>& fields) {
  if (fields.empty()) throw ConfigError("multi_field_rce: needs at least one field");
  double sum = 0.0;
  for (const std::string& f : fields) sum += field_rce(ds, f);
  return sum / static_cast<double>(fields.size());
}

/**
 * Expected calibration error over T equal-frequency bins of the sorted
 * predictions: (1/|D|) * sum_t |sum_{bin t}(y - p_hat)|. Remainder samples
 * go one-per-bin to the first |D| mod T bins.
 */
inline double ece(std::span<const double> preds, std::span<const int> labels,
                  std::size_t bins) {
  const std::size_t n = preds.size();
  if (bins < 1) throw ConfigError("ece: bins must be >= 1");
  if (n < bins) throw DataError("ece: dataset smaller than bin count");

  const std::vector<std::size_t> order = metrics_detail::order_by_prediction(preds);
  const std::vector<std::size_t> sizes = metrics_detail::bin_sizes(n, bins);
  double total = 0.0;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    double residual = 0.0;
    for (std::size_t k = start; k < start + s; ++k) {
      const std::size_t i = order[k];
      residual += static_cast<double>(labels[i]) - preds[i];
    }
    total += std::abs(residual);
    start += s;
  }
  return total / static_cast<double>(n);
}

inline double ece(const Dataset& ds, std::size_t bins) {
  return ece(predictions_of(ds), labels_of(ds), bins);
}

/**
 * Multi-view calibration error: R seeded shuffles, positional split into T
 * bins, each bin contributing |sum(y - p_hat)| / |bin|; mean over all R*T
 * terms. Shuffle r uses SplitMix64(seed + r), so the views are independent
 * of each other and reproducible in any evaluation order.
 */
inline double mvce(std::span<const double> preds, std::span<const int> labels,
                   std::size_t bins, std::size_t shuffles, std::uint64_t seed) {
  const std::size_t n = preds.size();
  if (shuffles < 1) throw ConfigError("mvce: shuffles must be >= 1");
  if (bins < 1) throw ConfigError("mvce: bins must be >= 1");
  if (n < bins) throw DataError("mvce: dataset smaller than bin count");

  const std::vector<std::size_t> sizes = metrics_detail::bin_sizes(n, bins);
  std::vector<std::size_t> perm(n);
  double total = 0.0;
  for (std::size_t r = 0; r < shuffles; ++r) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(seed + r);
    shuffle(perm, rng);
    std::size_t start = 0;
    for (std::size_t s : sizes) {
      double residual = 0.0;
      for (std::size_t k = start; k < start + s; ++k) {
        const std::size_t i = perm[k];
        residual += static_cast<double>(labels[i]) - preds[i];
      }
      total += std::abs(residual) / static_cast<double>(s);
      start += s;
    }
  }
  return total / static_cast<double>(shuffles * bins);
}

inline double mvce(const Dataset& ds, std::size_t bins, std::size_t shuffles,
                   std::uint64_t seed) {
  return mvce(predictions_of(ds), labels_of(ds), bins, shuffles, seed);
}

/// Mann-Whitney AUC with average ranks on tied predictions.
inline double auc(std::span<const double> preds, std::span<const int> labels) {
  const std::size_t n = preds.size();
  if (n == 0) throw DataError("auc: empty dataset");
  const std::vector<std::size_t> order = metrics_detail::order_by_prediction(preds);

  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && preds[order[j]] == preds[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // 1-based ranks
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }

  std::uint64_t n_pos = 0;
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      ++n_pos;
      pos_rank_sum += rank[k];
    }
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auc: requires both classes present");
  return (pos_rank_sum -
          0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double auc(const Dataset& ds) { return auc(predictions_of(ds), labels_of(ds)); }

/// Mean negative log-likelihood; predictions are clamped to [1e-6, 1-1e-6].
inline double logloss(std::span<const double> preds, std::span<const int> labels) {
  if (preds.empty()) throw DataError("logloss: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = clamp_probability(preds[i]);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(preds.size());
}

inline double logloss(const Dataset& ds) {
  return logloss(predictions_of(ds), labels_of(ds));
}

struct EvalOptions {
  std::size_t ece_bins = 100;
  std::size_t mvce_shuffles = 32;
  std::uint64_t seed = 42;
};

/// Metric table for one scored dataset, with the evaluation config echoed
/// alongside so reports are self-describing.
struct EvalReport {
  std::map<std::string, double> entries;
  std::vector<std::string> fields;
  std::size_t ece_bins = 0;
  std::size_t mvce_shuffles = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
};

/// Runs the full metric suite over the dataset's configured fields.
inline EvalReport evaluate(const Dataset& ds, const EvalOptions& opt = {}) {
  ds.spec.validate();
  if (ds.empty()) throw DataError("evaluate: empty dataset");

  EvalReport report;
  report.fields = ds.spec.names;
  report.ece_bins = opt.ece_bins;
  report.mvce_shuffles = opt.mvce_shuffles;
  report.seed = opt.seed;
  report.n = ds.size();

  const std::vector<double> preds = predictions_of(ds);
  const std::vector<int> labels = labels_of(ds);

  double rce_sum = 0.0;
  for (const std::string& f : ds.spec.names) {
    const double v = field_rce(preds, labels, value_groups(ds, f));
    report.entries["field-rce:" + f] = v;
    rce_sum += v;
  }
  report.entries["multi-field-rce"] = rce_sum / static_cast<double>(ds.spec.k());
  report.entries["ece"] = ece(preds, labels, opt.ece_bins);
  report.entries["mvce"] = mvce(preds, labels, opt.ece_bins, opt.mvce_shuffles, opt.seed);
  report.entries["auc"] = auc(preds, labels);
  report.entries["logloss"] = logloss(preds, labels);
  return report;
}

}  // namespace confcal
