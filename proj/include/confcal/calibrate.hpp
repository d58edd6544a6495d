#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "confcal/core.hpp"
#include "confcal/wilson.hpp"

namespace confcal {

inline constexpr const char* kModelVersion = "confcal/1";

/// Default calibration-intensity bound. Task-specific presets in the 0.2-2
/// range are common; pass them explicitly.
inline constexpr double kDefaultLambda = 2.0;

/**
 * Bounded deviation shrinkage: g(z) = lambda * (2 / (1 + e^{-z/2}) - 1),
 * clamped to min(g(z), z). g passes through the origin, is monotone, and
 * saturates at lambda, so large deviations are pulled back to a fixed
 * confidence level while small ones shrink almost linearly. The min() keeps
 * the transformed deviation at or below the solved one even when lambda > 4,
 * which is what guarantees the calibrated mean stays between p and p_hat.
 */
inline double z_transform(double z, double lambda) {
  if (!(z >= 0.0)) throw NumericError("z_transform: z must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("z_transform: lambda must be > 0");
  const double g = lambda * (2.0 / (1.0 + std::exp(-z / 2.0)) - 1.0);
  return std::min(g, z);
}

struct CalibratedMean {
  double p_hat_prime = 0.0;
  double multiplier = 1.0;
};

/**
 * Calibrated subset mean: solve the deviation score of (n, p, p_hat),
 * shrink it through the z-transform, and re-evaluate the same Wilson bound
 * at the reduced deviation. The result lies weakly between p and p_hat.
 * A subset with p_hat == p is left untouched (multiplier exactly 1).
 */
inline CalibratedMean calibrated_mean(const SubsetStats& s, double lambda) {
  if (s.n == 0) throw NumericError("calibrated_mean: empty subset");
  if (s.p_hat == s.p) return {s.p, 1.0};

  const double z = solve_deviation(s);
  const double zp = z_transform(z, lambda);
  const double target = clamp_mean(s.p_hat);
  const WilsonInterval iv = wilson_interval(s.p, s.n, zp);
  // clamping scrubs the solver's bracket residual, making betweenness exact
  const double prime = std::clamp(target > s.p ? iv.upper : iv.lower,
                                  std::min(s.p, target), std::max(s.p, target));
  return {prime, prime / std::clamp(s.p_hat, kMeanFloor, 1.0)};
}

/**
 * Per-subset multiplicative calibrator over B equal-frequency prediction
 * bins. B = 1 disables binning. Edges are midpoints between adjacent bins'
 * boundary predictions; out-of-range predictions clamp to the end bins.
 */
struct BinCalibrator {
  std::vector<double> edges;            // ascending, size B-1
  std::vector<double> multipliers;      // size B
  std::vector<SubsetStats> bin_stats;   // size B, retained for reporting

  std::size_t bins() const { return multipliers.size(); }

  std::size_t bin_index(double prediction) const {
    return static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), prediction) - edges.begin());
  }

  double multiplier_at(double prediction) const {
    return multipliers[bin_index(prediction)];
  }
};

namespace calibrate_detail {

// Equal-frequency split: the first (n mod bins) bins take one extra sample.
inline std::vector<std::size_t> bin_sizes(std::size_t n, std::size_t bins) {
  const std::size_t base = n / bins;
  const std::size_t extra = n % bins;
  std::vector<std::size_t> sizes(bins, base);
  for (std::size_t i = 0; i < extra; ++i) sizes[i] += 1;
  return sizes;
}

// Ties sort by (prediction, original index) so fits are deterministic.
inline void sort_by_prediction(const Dataset& ds, std::vector<std::size_t>& idx) {
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double pa = ds.samples[a].prediction;
    const double pb = ds.samples[b].prediction;
    return pa != pb ? pa < pb : a < b;
  });
}

}  // namespace calibrate_detail

/// Fits one BinCalibrator from the given sample subset (by index).
inline BinCalibrator fit_bin_calibrator(const Dataset& ds,
                                        std::vector<std::size_t> subset,
                                        std::size_t bins, double lambda) {
  if (subset.empty()) throw DataError("fit_bin_calibrator: empty subset");
  if (bins < 1) throw ConfigError("fit_bin_calibrator: bins must be >= 1");

  calibrate_detail::sort_by_prediction(ds, subset);
  const std::size_t b = std::min(bins, subset.size());
  const std::vector<std::size_t> sizes = calibrate_detail::bin_sizes(subset.size(), b);

  BinCalibrator out;
  out.multipliers.reserve(b);
  out.bin_stats.reserve(b);
  std::size_t start = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const std::vector<std::size_t> bin(subset.begin() + start,
                                       subset.begin() + start + sizes[i]);
    const SubsetStats st = stats(ds, bin);
    const CalibratedMean cm = calibrated_mean(st, lambda);
    out.multipliers.push_back(cm.multiplier);
    out.bin_stats.push_back(st);
    if (i + 1 < b) {
      const double last_here = ds.samples[subset[start + sizes[i] - 1]].prediction;
      const double first_next = ds.samples[subset[start + sizes[i]]].prediction;
      out.edges.push_back(0.5 * (last_here + first_next));
    }
    start += sizes[i];
  }
  return out;
}

/**
 * Calibrator for one target field: a BinCalibrator per observed field value
 * plus a fallback fit on the whole dataset. A value unseen at fit time falls
 * back to the global calibrator: zero observations carry no field-specific
 * evidence, so the global posterior is the best available prior.
 */
struct FieldCalibrator {
  std::string field;
  std::map<std::string, BinCalibrator> table;
  BinCalibrator fallback;

  const BinCalibrator& calibrator_for(const std::string& value) const {
    const auto it = table.find(value);
    return it == table.end() ? fallback : it->second;
  }
};

inline FieldCalibrator fit_field(const Dataset& ds, const std::string& field,
                                 std::size_t bins, double lambda) {
  if (ds.empty()) throw DataError("fit_field: empty dataset");
  FieldCalibrator out;
  out.field = field;
  for (const auto& [value, subset] : partition(ds, field)) {
    out.table.emplace(value, fit_bin_calibrator(ds, subset, bins, lambda));
  }
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  out.fallback = fit_bin_calibrator(ds, std::move(all), bins, lambda);
  return out;
}

/// Per-field scaling multiplier for one sample (Eq-style p_calib = m * p_pred
/// when used alone; fusion combines several).
inline double apply_field(const FieldCalibrator& cal, const FieldSpec& spec,
                          const Sample& sample) {
  const std::size_t fi = spec.index_of(cal.field);
  return cal.calibrator_for(sample.values[fi]).multiplier_at(sample.prediction);
}

/// K per-field calibrators plus fusion weights; immutable once fitted.
struct ConfCalibModel {
  FieldSpec spec;
  double lambda = kDefaultLambda;
  std::size_t bins = 1;
  std::vector<FieldCalibrator> calibrators;  // aligned with spec.names
  std::vector<double> weights;               // simplex weights, sum to 1
  std::string version = kModelVersion;

  void validate() const {
    spec.validate();
    if (calibrators.size() != spec.k() || weights.size() != spec.k())
      throw ConfigError("model: calibrators/weights must match field count");
    if (!(lambda > 0.0)) throw ConfigError("model: lambda must be > 0");
    if (bins < 1) throw ConfigError("model: bins must be >= 1");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("model: weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("model: weights must sum to 1");
  }
};

/// Fits all K field calibrators with uniform fusion weights; use
/// fit_weights() afterwards to grid-search the weights.
inline ConfCalibModel fit_confcalib(const Dataset& ds, std::size_t bins,
                                    double lambda) {
  ds.spec.validate();
  if (ds.empty()) throw DataError("fit_confcalib: empty dataset");
  if (!(lambda > 0.0)) throw ConfigError("fit_confcalib: lambda must be > 0");
  if (bins < 1) throw ConfigError("fit_confcalib: bins must be >= 1");

  ConfCalibModel model;
  model.spec = ds.spec;
  model.lambda = lambda;
  model.bins = bins;
  model.calibrators.reserve(ds.spec.k());
  for (const std::string& name : ds.spec.names) {
    model.calibrators.push_back(fit_field(ds, name, bins, lambda));
  }
  model.weights.assign(ds.spec.k(), 1.0 / static_cast<double>(ds.spec.k()));
  return model;
}

/// The K per-field multipliers for one sample. calibrators are aligned with
/// the field spec, so no name lookup is needed.
inline std::vector<double> field_multipliers(const ConfCalibModel& model,
                                             const Sample& sample) {
  std::vector<double> out(model.calibrators.size());
  for (std::size_t i = 0; i < model.calibrators.size(); ++i) {
    out[i] = model.calibrators[i]
                 .calibrator_for(sample.values[i])
                 .multiplier_at(sample.prediction);
  }
  return out;
}

}  // namespace confcal
