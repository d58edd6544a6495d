#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "confcal/calibrate.hpp"
#include "confcal/core.hpp"

namespace confcal {

enum class BaselineKind { kNaive, kPlatt, kHistBin, kIsotonic };

inline const char* baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kNaive: return "naive";
    case BaselineKind::kPlatt: return "platt";
    case BaselineKind::kHistBin: return "histbin";
    case BaselineKind::kIsotonic: return "isotonic";
  }
  throw ConfigError("unknown baseline kind");
}

inline BaselineKind baseline_kind(const std::string& name) {
  if (name == "naive") return BaselineKind::kNaive;
  if (name == "platt") return BaselineKind::kPlatt;
  if (name == "histbin") return BaselineKind::kHistBin;
  if (name == "isotonic") return BaselineKind::kIsotonic;
  throw ConfigError("unknown calibrator '" + name + "'");
}

/**
 * A fitted classical calibrator. The parameter slots are kind-specific:
 * naive uses k; platt uses (a, b); histbin and isotonic use edges + levels
 * (equal-frequency bin rates, respectively monotone block values).
 */
struct CalibratorArtifact {
  BaselineKind kind = BaselineKind::kNaive;
  double naive_k = 1.0;
  double platt_a = 1.0;
  double platt_b = 0.0;
  std::vector<double> edges;
  std::vector<double> levels;

  double apply(double p) const {
    switch (kind) {
      case BaselineKind::kNaive:
        return clamp_probability(naive_k * p);
      case BaselineKind::kPlatt:
        return sigmoid(platt_a * logit(clamp_probability(p)) + platt_b);
      case BaselineKind::kHistBin:
      case BaselineKind::kIsotonic: {
        const std::size_t i = static_cast<std::size_t>(
            std::upper_bound(edges.begin(), edges.end(), p) - edges.begin());
        return levels[i];
      }
    }
    throw ConfigError("unknown baseline kind");
  }
};

/// Scales every prediction by k = mean(label) / mean(prediction), making the
/// calibrated mean match the positive rate exactly (before clamping).
inline CalibratorArtifact fit_naive(const Dataset& ds) {
  if (ds.empty()) throw DataError("fit_naive: empty dataset");
  double label_sum = 0.0;
  double pred_sum = 0.0;
  for (const Sample& s : ds.samples) {
    label_sum += static_cast<double>(s.label);
    pred_sum += s.prediction;
  }
  if (pred_sum <= 0.0) throw DataError("fit_naive: mean prediction is zero");
  CalibratorArtifact art;
  art.kind = BaselineKind::kNaive;
  art.naive_k = label_sum / pred_sum;
  return art;
}

/**
 * Platt scaling on the logit of the prediction: p -> sigmoid(a*logit(p)+b),
 * (a, b) fit by maximum likelihood with a damped Newton iteration
 * (initialized at the identity, <= 100 steps, gradient tolerance 1e-8).
 */
inline CalibratorArtifact fit_platt(const Dataset& ds) {
  if (ds.empty()) throw DataError("fit_platt: empty dataset");
  const std::size_t n = ds.size();
  std::vector<double> x(n);
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = logit(clamp_probability(ds.samples[i].prediction));
    positives += static_cast<std::uint64_t>(ds.samples[i].label);
  }
  if (positives == 0 || positives == n)
    throw DataError("fit_platt: requires both classes present");

  const auto loss = [&](double a, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = clamp_probability(sigmoid(a * x[i] + b));
      total -= ds.samples[i].label == 1 ? std::log(q) : std::log(1.0 - q);
    }
    return total / static_cast<double>(n);
  };

  double a = 1.0;
  double b = 0.0;
  double current = loss(a, b);
  for (int it = 0; it < 100; ++it) {
    double ga = 0.0, gb = 0.0;
    double haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = sigmoid(a * x[i] + b);
      const double r = q - static_cast<double>(ds.samples[i].label);
      const double w = q * (1.0 - q);
      ga += r * x[i];
      gb += r;
      haa += w * x[i] * x[i];
      hab += w * x[i];
      hbb += w;
    }
    const double nd = static_cast<double>(n);
    ga /= nd; gb /= nd; haa /= nd; hab /= nd; hbb /= nd;
    if (std::max(std::abs(ga), std::abs(gb)) <= 1e-8) break;

    double det = haa * hbb - hab * hab;
    if (det <= 1e-12) {  // flat curvature; regularize toward gradient descent
      haa += 1e-6;
      hbb += 1e-6;
      det = haa * hbb - hab * hab;
    }
    const double da = -(hbb * ga - hab * gb) / det;
    const double db = -(haa * gb - hab * ga) / det;

    double t = 1.0;
    for (int half = 0; half < 40; ++half) {
      const double next = loss(a + t * da, b + t * db);
      if (next < current) {
        a += t * da;
        b += t * db;
        current = next;
        break;
      }
      t *= 0.5;
    }
    if (t < 1e-12) break;
  }

  CalibratorArtifact art;
  art.kind = BaselineKind::kPlatt;
  art.platt_a = a;
  art.platt_b = b;
  return art;
}

/// Equal-frequency histogram binning: bin value = bin positive rate.
inline CalibratorArtifact fit_histbin(const Dataset& ds, std::size_t bins) {
  if (ds.empty()) throw DataError("fit_histbin: empty dataset");
  if (bins < 1) throw ConfigError("fit_histbin: bins must be >= 1");
  if (bins > ds.size()) throw DataError("fit_histbin: more bins than samples");

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  calibrate_detail::sort_by_prediction(ds, idx);
  const std::vector<std::size_t> sizes = calibrate_detail::bin_sizes(ds.size(), bins);

  CalibratorArtifact art;
  art.kind = BaselineKind::kHistBin;
  std::size_t start = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    std::uint64_t positives = 0;
    for (std::size_t k = start; k < start + sizes[b]; ++k)
      positives += static_cast<std::uint64_t>(ds.samples[idx[k]].label);
    art.levels.push_back(static_cast<double>(positives) /
                         static_cast<double>(sizes[b]));
    if (b + 1 < bins) {
      const double last_here = ds.samples[idx[start + sizes[b] - 1]].prediction;
      const double first_next = ds.samples[idx[start + sizes[b]]].prediction;
      art.edges.push_back(0.5 * (last_here + first_next));
    }
    start += sizes[b];
  }
  return art;
}

/**
 * Isotonic regression by pool-adjacent-violators over samples sorted by
 * prediction. Equal predictions are merged into one block up front; the
 * result is the unique non-decreasing step function minimizing squared
 * error. Violation checks compare block means in integer arithmetic, and
 * final levels are recomputed as sum/count, so the fit is exact.
 */
inline CalibratorArtifact fit_isotonic(const Dataset& ds) {
  if (ds.empty()) throw DataError("fit_isotonic: empty dataset");

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  calibrate_detail::sort_by_prediction(ds, idx);

  struct Block {
    std::uint64_t label_sum = 0;
    std::uint64_t count = 0;
    double first_pred = 0.0;
    double last_pred = 0.0;
  };
  std::vector<Block> blocks;

  // seed blocks: one per distinct prediction value
  std::size_t i = 0;
  while (i < idx.size()) {
    const double pred = ds.samples[idx[i]].prediction;
    Block blk;
    blk.first_pred = blk.last_pred = pred;
    while (i < idx.size() && ds.samples[idx[i]].prediction == pred) {
      blk.label_sum += static_cast<std::uint64_t>(ds.samples[idx[i]].label);
      blk.count += 1;
      ++i;
    }
    blocks.push_back(blk);
  }

  // pool while an adjacent pair violates monotonicity (prev mean > curr mean)
  std::vector<Block> stack;
  for (const Block& blk : blocks) {
    stack.push_back(blk);
    while (stack.size() >= 2) {
      const Block& prev = stack[stack.size() - 2];
      const Block& curr = stack.back();
      if (prev.label_sum * curr.count <= curr.label_sum * prev.count) break;
      Block merged;
      merged.label_sum = prev.label_sum + curr.label_sum;
      merged.count = prev.count + curr.count;
      merged.first_pred = prev.first_pred;
      merged.last_pred = curr.last_pred;
      stack.pop_back();
      stack.back() = merged;
    }
  }

  CalibratorArtifact art;
  art.kind = BaselineKind::kIsotonic;
  for (std::size_t b = 0; b < stack.size(); ++b) {
    art.levels.push_back(static_cast<double>(stack[b].label_sum) /
                         static_cast<double>(stack[b].count));
    if (b + 1 < stack.size()) {
      art.edges.push_back(0.5 * (stack[b].last_pred + stack[b + 1].first_pred));
    }
  }
  return art;
}

/// Returns a copy of the dataset with predictions passed through `inner`.
inline Dataset transform_predictions(const CalibratorArtifact& inner, Dataset ds) {
  for (Sample& s : ds.samples) s.prediction = inner.apply(s.prediction);
  return ds;
}

/// Recalibration-by-composition: fit a ConfCalib model on top of another
/// calibrator's outputs. Apply-time order is inner first, then the model.
inline ConfCalibModel recalibrate(const CalibratorArtifact& inner,
                                  const Dataset& fit_split, std::size_t bins,
                                  double lambda) {
  return fit_confcalib(transform_predictions(inner, fit_split), bins, lambda);
}

}  // namespace confcal
