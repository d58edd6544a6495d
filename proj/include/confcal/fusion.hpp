#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "confcal/calibrate.hpp"
#include "confcal/core.hpp"
#include "confcal/metrics.hpp"

namespace confcal {

/// Simplex weights on a fixed grid; after fitting, every weight is an
/// integer multiple of `step`.
struct FusionWeights {
  std::vector<double> weights;
  double step = 0.05;
};

/**
 * Multi-field joint calibration: the weighted geometric mean of the K
 * per-field multipliers scales the original prediction. The result is
 * clamped into [1e-6, 1-1e-6].
 */
inline double fuse(std::span<const double> multipliers,
                   std::span<const double> weights, double p_pred) {
  if (multipliers.size() != weights.size())
    throw ConfigError("fuse: multiplier/weight count mismatch");
  double scale = 1.0;
  for (std::size_t i = 0; i < multipliers.size(); ++i) {
    if (!(multipliers[i] > 0.0)) throw NumericError("fuse: multipliers must be > 0");
    if (weights[i] == 1.0) {
      scale *= multipliers[i];
    } else if (weights[i] != 0.0) {
      scale *= std::pow(multipliers[i], weights[i]);
    }
  }
  return clamp_probability(scale * p_pred);
}

inline double apply_model(const ConfCalibModel& model, const Sample& sample) {
  return fuse(field_multipliers(model, sample), model.weights, sample.prediction);
}

inline std::vector<double> apply_dataset(const ConfCalibModel& model, const Dataset& ds) {
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = apply_model(model, ds.samples[i]);
  return out;
}

namespace fusion_detail {

inline std::size_t lattice_size(std::size_t k, std::size_t resolution) {
  // C(resolution + k - 1, k - 1)
  std::size_t result = 1;
  for (std::size_t i = 1; i < k; ++i) {
    result = result * (resolution + i) / i;
  }
  return result;
}

/// Enumerates all integer compositions (a_1..a_k) with sum = resolution, in
/// lexicographically ascending order of the resulting weight vector.
inline void for_each_lattice_point(
    std::size_t k, std::size_t resolution,
    const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> counts(k, 0);
  const std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos,
                                                                std::size_t left) {
    if (pos + 1 == k) {
      counts[pos] = left;
      visit(counts);
      return;
    }
    for (std::size_t a = 0; a <= left; ++a) {
      counts[pos] = a;
      rec(pos + 1, left - a);
    }
  };
  rec(0, resolution);
}

inline std::size_t parse_resolution(double step) {
  if (!(step > 0.0 && step <= 1.0))
    throw ConfigError("fit_weights: step must be in (0, 1]");
  const double inv = 1.0 / step;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) > 1e-9)
    throw ConfigError("fit_weights: 1/step must be an integer");
  return static_cast<std::size_t>(rounded);
}

}  // namespace fusion_detail

struct WeightObjectiveOptions {
  std::size_t ece_bins = 100;
  std::size_t mvce_shuffles = 32;
  std::uint64_t seed = 42;
};

/**
 * Grid search over the simplex lattice {a * step : sum(a) = 1/step} for the
 * weight vector minimizing the given objective on the dataset. Per-field
 * multipliers are computed once per sample and reused across all lattice
 * points. Ties break toward the lexicographically smallest weight vector.
 *
 * Objectives: "field-rce:<field>", "multi-field-rce", "ece", "mvce".
 */
inline FusionWeights fit_weights(const ConfCalibModel& model, const Dataset& ds,
                                 const std::string& objective, double step,
                                 const WeightObjectiveOptions& opt = {}) {
  model.validate();
  if (ds.empty()) throw DataError("fit_weights: empty dataset");
  if (ds.spec.names != model.spec.names)
    throw ConfigError("fit_weights: dataset fields do not match the model");

  const std::size_t k = model.spec.k();
  if (k == 1) return {{1.0}, step};
  const std::size_t resolution = fusion_detail::parse_resolution(step);

  const std::size_t n = ds.size();
  std::vector<double> mults(n * k);
  std::vector<double> p_pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> m = field_multipliers(model, ds.samples[i]);
    std::copy(m.begin(), m.end(), mults.begin() + static_cast<std::ptrdiff_t>(i * k));
    p_pred[i] = ds.samples[i].prediction;
  }
  const std::vector<int> labels = labels_of(ds);

  // Resolve the objective into a function of the calibrated predictions.
  std::function<double(std::span<const double>)> score;
  if (objective.rfind("field-rce:", 0) == 0) {
    const std::string field = objective.substr(10);
    auto groups = value_groups(ds, field);
    score = [groups = std::move(groups), &labels](std::span<const double> c) {
      return field_rce(c, labels, groups);
    };
  } else if (objective == "multi-field-rce") {
    std::vector<std::vector<std::vector<std::size_t>>> all_groups;
    for (const std::string& f : ds.spec.names) all_groups.push_back(value_groups(ds, f));
    score = [all_groups = std::move(all_groups), &labels](std::span<const double> c) {
      double sum = 0.0;
      for (const auto& g : all_groups) sum += field_rce(c, labels, g);
      return sum / static_cast<double>(all_groups.size());
    };
  } else if (objective == "ece") {
    score = [&labels, &opt](std::span<const double> c) {
      return ece(c, labels, opt.ece_bins);
    };
  } else if (objective == "mvce") {
    score = [&labels, &opt](std::span<const double> c) {
      return mvce(c, labels, opt.ece_bins, opt.mvce_shuffles, opt.seed);
    };
  } else {
    throw ConfigError("fit_weights: unknown objective '" + objective + "'");
  }

  FusionWeights best;
  best.step = step;
  double best_score = 0.0;
  bool have_best = false;
  std::vector<double> calibrated(n);
  std::vector<double> weights(k);

  fusion_detail::for_each_lattice_point(
      k, resolution, [&](const std::vector<std::size_t>& counts) {
        for (std::size_t j = 0; j < k; ++j)
          weights[j] = static_cast<double>(counts[j]) * step;
        for (std::size_t i = 0; i < n; ++i) {
          calibrated[i] = fuse({mults.data() + i * k, k}, weights, p_pred[i]);
        }
        const double value = score(calibrated);
        if (!have_best || value < best_score) {
          have_best = true;
          best_score = value;
          best.weights = weights;
        }
      });
  return best;
}

}  // namespace confcal
