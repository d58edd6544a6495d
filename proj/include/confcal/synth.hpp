#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "confcal/core.hpp"
#include "confcal/rng.hpp"

namespace confcal {

/// field -> value -> logit shift
using ShiftTable = std::map<std::string, std::map<std::string, double>>;

struct SynthFieldSpec {
  std::string name;
  std::size_t cardinality = 1;
};

/**
 * Configuration for the miscalibrated-data generator. Field values are drawn
 * uniformly per field; the true rate of a sample is
 * sigmoid(logit(base_rate) + sum of truth shifts), while its prediction is
 * sigmoid((true logit + sum of bias shifts) / temperature). Bias lives in
 * the predictions only, so observed positive rates remain unbiased estimates
 * of the truth and calibrators can be judged against a known target.
 */
struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_samples = 0;
  std::vector<SynthFieldSpec> fields;
  double base_rate = 0.1;
  ShiftTable truth_shifts;
  ShiftTable bias_shifts;
  double temperature = 1.0;
  double validation_ratio = 0.5;
  double test_ratio = 0.5;
  std::int64_t start_timestamp = 1700000000;
  std::int64_t timestamp_step = 1;

  void validate() const {
    if (n_samples == 0) throw ConfigError("synth: n_samples must be > 0");
    if (fields.empty()) throw ConfigError("synth: at least one field required");
    for (const auto& f : fields) {
      if (f.name.empty()) throw ConfigError("synth: field names must be non-empty");
      if (f.cardinality < 1) throw ConfigError("synth: cardinality must be >= 1");
    }
    if (!(base_rate > 0.0 && base_rate < 1.0))
      throw ConfigError("synth: base_rate must be inside (0,1)");
    if (!(temperature > 0.0)) throw ConfigError("synth: temperature must be > 0");
    if (std::abs(validation_ratio + test_ratio - 1.0) > 1e-9)
      throw ConfigError("synth: split ratios must sum to 1");
    if (validation_ratio < 0.0 || test_ratio < 0.0)
      throw ConfigError("synth: split ratios must be non-negative");
    if (timestamp_step < 1) throw ConfigError("synth: timestamp_step must be >= 1");
  }
};

struct SynthData {
  Dataset dataset;            // timestamps ascending; validation rows first
  std::vector<double> truth;  // true probability per sample
  std::size_t validation_size = 0;
};

namespace synth_detail {
inline double shift_of(const ShiftTable& table, const std::string& field,
                       const std::string& value) {
  const auto fit = table.find(field);
  if (fit == table.end()) return 0.0;
  const auto vit = fit->second.find(value);
  return vit == fit->second.end() ? 0.0 : vit->second;
}
}  // namespace synth_detail

/**
 * Deterministic generation: per sample, one bounded draw per field (in field
 * order) followed by one uniform draw for the label, all from
 * SplitMix64(seed). Field values are named v0..v{cardinality-1}.
 */
inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);

  SynthData out;
  for (const auto& f : cfg.fields) out.dataset.spec.names.push_back(f.name);
  out.dataset.spec.validate();
  out.dataset.samples.reserve(cfg.n_samples);
  out.truth.reserve(cfg.n_samples);

  const double base_logit = logit(cfg.base_rate);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Sample s;
    s.values.reserve(cfg.fields.size());
    double truth_logit = base_logit;
    double bias = 0.0;
    for (const auto& f : cfg.fields) {
      const std::uint64_t vi = rng.bounded(f.cardinality);
      std::string value = "v" + std::to_string(vi);
      truth_logit += synth_detail::shift_of(cfg.truth_shifts, f.name, value);
      bias += synth_detail::shift_of(cfg.bias_shifts, f.name, value);
      s.values.push_back(std::move(value));
    }
    const double q = sigmoid(truth_logit);
    s.label = rng.uniform() < q ? 1 : 0;
    s.prediction = sigmoid((truth_logit + bias) / cfg.temperature);
    s.timestamp = cfg.start_timestamp +
                  static_cast<std::int64_t>(i) * cfg.timestamp_step;
    out.dataset.samples.push_back(std::move(s));
    out.truth.push_back(q);
  }

  const double nv = std::round(static_cast<double>(cfg.n_samples) * cfg.validation_ratio);
  out.validation_size =
      std::min(cfg.n_samples, static_cast<std::size_t>(nv));
  return out;
}

inline Dataset validation_split(const SynthData& data) {
  Dataset ds;
  ds.spec = data.dataset.spec;
  ds.samples.assign(data.dataset.samples.begin(),
                    data.dataset.samples.begin() +
                        static_cast<std::ptrdiff_t>(data.validation_size));
  return ds;
}

inline Dataset test_split(const SynthData& data) {
  Dataset ds;
  ds.spec = data.dataset.spec;
  ds.samples.assign(data.dataset.samples.begin() +
                        static_cast<std::ptrdiff_t>(data.validation_size),
                    data.dataset.samples.end());
  return ds;
}

}  // namespace confcal
