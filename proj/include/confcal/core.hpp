#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace confcal {

// Error taxonomy, mirrored by the CLI exit codes (2/3/4).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Reserved token for a sample that carries no value in a target field.
// It forms its own subset so real values are never contaminated.
inline constexpr const char* kMissingValue = "__missing__";

// Calibrated probabilities are kept away from exact 0/1 so downstream
// log-space math stays finite.
inline constexpr double kProbFloor = 1e-6;
inline constexpr double kProbCeil = 1.0 - 1e-6;

// Subset means are clamped into this range before any interval inversion;
// the Wilson bounds never attain 0/1 at finite z.
inline constexpr double kMeanFloor = 1e-9;
inline constexpr double kMeanCeil = 1.0 - 1e-9;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbFloor, kProbCeil);
}

inline double clamp_mean(double p) { return std::clamp(p, kMeanFloor, kMeanCeil); }

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Log-odds of p; callers clamp p away from 0/1 first.
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Ordered list of the K target feature fields.
struct FieldSpec {
  std::vector<std::string> names;

  std::size_t k() const { return names.size(); }

  /// Index of `name` in the configured order; ConfigError if unknown.
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw ConfigError("unknown field '" + name + "'");
  }

  bool contains(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }

  /// Enforces uniqueness, non-empty names, and K >= 1.
  void validate() const {
    if (names.empty()) throw ConfigError("field spec requires at least one field");
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) throw ConfigError("field names must be non-empty");
      for (std::size_t j = i + 1; j < names.size(); ++j) {
        if (names[i] == names[j])
          throw ConfigError("duplicate field name '" + names[i] + "'");
      }
    }
  }
};

/// One scored record. `values` is aligned with the dataset's FieldSpec,
/// so field names are stored once, not per sample.
struct Sample {
  double prediction = 0.0;
  int label = 0;
  std::vector<std::string> values;
  std::optional<std::int64_t> timestamp;
};

struct Dataset {
  FieldSpec spec;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  const std::string& value_of(std::size_t sample, std::size_t field) const {
    return samples[sample].values[field];
  }

  /// Checks per-sample invariants (prediction range, binary label, arity).
  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      if (!(s.prediction >= 0.0 && s.prediction <= 1.0))
        throw DataError("sample " + std::to_string(i) + ": prediction outside [0,1]");
      if (s.label != 0 && s.label != 1)
        throw DataError("sample " + std::to_string(i) + ": label must be 0 or 1");
      if (s.values.size() != spec.k())
        throw DataError("sample " + std::to_string(i) + ": expected " +
                        std::to_string(spec.k()) + " field values");
    }
  }
};

/// The (n, positives, p, p_hat) statistics of one sample subset; the sole
/// input to confidence-aware fitting.
struct SubsetStats {
  std::uint64_t n = 0;
  std::uint64_t positives = 0;
  double p = 0.0;
  double p_hat = 0.0;
};

/// Subsets are stored as sample indices into the owning dataset, keyed by
/// field value (ordered map, so iteration order is deterministic).
using Partition = std::map<std::string, std::vector<std::size_t>>;

/// Splits the dataset by the given field's values. Every sample lands in
/// exactly one group; the union of groups is the whole dataset.
inline Partition partition(const Dataset& ds, const std::string& field) {
  const std::size_t fi = ds.spec.index_of(field);
  Partition groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    groups[ds.value_of(i, fi)].push_back(i);
  }
  return groups;
}

inline SubsetStats stats(const Dataset& ds, const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw DataError("stats: empty subset");
  SubsetStats out;
  out.n = subset.size();
  double pred_sum = 0.0;
  for (std::size_t i : subset) {
    out.positives += static_cast<std::uint64_t>(ds.samples[i].label);
    pred_sum += ds.samples[i].prediction;
  }
  out.p = static_cast<double>(out.positives) / static_cast<double>(out.n);
  out.p_hat = pred_sum / static_cast<double>(out.n);
  return out;
}

inline SubsetStats stats(const std::vector<Sample>& subset) {
  if (subset.empty()) throw DataError("stats: empty subset");
  SubsetStats out;
  out.n = subset.size();
  double pred_sum = 0.0;
  for (const Sample& s : subset) {
    out.positives += static_cast<std::uint64_t>(s.label);
    pred_sum += s.prediction;
  }
  out.p = static_cast<double>(out.positives) / static_cast<double>(out.n);
  out.p_hat = pred_sum / static_cast<double>(out.n);
  return out;
}

}  // namespace confcal
