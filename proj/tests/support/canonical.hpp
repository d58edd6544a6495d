#pragma once

// Shared fixtures for the test suites: the seeded two-field generator config
// used by the end-to-end checks, plus small filesystem helpers.

#include <filesystem>
#include <fstream>
#include <string>

#include "confcal/io.hpp"
#include "confcal/rng.hpp"
#include "confcal/synth.hpp"

namespace testsupport {

/// Two-field generator: every field value carries a real effect (so ranking
/// is meaningful), one site value is overestimated by a full logit, and the
/// global temperature adds a mild pull toward 0.5.
inline confcal::SynthConfig canonical_config(std::size_t n_samples = 100000) {
  confcal::SynthConfig cfg;
  cfg.seed = 42;
  cfg.n_samples = n_samples;
  cfg.base_rate = 0.1;
  cfg.temperature = 1.2;
  cfg.fields = {{"site", 20}, {"app", 10}};
  for (std::size_t i = 0; i < 20; ++i) {
    cfg.truth_shifts["site"]["v" + std::to_string(i)] =
        -0.8 + 1.6 * static_cast<double>(i) / 19.0;
  }
  for (std::size_t i = 0; i < 10; ++i) {
    cfg.truth_shifts["app"]["v" + std::to_string(i)] =
        -0.5 + 1.0 * static_cast<double>(i) / 9.0;
  }
  cfg.bias_shifts["site"]["v0"] = 1.0;
  cfg.validation_ratio = 0.5;
  cfg.test_ratio = 0.5;
  return cfg;
}

/// The canonical config as the JSON schema the CLI's synth command reads.
inline confcal::json canonical_config_json(std::size_t n_samples = 100000) {
  const confcal::SynthConfig cfg = canonical_config(n_samples);
  confcal::json fields = confcal::json::array();
  for (const auto& f : cfg.fields) {
    fields.push_back({{"name", f.name}, {"cardinality", f.cardinality}});
  }
  return confcal::json{
      {"seed", cfg.seed},
      {"n_samples", cfg.n_samples},
      {"base_rate", cfg.base_rate},
      {"temperature", cfg.temperature},
      {"fields", fields},
      {"truth_shifts", cfg.truth_shifts},
      {"bias_shifts", cfg.bias_shifts},
      {"split", {{"validation", cfg.validation_ratio}, {"test", cfg.test_ratio}}}};
}

/// Seeded Bernoulli subsample of a dataset; rate 1.0 returns it unchanged.
inline confcal::Dataset subsample(const confcal::Dataset& ds, double rate,
                                  std::uint64_t seed) {
  if (rate >= 1.0) return ds;
  confcal::SplitMix64 rng(seed);
  confcal::Dataset out;
  out.spec = ds.spec;
  for (const confcal::Sample& s : ds.samples) {
    if (rng.uniform() < rate) out.samples.push_back(s);
  }
  return out;
}

/// Fresh scratch directory under the system temp root.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("confcal_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace testsupport
