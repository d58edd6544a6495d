#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confcal/calibrate.hpp"
#include "confcal/core.hpp"
#include "confcal/fusion.hpp"
#include "confcal/metrics.hpp"

namespace confcal {

/// Sliding-window refit schedule plus the model settings used at each refit.
struct StreamConfig {
  std::int64_t refit_interval = 1800;  // seconds between refits
  std::int64_t window = 86400;         // trailing fit window, seconds
  std::size_t bins = 1;
  double lambda = kDefaultLambda;
  bool grid_weights = false;           // uniform weights when false
  std::string objective = "multi-field-rce";
  double step = 0.05;
  EvalOptions eval;

  void validate() const {
    if (refit_interval <= 0) throw ConfigError("stream: refit_interval must be > 0");
    if (window < refit_interval)
      throw ConfigError("stream: window must be >= refit_interval");
    if (bins < 1) throw ConfigError("stream: bins must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("stream: lambda must be > 0");
  }
};

/// Metrics for one interval of the simulated deployment. Values are NaN
/// where the interval is too small or single-class for the metric.
struct IntervalReport {
  std::int64_t interval_start = 0;
  std::size_t n = 0;
  std::map<std::string, double> entries;
};

namespace stream_detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline IntervalReport interval_metrics(const Dataset& interval,
                                       const std::vector<double>& calibrated,
                                       std::int64_t start, const EvalOptions& opt) {
  IntervalReport rep;
  rep.interval_start = start;
  rep.n = interval.size();

  for (const std::string& f : interval.spec.names) rep.entries["field-rce:" + f] = kNaN;
  rep.entries["multi-field-rce"] = kNaN;
  rep.entries["ece"] = kNaN;
  rep.entries["mvce"] = kNaN;
  rep.entries["auc"] = kNaN;
  rep.entries["logloss"] = kNaN;
  if (interval.empty()) return rep;

  const std::vector<int> labels = labels_of(interval);
  double rce_sum = 0.0;
  for (const std::string& f : interval.spec.names) {
    const double v = field_rce(calibrated, labels, value_groups(interval, f));
    rep.entries["field-rce:" + f] = v;
    rce_sum += v;
  }
  rep.entries["multi-field-rce"] = rce_sum / static_cast<double>(interval.spec.k());
  const std::size_t bins = std::min(opt.ece_bins, interval.size());
  rep.entries["ece"] = ece(calibrated, labels, bins);
  rep.entries["mvce"] = mvce(calibrated, labels, bins, opt.mvce_shuffles, opt.seed);
  try {
    rep.entries["auc"] = auc(calibrated, labels);
  } catch (const DataError&) {
    // single-class interval
  }
  rep.entries["logloss"] = logloss(calibrated, labels);
  return rep;
}

}  // namespace stream_detail

/**
 * Offline simulation of the online deployment loop: walk the time-ordered
 * log in refit_interval steps; at each step refit on the trailing window
 * (keeping the previous snapshot when the window is empty, identity before
 * the first successful refit) and score the next interval's samples with
 * the snapshot. Fit data is always strictly before the interval it scores.
 */
inline std::vector<IntervalReport> simulate_stream(const Dataset& log,
                                                   const StreamConfig& cfg) {
  cfg.validate();
  log.spec.validate();
  if (log.empty()) return {};

  std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (!log.samples[i].timestamp)
      throw DataError("stream: sample " + std::to_string(i) + " has no timestamp");
    if (*log.samples[i].timestamp < prev_ts)
      throw DataError("stream: log is not sorted by timestamp");
    prev_ts = *log.samples[i].timestamp;
  }

  const std::int64_t t0 = *log.samples.front().timestamp;
  const std::int64_t t_end = *log.samples.back().timestamp;

  // index of the first sample with timestamp >= t (log is sorted)
  const auto first_at = [&](std::int64_t t) {
    std::size_t lo = 0;
    std::size_t hi = log.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (*log.samples[mid].timestamp < t) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo;
  };

  const auto slice = [&](std::size_t begin, std::size_t end) {
    Dataset ds;
    ds.spec = log.spec;
    ds.samples.assign(log.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                      log.samples.begin() + static_cast<std::ptrdiff_t>(end));
    return ds;
  };

  std::optional<ConfCalibModel> snapshot;  // published model; identity until set
  std::vector<IntervalReport> reports;

  for (std::int64_t start = t0; start <= t_end; start += cfg.refit_interval) {
    const std::size_t fit_begin = first_at(start - cfg.window);
    const std::size_t fit_end = first_at(start);
    if (fit_end > fit_begin) {
      const Dataset window = slice(fit_begin, fit_end);
      ConfCalibModel model = fit_confcalib(window, cfg.bins, cfg.lambda);
      if (cfg.grid_weights && window.spec.k() > 1) {
        WeightObjectiveOptions wopt;
        wopt.ece_bins = std::min(cfg.eval.ece_bins, window.size());
        wopt.mvce_shuffles = cfg.eval.mvce_shuffles;
        wopt.seed = cfg.eval.seed;
        model.weights = fit_weights(model, window, cfg.objective, cfg.step, wopt).weights;
      }
      snapshot = std::move(model);  // atomic swap in the deployment analogue
    }

    const std::size_t iv_begin = first_at(start);
    const std::size_t iv_end = first_at(start + cfg.refit_interval);
    const Dataset interval = slice(iv_begin, iv_end);
    std::vector<double> calibrated;
    if (snapshot) {
      calibrated = apply_dataset(*snapshot, interval);
    } else {
      calibrated = predictions_of(interval);  // identity model
    }
    reports.push_back(
        stream_detail::interval_metrics(interval, calibrated, start, cfg.eval));
  }
  return reports;
}

}  // namespace confcal
