#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "confcal/baselines.hpp"
#include "confcal/calibrate.hpp"
#include "confcal/core.hpp"
#include "confcal/fusion.hpp"
#include "confcal/metrics.hpp"
#include "confcal/stream.hpp"
#include "confcal/synth.hpp"

namespace confcal {

using nlohmann::json;

/// Shortest exact decimal representation; parsing it recovers the same bits.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

enum class Format { kCsv, kJsonl };

inline Format format_from_name(const std::string& name) {
  if (name == "csv") return Format::kCsv;
  if (name == "jsonl") return Format::kJsonl;
  throw ConfigError("unknown format '" + name + "' (expected csv or jsonl)");
}

inline Format infer_format(const std::string& path) {
  return path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0
             ? Format::kJsonl
             : Format::kCsv;
}

// ---------------------------------------------------------------------------
// CSV primitives. Plain comma-separated values, no quoting: field values in
// this domain are identifier-like tokens.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // rows[i] is file line i+2
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw DataError("'" + path + "': empty file or missing header");
  strip_cr(line);

  CsvTable table;
  table.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      throw DataError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                      std::to_string(table.header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

inline void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out << ',';
    out << table.header[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << row[c];
    }
    out << '\n';
  }
}

/// Index of `name` in the header, or npos.
inline std::size_t column_index(const CsvTable& table, const std::string& name) {
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) return i;
  }
  return std::string::npos;
}

// ---------------------------------------------------------------------------
// Dataset parsing
// ---------------------------------------------------------------------------

namespace io_detail {

inline double parse_probability_cell(const std::string& cell, const std::string& path,
                                     std::size_t lineno, const std::string& col) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() ||
      !(v >= 0.0 && v <= 1.0))
    throw DataError("'" + path + "' line " + std::to_string(lineno) + ": column '" +
                    col + "' must be a probability in [0,1], got '" + cell + "'");
  return v;
}

inline int parse_label_cell(const std::string& cell, const std::string& path,
                            std::size_t lineno) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw DataError("'" + path + "' line " + std::to_string(lineno) +
                  ": column 'label' must be 0 or 1, got '" + cell + "'");
}

inline std::int64_t parse_timestamp_cell(const std::string& cell, const std::string& path,
                                         std::size_t lineno) {
  std::int64_t v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
    throw DataError("'" + path + "' line " + std::to_string(lineno) +
                    ": column 'timestamp' must be integer epoch seconds, got '" +
                    cell + "'");
  return v;
}

}  // namespace io_detail

inline Dataset parse_dataset_csv(const std::string& path, const FieldSpec& spec,
                                 const std::string& pred_col = "prediction") {
  const CsvTable table = read_csv(path);

  const std::size_t pred_i = column_index(table, pred_col);
  if (pred_i == std::string::npos)
    throw DataError("'" + path + "': missing column '" + pred_col + "'");
  const std::size_t label_i = column_index(table, "label");
  if (label_i == std::string::npos)
    throw DataError("'" + path + "': missing column 'label'");
  std::vector<std::size_t> field_i(spec.k());
  for (std::size_t f = 0; f < spec.k(); ++f) {
    field_i[f] = column_index(table, spec.names[f]);
    if (field_i[f] == std::string::npos)
      throw DataError("'" + path + "': missing column '" + spec.names[f] + "'");
  }
  const std::size_t ts_i = column_index(table, "timestamp");

  Dataset ds;
  ds.spec = spec;
  ds.samples.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::size_t lineno = r + 2;
    const auto& row = table.rows[r];
    Sample s;
    s.prediction = io_detail::parse_probability_cell(row[pred_i], path, lineno, pred_col);
    s.label = io_detail::parse_label_cell(row[label_i], path, lineno);
    s.values.reserve(spec.k());
    for (std::size_t f = 0; f < spec.k(); ++f) {
      const std::string& cell = row[field_i[f]];
      s.values.push_back(cell.empty() ? std::string(kMissingValue) : cell);
    }
    if (ts_i != std::string::npos && !row[ts_i].empty()) {
      s.timestamp = io_detail::parse_timestamp_cell(row[ts_i], path, lineno);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset parse_dataset_jsonl(const std::string& path, const FieldSpec& spec,
                                   const std::string& pred_col = "prediction") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  Dataset ds;
  ds.spec = spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("'" + path + "' line " + std::to_string(lineno) +
                      ": invalid JSON: " + e.what());
    }
    const std::string where = "'" + path + "' line " + std::to_string(lineno);
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");

    Sample s;
    if (!obj.contains(pred_col) || !obj[pred_col].is_number())
      throw DataError(where + ": key '" + pred_col + "' must be a number in [0,1]");
    s.prediction = obj[pred_col].get<double>();
    if (!(s.prediction >= 0.0 && s.prediction <= 1.0))
      throw DataError(where + ": key '" + pred_col + "' outside [0,1]");

    if (!obj.contains("label") || !obj["label"].is_number_integer())
      throw DataError(where + ": key 'label' must be 0 or 1");
    const std::int64_t label = obj["label"].get<std::int64_t>();
    if (label != 0 && label != 1)
      throw DataError(where + ": key 'label' must be 0 or 1");
    s.label = static_cast<int>(label);

    s.values.reserve(spec.k());
    for (const std::string& f : spec.names) {
      if (!obj.contains(f)) {
        s.values.push_back(kMissingValue);
      } else if (obj[f].is_string()) {
        s.values.push_back(obj[f].get<std::string>());
      } else {
        throw DataError(where + ": field '" + f + "' must be a string");
      }
    }
    if (obj.contains("timestamp")) {
      if (!obj["timestamp"].is_number_integer())
        throw DataError(where + ": key 'timestamp' must be integer epoch seconds");
      s.timestamp = obj["timestamp"].get<std::int64_t>();
    }
    ds.samples.push_back(std::move(s));
  }
  if (lineno == 0) throw DataError("'" + path + "': empty file");
  return ds;
}

inline Dataset parse_dataset(const std::string& path, Format format,
                             const FieldSpec& spec,
                             const std::string& pred_col = "prediction") {
  return format == Format::kCsv ? parse_dataset_csv(path, spec, pred_col)
                                : parse_dataset_jsonl(path, spec, pred_col);
}

/// Writes a dataset in the same CSV schema parse_dataset expects.
inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
  CsvTable table;
  table.header.push_back("prediction");
  table.header.push_back("label");
  for (const std::string& f : ds.spec.names) table.header.push_back(f);
  const bool with_ts =
      !ds.samples.empty() && ds.samples.front().timestamp.has_value();
  if (with_ts) table.header.push_back("timestamp");

  table.rows.reserve(ds.size());
  for (const Sample& s : ds.samples) {
    std::vector<std::string> row;
    row.reserve(table.header.size());
    row.push_back(format_double(s.prediction));
    row.push_back(std::to_string(s.label));
    for (const std::string& v : s.values) row.push_back(v);
    if (with_ts) row.push_back(std::to_string(s.timestamp.value_or(0)));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

// ---------------------------------------------------------------------------
// Model files: versioned JSON holding one calibrator or a pipeline of them.
// ---------------------------------------------------------------------------

using ModelStage = std::variant<ConfCalibModel, CalibratorArtifact>;

struct ModelFile {
  std::vector<ModelStage> stages;  // applied left to right
};

namespace io_detail {

inline json to_json(const SubsetStats& s) {
  return json{{"n", s.n}, {"p", s.p}, {"p_hat", s.p_hat}, {"positives", s.positives}};
}

inline SubsetStats stats_from_json(const json& j) {
  SubsetStats s;
  s.n = j.at("n").get<std::uint64_t>();
  s.positives = j.at("positives").get<std::uint64_t>();
  s.p = j.at("p").get<double>();
  s.p_hat = j.at("p_hat").get<double>();
  return s;
}

inline json to_json(const BinCalibrator& b) {
  json stats_arr = json::array();
  for (const SubsetStats& s : b.bin_stats) stats_arr.push_back(to_json(s));
  return json{{"edges", b.edges}, {"multipliers", b.multipliers}, {"stats", stats_arr}};
}

inline BinCalibrator bins_from_json(const json& j) {
  BinCalibrator b;
  b.edges = j.at("edges").get<std::vector<double>>();
  b.multipliers = j.at("multipliers").get<std::vector<double>>();
  for (const json& s : j.at("stats")) b.bin_stats.push_back(stats_from_json(s));
  if (b.multipliers.size() != b.edges.size() + 1 ||
      b.bin_stats.size() != b.multipliers.size())
    throw DataError("model: inconsistent bin calibrator");
  return b;
}

inline json to_json(const FieldCalibrator& f) {
  json table = json::object();
  for (const auto& [value, cal] : f.table) table[value] = to_json(cal);
  return json{{"fallback", to_json(f.fallback)}, {"field", f.field}, {"table", table}};
}

inline FieldCalibrator field_from_json(const json& j) {
  FieldCalibrator f;
  f.field = j.at("field").get<std::string>();
  f.fallback = bins_from_json(j.at("fallback"));
  for (const auto& [value, cal] : j.at("table").items()) {
    f.table.emplace(value, bins_from_json(cal));
  }
  return f;
}

inline json to_json(const ConfCalibModel& m) {
  json cals = json::array();
  for (const FieldCalibrator& f : m.calibrators) cals.push_back(to_json(f));
  return json{{"bins", m.bins},
              {"calibrators", cals},
              {"fields", m.spec.names},
              {"lambda", m.lambda},
              {"weights", m.weights}};
}

inline ConfCalibModel confcalib_from_json(const json& j) {
  ConfCalibModel m;
  m.spec.names = j.at("fields").get<std::vector<std::string>>();
  m.lambda = j.at("lambda").get<double>();
  m.bins = j.at("bins").get<std::size_t>();
  m.weights = j.at("weights").get<std::vector<double>>();
  for (const json& c : j.at("calibrators")) m.calibrators.push_back(field_from_json(c));
  m.validate();
  for (std::size_t i = 0; i < m.spec.k(); ++i) {
    if (m.calibrators[i].field != m.spec.names[i])
      throw DataError("model: calibrator order does not match fields");
  }
  return m;
}

inline json to_json(const CalibratorArtifact& a) {
  switch (a.kind) {
    case BaselineKind::kNaive:
      return json{{"k", a.naive_k}};
    case BaselineKind::kPlatt:
      return json{{"a", a.platt_a}, {"b", a.platt_b}};
    case BaselineKind::kHistBin:
    case BaselineKind::kIsotonic:
      return json{{"edges", a.edges}, {"levels", a.levels}};
  }
  throw ConfigError("unknown baseline kind");
}

inline CalibratorArtifact baseline_from_json(BaselineKind kind, const json& j) {
  CalibratorArtifact a;
  a.kind = kind;
  switch (kind) {
    case BaselineKind::kNaive:
      a.naive_k = j.at("k").get<double>();
      break;
    case BaselineKind::kPlatt:
      a.platt_a = j.at("a").get<double>();
      a.platt_b = j.at("b").get<double>();
      break;
    case BaselineKind::kHistBin:
    case BaselineKind::kIsotonic:
      a.edges = j.at("edges").get<std::vector<double>>();
      a.levels = j.at("levels").get<std::vector<double>>();
      if (a.levels.size() != a.edges.size() + 1)
        throw DataError("model: inconsistent edges/levels");
      break;
  }
  return a;
}

inline json stage_to_json(const ModelStage& stage) {
  if (const auto* m = std::get_if<ConfCalibModel>(&stage)) {
    return json{{"kind", "confcalib"}, {"model", to_json(*m)}};
  }
  const auto& a = std::get<CalibratorArtifact>(stage);
  return json{{"kind", baseline_name(a.kind)}, {"model", to_json(a)}};
}

inline ModelStage stage_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "confcalib") return confcalib_from_json(j.at("model"));
  return baseline_from_json(baseline_kind(kind), j.at("model"));
}

}  // namespace io_detail

inline json model_to_json(const ModelFile& mf) {
  if (mf.stages.empty()) throw ConfigError("model file: no stages");
  json out;
  out["version"] = kModelVersion;
  if (mf.stages.size() == 1) {
    const json stage = io_detail::stage_to_json(mf.stages.front());
    out["kind"] = stage.at("kind");
    out["model"] = stage.at("model");
  } else {
    out["kind"] = "pipeline";
    json stages = json::array();
    for (const ModelStage& s : mf.stages) stages.push_back(io_detail::stage_to_json(s));
    out["stages"] = stages;
  }
  return out;
}

inline ModelFile model_from_json(const json& j) {
  try {
    const std::string version = j.at("version").get<std::string>();
    if (version != kModelVersion)
      throw DataError("unsupported model version '" + version + "'");
    ModelFile mf;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pipeline") {
      for (const json& s : j.at("stages"))
        mf.stages.push_back(io_detail::stage_from_json(s));
      if (mf.stages.empty()) throw DataError("model: empty pipeline");
    } else {
      mf.stages.push_back(io_detail::stage_from_json(j));
    }
    return mf;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const ModelFile& mf) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << model_to_json(mf).dump(2) << '\n';
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': invalid JSON: " + e.what());
  }
  return model_from_json(j);
}

/// Fields any confcalib stage of the pipeline needs, in first-seen order.
inline std::vector<std::string> required_fields(const ModelFile& mf) {
  std::vector<std::string> out;
  for (const ModelStage& stage : mf.stages) {
    if (const auto* m = std::get_if<ConfCalibModel>(&stage)) {
      for (const std::string& f : m->spec.names) {
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
      }
    }
  }
  return out;
}

/// Applies the pipeline left to right. `value_of(field)` resolves a field
/// value for the current record.
template <typename ValueOf>
double apply_stages(const ModelFile& mf, double prediction, ValueOf&& value_of) {
  double p = prediction;
  for (const ModelStage& stage : mf.stages) {
    if (const auto* art = std::get_if<CalibratorArtifact>(&stage)) {
      p = art->apply(p);
    } else {
      const ConfCalibModel& m = std::get<ConfCalibModel>(stage);
      Sample s;
      s.prediction = p;
      s.values.reserve(m.spec.k());
      for (const std::string& f : m.spec.names) s.values.push_back(value_of(f));
      p = apply_model(m, s);
    }
  }
  return p;
}

/// Convenience overload for samples aligned with a single spec.
inline double apply_stages(const ModelFile& mf, const FieldSpec& spec,
                           const Sample& sample) {
  return apply_stages(mf, sample.prediction, [&](const std::string& f) {
    return sample.values[spec.index_of(f)];
  });
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json report_to_json(const EvalReport& r) {
  json cfg{{"ece_bins", r.ece_bins},
           {"fields", r.fields},
           {"mvce_shuffles", r.mvce_shuffles},
           {"n", r.n},
           {"seed", r.seed}};
  return json{{"config", cfg}, {"metrics", r.entries}};
}

inline std::string report_to_text(const EvalReport& r) {
  std::size_t width = 0;
  for (const auto& [name, _] : r.entries) width = std::max(width, name.size());
  std::ostringstream out;
  for (const auto& [name, value] : r.entries) {
    out << name << std::string(width - name.size() + 2, ' ') << format_double(value)
        << '\n';
  }
  return out.str();
}

/// Per-interval metrics CSV: interval_start, n, then one column per metric.
inline void write_interval_csv(const std::string& path,
                               const std::vector<IntervalReport>& reports) {
  CsvTable table;
  table.header.push_back("interval_start");
  table.header.push_back("n");
  if (!reports.empty()) {
    for (const auto& [name, _] : reports.front().entries) table.header.push_back(name);
  }
  for (const IntervalReport& rep : reports) {
    std::vector<std::string> row;
    row.push_back(std::to_string(rep.interval_start));
    row.push_back(std::to_string(rep.n));
    for (const auto& [_, value] : rep.entries) row.push_back(format_double(value));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

// ---------------------------------------------------------------------------
// Synth configuration file
// ---------------------------------------------------------------------------

inline SynthConfig synth_config_from_json(const json& j) {
  try {
    SynthConfig cfg;
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.n_samples = j.at("n_samples").get<std::size_t>();
    cfg.base_rate = j.at("base_rate").get<double>();
    for (const json& f : j.at("fields")) {
      cfg.fields.push_back({f.at("name").get<std::string>(),
                            f.at("cardinality").get<std::size_t>()});
    }
    if (j.contains("truth_shifts"))
      cfg.truth_shifts = j.at("truth_shifts").get<ShiftTable>();
    if (j.contains("bias_shifts"))
      cfg.bias_shifts = j.at("bias_shifts").get<ShiftTable>();
    if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
    if (j.contains("split")) {
      cfg.validation_ratio = j.at("split").at("validation").get<double>();
      cfg.test_ratio = j.at("split").at("test").get<double>();
    }
    if (j.contains("start_timestamp"))
      cfg.start_timestamp = j.at("start_timestamp").get<std::int64_t>();
    if (j.contains("timestamp_step"))
      cfg.timestamp_step = j.at("timestamp_step").get<std::int64_t>();
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synth config: ") + e.what());
  }
}

inline SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': invalid JSON: " + e.what());
  }
  return synth_config_from_json(j);
}

}  // namespace confcal
