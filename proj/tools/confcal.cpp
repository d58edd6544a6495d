// confcal: fit, evaluate, and serve multiplicative probability calibrators
// from the command line. See README.md for the file formats.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "confcal/confcal.hpp"

namespace {

using namespace confcal;

Format resolve_format(const std::string& flag, const std::string& path) {
  return flag == "auto" ? infer_format(path) : format_from_name(flag);
}

FieldSpec spec_from(const std::vector<std::string>& fields) {
  FieldSpec spec;
  spec.names = fields;
  return spec;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::string out;
  std::string method = "confcalib";
  std::string format = "auto";
  std::string pred_col = "prediction";
  std::string compose;  // optional inner model to recalibrate on top of
  std::vector<std::string> fields;
  std::size_t bins = 1;
  bool bins_given = false;
  double lambda = kDefaultLambda;
};

void run_fit(const FitArgs& args) {
  if ((args.method == "confcalib" || args.method == "histbin") && !args.bins_given)
    throw ConfigError("--bins is required for method '" + args.method + "'");

  const FieldSpec spec = spec_from(args.fields);
  Dataset ds = parse_dataset(args.input, resolve_format(args.format, args.input),
                             spec, args.pred_col);
  ds.validate();

  ModelFile mf;
  if (!args.compose.empty()) {
    mf = load_model(args.compose);
    for (Sample& s : ds.samples) {
      s.prediction = apply_stages(mf, ds.spec, s);
    }
  }

  if (args.method == "confcalib") {
    mf.stages.push_back(fit_confcalib(ds, args.bins, args.lambda));
  } else if (args.method == "naive") {
    mf.stages.push_back(fit_naive(ds));
  } else if (args.method == "platt") {
    mf.stages.push_back(fit_platt(ds));
  } else if (args.method == "histbin") {
    mf.stages.push_back(fit_histbin(ds, args.bins));
  } else if (args.method == "isotonic") {
    mf.stages.push_back(fit_isotonic(ds));
  } else {
    throw ConfigError("unknown method '" + args.method + "'");
  }
  save_model(args.out, mf);
}

// ---------------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------------

struct WeightsArgs {
  std::string model;
  std::string input;
  std::string format = "auto";
  std::string objective = "multi-field-rce";
  double step = 0.05;
  std::size_t ece_bins = 100;
  std::size_t mvce_shuffles = 32;
  std::uint64_t seed = 42;
};

void run_weights(const WeightsArgs& args) {
  ModelFile mf = load_model(args.model);
  auto* model = std::get_if<ConfCalibModel>(&mf.stages.back());
  if (model == nullptr)
    throw ConfigError("weights: last stage of '" + args.model + "' is not confcalib");

  Dataset ds = parse_dataset(args.input, resolve_format(args.format, args.input),
                             model->spec);
  ds.validate();
  // For a recalibration pipeline the weights are fit in the space the final
  // stage was fit in, so run the earlier stages first.
  if (mf.stages.size() > 1) {
    ModelFile prefix;
    prefix.stages.assign(mf.stages.begin(), mf.stages.end() - 1);
    for (Sample& s : ds.samples) s.prediction = apply_stages(prefix, ds.spec, s);
  }

  WeightObjectiveOptions opt;
  opt.ece_bins = args.ece_bins;
  opt.mvce_shuffles = args.mvce_shuffles;
  opt.seed = args.seed;
  model->weights = fit_weights(*model, ds, args.objective, args.step, opt).weights;
  save_model(args.model, mf);
}

// ---------------------------------------------------------------------------
// apply
// ---------------------------------------------------------------------------

struct ApplyArgs {
  std::string model;
  std::string input;
  std::string out;
  std::string format = "auto";
  std::string pred_col = "prediction";
};

void apply_csv(const ModelFile& mf, const ApplyArgs& args) {
  CsvTable table = read_csv(args.input);
  const std::size_t pred_i = column_index(table, args.pred_col);
  if (pred_i == std::string::npos)
    throw DataError("'" + args.input + "': missing column '" + args.pred_col + "'");

  const std::vector<std::string> needed = required_fields(mf);
  std::vector<std::size_t> field_i(needed.size());
  for (std::size_t f = 0; f < needed.size(); ++f) {
    field_i[f] = column_index(table, needed[f]);
    if (field_i[f] == std::string::npos)
      throw DataError("field '" + needed[f] + "' not in input '" + args.input + "'");
  }

  std::size_t cal_i = column_index(table, "calibrated");
  if (cal_i == std::string::npos) {
    table.header.push_back("calibrated");
    cal_i = table.header.size() - 1;
    for (auto& row : table.rows) row.emplace_back();
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto& row = table.rows[r];
    const double p = io_detail::parse_probability_cell(row[pred_i], args.input,
                                                       r + 2, args.pred_col);
    const double calibrated = apply_stages(mf, p, [&](const std::string& field) {
      for (std::size_t f = 0; f < needed.size(); ++f) {
        if (needed[f] == field) {
          const std::string& cell = row[field_i[f]];
          return cell.empty() ? std::string(kMissingValue) : cell;
        }
      }
      return std::string(kMissingValue);
    });
    row[cal_i] = format_double(calibrated);
  }
  write_csv(args.out, table);
}

void apply_jsonl(const ModelFile& mf, const ApplyArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw DataError("cannot open '" + args.input + "'");
  std::ofstream out(args.out);
  if (!out) throw DataError("cannot write '" + args.out + "'");

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
      throw DataError("'" + args.input + "' line " + std::to_string(lineno) +
                      ": invalid JSON: " + e.what());
    }
    if (!obj.contains(args.pred_col) || !obj[args.pred_col].is_number())
      throw DataError("'" + args.input + "' line " + std::to_string(lineno) +
                      ": key '" + args.pred_col + "' must be a number");
    const double p = obj[args.pred_col].get<double>();
    if (!(p >= 0.0 && p <= 1.0))
      throw DataError("'" + args.input + "' line " + std::to_string(lineno) +
                      ": key '" + args.pred_col + "' outside [0,1]");
    const double calibrated = apply_stages(mf, p, [&](const std::string& field) {
      return obj.contains(field) && obj[field].is_string()
                 ? obj[field].get<std::string>()
                 : std::string(kMissingValue);
    });
    obj["calibrated"] = calibrated;
    out << obj.dump() << '\n';
  }
  if (lineno == 0) throw DataError("'" + args.input + "': empty file");
}

void run_apply(const ApplyArgs& args) {
  const ModelFile mf = load_model(args.model);
  if (resolve_format(args.format, args.input) == Format::kCsv) {
    apply_csv(mf, args);
  } else {
    apply_jsonl(mf, args);
  }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string input;
  std::string format = "auto";
  std::string pred_col = "prediction";
  std::string report;
  std::vector<std::string> fields;
  std::size_t ece_bins = 100;
  std::size_t mvce_shuffles = 32;
  std::uint64_t seed = 42;
};

void run_eval(const EvalArgs& args) {
  Dataset ds = parse_dataset(args.input, resolve_format(args.format, args.input),
                             spec_from(args.fields), args.pred_col);
  ds.validate();
  EvalOptions opt;
  opt.ece_bins = args.ece_bins;
  opt.mvce_shuffles = args.mvce_shuffles;
  opt.seed = args.seed;
  const EvalReport report = evaluate(ds, opt);
  std::cout << report_to_text(report);
  if (!args.report.empty()) {
    std::ofstream out(args.report);
    if (!out) throw DataError("cannot write '" + args.report + "'");
    out << report_to_json(report).dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out_dir;
};

void run_synth(const SynthArgs& args) {
  const SynthConfig cfg = load_synth_config(args.config);
  const SynthData data = generate(cfg);
  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path dir(args.out_dir);

  write_dataset_csv((dir / "validation.csv").string(), validation_split(data));
  write_dataset_csv((dir / "test.csv").string(), test_split(data));

  CsvTable truth;
  truth.header = {"split", "row", "truth"};
  for (std::size_t i = 0; i < data.truth.size(); ++i) {
    const bool val = i < data.validation_size;
    truth.rows.push_back({val ? "validation" : "test",
                          std::to_string(val ? i : i - data.validation_size),
                          format_double(data.truth[i])});
  }
  write_csv((dir / "truth.csv").string(), truth);
}

// ---------------------------------------------------------------------------
// stream
// ---------------------------------------------------------------------------

struct StreamArgs {
  std::string log;
  std::string out;
  std::string format = "auto";
  std::string weights = "uniform";
  std::string objective = "multi-field-rce";
  std::vector<std::string> fields;
  std::int64_t refit_interval = 1800;
  std::int64_t window = 86400;
  std::size_t bins = 1;
  double lambda = kDefaultLambda;
  double step = 0.05;
  std::size_t ece_bins = 100;
  std::size_t mvce_shuffles = 32;
  std::uint64_t seed = 42;
};

void run_stream(const StreamArgs& args) {
  Dataset ds = parse_dataset(args.log, resolve_format(args.format, args.log),
                             spec_from(args.fields));
  ds.validate();

  StreamConfig cfg;
  cfg.refit_interval = args.refit_interval;
  cfg.window = args.window;
  cfg.bins = args.bins;
  cfg.lambda = args.lambda;
  if (args.weights == "grid") {
    cfg.grid_weights = true;
  } else if (args.weights != "uniform") {
    throw ConfigError("--weights must be uniform or grid");
  }
  cfg.objective = args.objective;
  cfg.step = args.step;
  cfg.eval.ece_bins = args.ece_bins;
  cfg.eval.mvce_shuffles = args.mvce_shuffles;
  cfg.eval.seed = args.seed;

  write_interval_csv(args.out, simulate_stream(ds, cfg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confidence-aware multi-field probability calibration"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a calibration model");
  fit->add_option("--input", fit_args.input, "Scored dataset (csv or jsonl)")->required();
  fit->add_option("--fields", fit_args.fields, "Target fields, comma separated")
      ->delimiter(',');
  auto* bins_opt = fit->add_option("--bins", fit_args.bins, "Bins per field-value subset");
  fit->add_option("--lambda", fit_args.lambda, "Calibration-intensity bound");
  fit->add_option("--method", fit_args.method, "Calibrator to fit")
      ->check(CLI::IsMember({"confcalib", "naive", "platt", "histbin", "isotonic"}));
  fit->add_option("--format", fit_args.format, "csv, jsonl, or auto");
  fit->add_option("--pred-col", fit_args.pred_col, "Prediction column to fit on");
  fit->add_option("--compose", fit_args.compose,
                  "Existing model to recalibrate: fits on its outputs and writes "
                  "a pipeline");
  fit->add_option("--out", fit_args.out, "Output model path")->required();
  fit->callback([&] {
    fit_args.bins_given = bins_opt->count() > 0;
    run_fit(fit_args);
  });

  WeightsArgs weights_args;
  auto* weights = app.add_subcommand("weights", "Grid-search fusion weights in place");
  weights->add_option("--model", weights_args.model, "Model file to rewrite")->required();
  weights->add_option("--input", weights_args.input, "Dataset to optimize on")->required();
  weights->add_option("--objective", weights_args.objective,
                      "field-rce:<field>, multi-field-rce, ece, or mvce");
  weights->add_option("--step", weights_args.step, "Grid resolution (1/step integral)");
  weights->add_option("--format", weights_args.format, "csv, jsonl, or auto");
  weights->add_option("--ece-bins", weights_args.ece_bins, "Bins for ece/mvce objectives");
  weights->add_option("--mvce-shuffles", weights_args.mvce_shuffles, "Shuffles for mvce");
  weights->add_option("--seed", weights_args.seed, "Seed for the mvce objective");
  weights->callback([&] { run_weights(weights_args); });

  ApplyArgs apply_args;
  auto* apply = app.add_subcommand("apply", "Append a calibrated column");
  apply->add_option("--model", apply_args.model, "Model file")->required();
  apply->add_option("--input", apply_args.input, "Dataset to calibrate")->required();
  apply->add_option("--out", apply_args.out, "Output path")->required();
  apply->add_option("--format", apply_args.format, "csv, jsonl, or auto");
  apply->add_option("--pred-col", apply_args.pred_col, "Prediction column to read");
  apply->callback([&] { run_apply(apply_args); });

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Compute the metric suite");
  eval->add_option("--input", eval_args.input, "Scored dataset")->required();
  eval->add_option("--fields", eval_args.fields, "Target fields, comma separated")
      ->delimiter(',')
      ->required();
  eval->add_option("--pred-col", eval_args.pred_col, "calibrated or prediction");
  eval->add_option("--ece-bins", eval_args.ece_bins, "Equal-frequency bin count");
  eval->add_option("--mvce-shuffles", eval_args.mvce_shuffles, "Shuffle count R");
  eval->add_option("--seed", eval_args.seed, "Shuffle seed");
  eval->add_option("--report", eval_args.report, "Write the report as JSON here");
  eval->add_option("--format", eval_args.format, "csv, jsonl, or auto");
  eval->callback([&] { run_eval(eval_args); });

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a miscalibrated dataset");
  synth->add_option("--config", synth_args.config, "Generator config JSON")->required();
  synth->add_option("--out-dir", synth_args.out_dir,
                    "Directory for validation.csv, test.csv, truth.csv")
      ->required();
  synth->callback([&] { run_synth(synth_args); });

  StreamArgs stream_args;
  auto* stream = app.add_subcommand("stream", "Sliding-window refit simulation");
  stream->add_option("--log", stream_args.log, "Time-ordered dataset")->required();
  stream->add_option("--refit-interval", stream_args.refit_interval,
                     "Seconds between refits");
  stream->add_option("--window", stream_args.window, "Trailing fit window, seconds");
  stream->add_option("--fields", stream_args.fields, "Target fields, comma separated")
      ->delimiter(',')
      ->required();
  stream->add_option("--bins", stream_args.bins, "Bins per field-value subset");
  stream->add_option("--lambda", stream_args.lambda, "Calibration-intensity bound");
  stream->add_option("--weights", stream_args.weights, "uniform or grid");
  stream->add_option("--objective", stream_args.objective, "Objective when --weights grid");
  stream->add_option("--step", stream_args.step, "Grid resolution when --weights grid");
  stream->add_option("--ece-bins", stream_args.ece_bins, "Bins for interval ece/mvce");
  stream->add_option("--mvce-shuffles", stream_args.mvce_shuffles, "Shuffles for mvce");
  stream->add_option("--seed", stream_args.seed, "Seed for interval mvce");
  stream->add_option("--out", stream_args.out, "Per-interval metrics CSV")->required();
  stream->callback([&] { run_stream(stream_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "ERR 2: " << e.what() << std::endl;
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "ERR 2: " << e.what() << std::endl;
    return 2;
  } catch (const DataError& e) {
    std::cerr << "ERR 3: " << e.what() << std::endl;
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "ERR 4: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "ERR 4: " << e.what() << std::endl;
    return 4;
  }
  return 0;
}
