#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "confcal/io.hpp"
#include "support/canonical.hpp"

using namespace confcal;
using Catch::Matchers::ContainsSubstring;
using testsupport::read_bytes;
using testsupport::scratch_dir;
using testsupport::write_text;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(CONFCAL_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// every field-value subset has p_hat == p, so calibration must be a no-op
const char* kIdentityCsv =
    "prediction,label,site\n"
    "0.5,1,a\n0.5,0,a\n"
    "0.25,1,b\n0.25,0,b\n0.25,0,b\n0.25,0,b\n";

}  // namespace

TEST_CASE("cli: fit then apply leaves an identity dataset untouched") {
  const auto dir = scratch_dir("cli_identity");
  write_text(dir / "d.csv", kIdentityCsv);

  REQUIRE(run_cli("fit --input " + (dir / "d.csv").string() +
                      " --fields site --bins 1 --lambda 2 --out " +
                      (dir / "m.json").string(),
                  dir / "fit.log") == 0);
  REQUIRE(run_cli("apply --model " + (dir / "m.json").string() + " --input " +
                      (dir / "d.csv").string() + " --out " +
                      (dir / "out.csv").string(),
                  dir / "apply.log") == 0);

  const CsvTable out = read_csv((dir / "out.csv").string());
  const std::size_t pred_i = column_index(out, "prediction");
  const std::size_t cal_i = column_index(out, "calibrated");
  REQUIRE(cal_i != std::string::npos);
  for (const auto& row : out.rows) {
    CHECK(row[cal_i] == row[pred_i]);  // multiplier is exactly 1
  }
}

TEST_CASE("cli: synth-fit-weights-apply-eval improves the biased field") {
  const auto dir = scratch_dir("cli_e2e");
  write_text(dir / "synth.json", testsupport::canonical_config_json(8000).dump(2));

  REQUIRE(run_cli("synth --config " + (dir / "synth.json").string() + " --out-dir " +
                      dir.string(),
                  dir / "synth.log") == 0);
  REQUIRE(std::filesystem::exists(dir / "validation.csv"));
  REQUIRE(std::filesystem::exists(dir / "test.csv"));
  REQUIRE(std::filesystem::exists(dir / "truth.csv"));

  REQUIRE(run_cli("fit --input " + (dir / "validation.csv").string() +
                      " --fields site,app --bins 5 --lambda 2 --out " +
                      (dir / "m.json").string(),
                  dir / "fit.log") == 0);
  REQUIRE(run_cli("weights --model " + (dir / "m.json").string() + " --input " +
                      (dir / "validation.csv").string() +
                      " --objective multi-field-rce --step 0.05",
                  dir / "weights.log") == 0);
  REQUIRE(run_cli("apply --model " + (dir / "m.json").string() + " --input " +
                      (dir / "test.csv").string() + " --out " +
                      (dir / "scored.csv").string(),
                  dir / "apply.log") == 0);

  REQUIRE(run_cli("eval --input " + (dir / "test.csv").string() +
                      " --fields site,app --ece-bins 50 --report " +
                      (dir / "raw.json").string(),
                  dir / "eval_raw.log") == 0);
  REQUIRE(run_cli("eval --input " + (dir / "scored.csv").string() +
                      " --pred-col calibrated --fields site,app --ece-bins 50 "
                      "--report " +
                      (dir / "cal.json").string(),
                  dir / "eval_cal.log") == 0);

  const json raw = json::parse(read_bytes(dir / "raw.json"));
  const json cal = json::parse(read_bytes(dir / "cal.json"));
  CHECK(cal.at("metrics").at("field-rce:site").get<double>() <
        raw.at("metrics").at("field-rce:site").get<double>());
  CHECK(cal.at("metrics").at("multi-field-rce").get<double>() <
        raw.at("metrics").at("multi-field-rce").get<double>());

  // the file round trip matches the in-memory pipeline bit for bit
  const ModelFile mf = load_model((dir / "m.json").string());
  FieldSpec spec;
  spec.names = {"site", "app"};
  const Dataset test_ds =
      parse_dataset((dir / "test.csv").string(), Format::kCsv, spec);
  const Dataset scored =
      parse_dataset((dir / "scored.csv").string(), Format::kCsv, spec, "calibrated");
  REQUIRE(scored.size() == test_ds.size());
  for (std::size_t i = 0; i < test_ds.size(); ++i) {
    CHECK(scored.samples[i].prediction ==
          apply_stages(mf, spec, test_ds.samples[i]));
  }
}

TEST_CASE("cli: apply names a field missing from the input") {
  const auto dir = scratch_dir("cli_missingfield");
  write_text(dir / "fit.csv",
             "prediction,label,site,app\n0.5,1,a,x\n0.5,0,a,y\n0.4,1,b,x\n0.4,0,b,y\n");
  write_text(dir / "noapp.csv", "prediction,label,site\n0.5,1,a\n");

  REQUIRE(run_cli("fit --input " + (dir / "fit.csv").string() +
                      " --fields site,app --bins 1 --lambda 2 --out " +
                      (dir / "m.json").string(),
                  dir / "fit.log") == 0);
  const int rc = run_cli("apply --model " + (dir / "m.json").string() + " --input " +
                             (dir / "noapp.csv").string() + " --out " +
                             (dir / "out.csv").string(),
                         dir / "apply.log");
  CHECK(rc == 3);
  const std::string log = read_bytes(dir / "apply.log");
  CHECK_THAT(log, ContainsSubstring("ERR 3"));
  CHECK_THAT(log, ContainsSubstring("app"));
}

TEST_CASE("cli: malformed rows exit with a data error naming the line") {
  const auto dir = scratch_dir("cli_badrow");
  write_text(dir / "d.csv", "prediction,label,site\n0.2,1,a\n0.2,2,a\n");
  const int rc = run_cli("fit --input " + (dir / "d.csv").string() +
                             " --fields site --bins 1 --out " + (dir / "m.json").string(),
                         dir / "fit.log");
  CHECK(rc == 3);
  const std::string log = read_bytes(dir / "fit.log");
  CHECK_THAT(log, ContainsSubstring("ERR 3"));
  CHECK_THAT(log, ContainsSubstring("line 3"));
}

TEST_CASE("cli: usage errors exit with code 2") {
  const auto dir = scratch_dir("cli_usage");
  CHECK(run_cli("nonsense", dir / "a.log") == 2);
  CHECK_THAT(read_bytes(dir / "a.log"), ContainsSubstring("ERR 2"));

  CHECK(run_cli("fit --out x.json", dir / "b.log") == 2);  // missing --input

  // bins is required for the binned methods
  write_text(dir / "d.csv", "prediction,label,site\n0.5,1,a\n0.5,0,a\n");
  CHECK(run_cli("fit --input " + (dir / "d.csv").string() +
                    " --fields site --out " + (dir / "m.json").string(),
                dir / "c.log") == 2);
  CHECK_THAT(read_bytes(dir / "c.log"), ContainsSubstring("--bins"));
}

TEST_CASE("cli: eval output is byte-identical across runs") {
  const auto dir = scratch_dir("cli_det");
  write_text(dir / "synth.json", testsupport::canonical_config_json(2000).dump(2));
  REQUIRE(run_cli("synth --config " + (dir / "synth.json").string() + " --out-dir " +
                      dir.string(),
                  dir / "synth.log") == 0);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(run_cli("eval --input " + (dir / "test.csv").string() +
                        " --fields site,app --ece-bins 20 --mvce-shuffles 8 "
                        "--seed 42 --report " +
                        (dir / ("r" + std::to_string(i) + ".json")).string(),
                    dir / "eval.log") == 0);
  }
  CHECK(read_bytes(dir / "r0.json") == read_bytes(dir / "r1.json"));
}

TEST_CASE("cli: stream writes one row per interval") {
  const auto dir = scratch_dir("cli_stream");
  json cfg = testsupport::canonical_config_json(3000);
  cfg["fields"] = json::array({json{{"name", "site"}, {"cardinality", 4}}});
  cfg["truth_shifts"] = json::object();
  cfg["bias_shifts"] = json{{"site", {{"v0", 1.0}}}};
  write_text(dir / "synth.json", cfg.dump(2));
  REQUIRE(run_cli("synth --config " + (dir / "synth.json").string() + " --out-dir " +
                      dir.string(),
                  dir / "synth.log") == 0);

  // rebuild the full log: validation + test are chronological halves
  const CsvTable val = read_csv((dir / "validation.csv").string());
  CsvTable test = read_csv((dir / "test.csv").string());
  CsvTable log = val;
  log.rows.insert(log.rows.end(), test.rows.begin(), test.rows.end());
  write_csv((dir / "log.csv").string(), log);

  REQUIRE(run_cli("stream --log " + (dir / "log.csv").string() +
                      " --refit-interval 500 --window 1000 --fields site --bins 1 "
                      "--lambda 2 --ece-bins 50 --out " +
                      (dir / "intervals.csv").string(),
                  dir / "stream.log") == 0);
  const CsvTable out = read_csv((dir / "intervals.csv").string());
  CHECK(out.rows.size() == 6);  // 3000 seconds of log at 500 s per interval
  CHECK(column_index(out, "interval_start") == 0);
  CHECK(column_index(out, "n") == 1);
  CHECK(column_index(out, "field-rce:site") != std::string::npos);
  CHECK(column_index(out, "mvce") != std::string::npos);
}

TEST_CASE("cli: jsonl apply mirrors csv apply") {
  const auto dir = scratch_dir("cli_jsonl");
  write_text(dir / "d.csv", kIdentityCsv);
  write_text(dir / "d.jsonl",
             "{\"prediction\":0.5,\"label\":1,\"site\":\"a\"}\n"
             "{\"prediction\":0.25,\"label\":0,\"site\":\"b\"}\n");
  REQUIRE(run_cli("fit --input " + (dir / "d.csv").string() +
                      " --fields site --bins 1 --lambda 2 --out " +
                      (dir / "m.json").string(),
                  dir / "fit.log") == 0);
  REQUIRE(run_cli("apply --model " + (dir / "m.json").string() + " --input " +
                      (dir / "d.jsonl").string() + " --out " +
                      (dir / "out.jsonl").string(),
                  dir / "apply.log") == 0);
  const std::string out = read_bytes(dir / "out.jsonl");
  CHECK_THAT(out, ContainsSubstring("\"calibrated\":0.5"));
  CHECK_THAT(out, ContainsSubstring("\"calibrated\":0.25"));
}
