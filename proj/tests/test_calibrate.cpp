#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "confcal/calibrate.hpp"

using namespace confcal;
using Catch::Matchers::WithinAbs;

namespace {

Dataset one_field_dataset(const std::vector<double>& preds,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& values) {
  Dataset ds;
  ds.spec.names = {"f"};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ds.samples.push_back({preds[i], labels[i], {values[i]}, std::nullopt});
  }
  return ds;
}

// every field-value subset here has p_hat == p exactly
Dataset identity_dataset() {
  return one_field_dataset({0.5, 0.5, 0.25, 0.25, 0.25, 0.25}, {1, 0, 1, 0, 0, 0},
                           {"a", "a", "b", "b", "b", "b"});
}

}  // namespace

TEST_CASE("z_transform passes through the origin") {
  CHECK(z_transform(0.0, 0.5) == 0.0);
  CHECK(z_transform(0.0, 2.0) == 0.0);
  CHECK(z_transform(0.0, 10.0) == 0.0);
}

TEST_CASE("z_transform saturates at lambda") {
  CHECK_THAT(z_transform(100.0, 2.0), WithinAbs(2.0, 1e-12));
  CHECK_THAT(z_transform(1e6, 0.7), WithinAbs(0.7, 1e-12));
}

TEST_CASE("z_transform matches the reference value at z = 2") {
  CHECK_THAT(z_transform(2.0, 2.0), WithinAbs(0.92423431452001958, 1e-14));
}

TEST_CASE("z_transform is clamped to z for steep lambdas") {
  // g'(0) = lambda / 4, so lambda > 4 would overshoot near the origin
  CHECK(z_transform(0.001, 8.0) == 0.001);
  CHECK(z_transform(0.5, 100.0) == 0.5);
}

TEST_CASE("z_transform is monotone and bounded") {
  for (double lambda : {0.2, 1.0, 1.96, 5.0}) {
    double prev = -1.0;
    for (double z = 0.0; z <= 20.0; z += 0.25) {
      const double g = z_transform(z, lambda);
      CHECK(g >= prev);
      CHECK(g <= std::min(lambda, z) + 1e-15);
      CHECK(g >= 0.0);
      prev = g;
    }
  }
}

TEST_CASE("z_transform rejects bad domains") {
  CHECK_THROWS_AS(z_transform(-0.1, 1.0), NumericError);
  CHECK_THROWS_AS(z_transform(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(z_transform(1.0, -2.0), ConfigError);
}

TEST_CASE("calibrated_mean preserves zero-deviation subsets exactly") {
  for (double lambda : {0.2, 2.0, 50.0}) {
    const CalibratedMean cm = calibrated_mean({123, 25, 0.2, 0.2}, lambda);
    CHECK(cm.p_hat_prime == 0.2);
    CHECK(cm.multiplier == 1.0);
  }
  // degenerate all-negative and all-positive subsets
  CHECK(calibrated_mean({10, 0, 0.0, 0.0}, 2.0).multiplier == 1.0);
  CHECK(calibrated_mean({10, 10, 1.0, 1.0}, 2.0).multiplier == 1.0);
}

TEST_CASE("calibrated_mean matches the reference pipeline values") {
  const CalibratedMean cm = calibrated_mean({500, 50, 0.1, 0.2}, 1.96);
  CHECK_THAT(cm.p_hat_prime, WithinAbs(0.12571235169486297, 1e-9));
  CHECK_THAT(cm.multiplier, WithinAbs(0.62856175847431484, 1e-9));
}

TEST_CASE("calibrated_mean pulls sparse zero-positive subsets toward zero") {
  const CalibratedMean cm = calibrated_mean({5, 0, 0.0, 0.3}, 2.0);
  CHECK(cm.p_hat_prime > 0.0);
  CHECK(cm.p_hat_prime < 0.3);
  CHECK(cm.multiplier > 0.0);
  CHECK(cm.multiplier < 1.0);
}

TEST_CASE("calibrated_mean stays between p and p_hat") {
  for (double lambda : {0.2, 2.0, 8.0}) {
    for (std::uint64_t n : {3, 40, 900}) {
      for (double p : {0.0, 0.1, 0.6}) {
        for (double p_hat : {0.05, 0.3, 0.95}) {
          const std::uint64_t pos = static_cast<std::uint64_t>(p * n);
          const CalibratedMean cm =
              calibrated_mean({n, pos, p, p_hat}, lambda);
          CHECK(cm.p_hat_prime >= std::min(p, p_hat) - 1e-12);
          CHECK(cm.p_hat_prime <= std::max(p, p_hat) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("calibrated_mean approaches the observation as n grows") {
  double prev_gap = 1.0;
  for (std::uint64_t n : {10, 100, 1000, 10000, 100000}) {
    const CalibratedMean cm = calibrated_mean({n, n / 10, 0.1, 0.2}, 2.0);
    const double gap = std::abs(cm.p_hat_prime - 0.1);
    CHECK(cm.p_hat_prime >= 0.1);
    CHECK(cm.p_hat_prime <= 0.2);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}

TEST_CASE("lambda limits: full trust in the observation vs. none") {
  // lambda -> 0+ removes all confidence in the prediction: p_hat' -> p
  const CalibratedMean strong = calibrated_mean({500, 50, 0.1, 0.2}, 1e-8);
  CHECK_THAT(strong.p_hat_prime, WithinAbs(0.1, 1e-6));
  // huge lambda leaves the deviation unshrunk (min(g, z) = z): p_hat' = p_hat
  const CalibratedMean none = calibrated_mean({500, 50, 0.1, 0.2}, 1e8);
  CHECK_THAT(none.p_hat_prime, WithinAbs(0.2, 1e-9));
}

TEST_CASE("fit_bin_calibrator caps the bin count at the subset size") {
  const Dataset ds =
      one_field_dataset({0.3, 0.1, 0.2}, {1, 0, 0}, {"a", "a", "a"});
  const BinCalibrator cal = fit_bin_calibrator(ds, {0, 1, 2}, 10, 2.0);
  CHECK(cal.bins() == 3);
  CHECK(cal.edges.size() == 2);
  CHECK(cal.bin_stats.size() == 3);
  // singleton bins in prediction order
  CHECK(cal.bin_stats[0].p_hat == 0.1);
  CHECK(cal.bin_stats[1].p_hat == 0.2);
  CHECK(cal.bin_stats[2].p_hat == 0.3);
}

TEST_CASE("fit_field with B = 1 uses whole-subset statistics") {
  const Dataset ds = one_field_dataset({0.2, 0.4, 0.6, 0.8}, {0, 1, 1, 1},
                                       {"a", "a", "b", "b"});
  const FieldCalibrator cal = fit_field(ds, "f", 1, 2.0);
  REQUIRE(cal.table.size() == 2);
  CHECK(cal.table.at("a").bins() == 1);
  const SubsetStats sa = cal.table.at("a").bin_stats[0];
  CHECK(sa.n == 2);
  CHECK_THAT(sa.p_hat, WithinAbs(0.3, 1e-12));
  const CalibratedMean direct = calibrated_mean(sa, 2.0);
  CHECK(cal.table.at("a").multipliers[0] == direct.multiplier);
  // fallback is fit on everything
  CHECK(cal.fallback.bin_stats[0].n == 4);
}

TEST_CASE("an identity dataset fits to all-ones multipliers") {
  const FieldCalibrator cal = fit_field(identity_dataset(), "f", 1, 2.0);
  for (const auto& [value, bins] : cal.table) {
    for (double m : bins.multipliers) CHECK(m == 1.0);
  }
  for (double m : cal.fallback.multipliers) CHECK(m == 1.0);
}

TEST_CASE("apply_field looks up bins with edge clamping") {
  const Dataset ds = one_field_dataset({0.1, 0.2, 0.6, 0.8}, {0, 0, 1, 1},
                                       {"a", "a", "a", "a"});
  const FieldCalibrator cal = fit_field(ds, "f", 2, 2.0);
  const BinCalibrator& bins = cal.table.at("a");
  REQUIRE(bins.bins() == 2);
  REQUIRE(bins.edges.size() == 1);
  CHECK_THAT(bins.edges[0], WithinAbs(0.4, 1e-12));

  const FieldSpec& spec = ds.spec;
  const auto mult_at = [&](double p) {
    return apply_field(cal, spec, {p, 0, {"a"}, std::nullopt});
  };
  CHECK(mult_at(0.05) == bins.multipliers[0]);  // below every edge
  CHECK(mult_at(0.39) == bins.multipliers[0]);
  CHECK(mult_at(0.41) == bins.multipliers[1]);
  CHECK(mult_at(0.99) == bins.multipliers[1]);  // above every edge
}

TEST_CASE("apply_field falls back on unseen values") {
  const Dataset ds = one_field_dataset({0.1, 0.2, 0.6, 0.8}, {0, 0, 1, 1},
                                       {"a", "a", "b", "b"});
  const FieldCalibrator cal = fit_field(ds, "f", 1, 2.0);
  const double got = apply_field(cal, ds.spec, {0.5, 0, {"zzz"}, std::nullopt});
  CHECK(got == cal.fallback.multiplier_at(0.5));
}

TEST_CASE("fit_confcalib assembles an aligned, uniform-weight model") {
  Dataset ds;
  ds.spec.names = {"site", "app"};
  ds.samples = {{0.2, 0, {"s1", "a1"}, {}},
                {0.4, 1, {"s1", "a2"}, {}},
                {0.6, 0, {"s2", "a1"}, {}},
                {0.8, 1, {"s2", "a2"}, {}}};
  const ConfCalibModel model = fit_confcalib(ds, 1, 2.0);
  CHECK_NOTHROW(model.validate());
  REQUIRE(model.calibrators.size() == 2);
  CHECK(model.calibrators[0].field == "site");
  CHECK(model.calibrators[1].field == "app");
  CHECK(model.weights == std::vector<double>{0.5, 0.5});
  CHECK(model.version == std::string(kModelVersion));

  const std::vector<double> mults = field_multipliers(model, ds.samples[0]);
  CHECK(mults.size() == 2);
  CHECK(mults[0] == apply_field(model.calibrators[0], ds.spec, ds.samples[0]));
}

TEST_CASE("fit_confcalib validates its inputs") {
  Dataset empty;
  empty.spec.names = {"f"};
  CHECK_THROWS_AS(fit_confcalib(empty, 1, 2.0), DataError);

  const Dataset ds = identity_dataset();
  CHECK_THROWS_AS(fit_confcalib(ds, 0, 2.0), ConfigError);
  CHECK_THROWS_AS(fit_confcalib(ds, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(fit_confcalib(ds, 1, -1.0), ConfigError);
}
