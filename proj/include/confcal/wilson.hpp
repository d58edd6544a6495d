#pragma once

#include <cmath>
#include <cstdint>

#include "confcal/core.hpp"

namespace confcal {

struct WilsonInterval {
  double lower = 0.0;
  double upper = 0.0;
};

namespace wilson_detail {
inline constexpr double kBracketTol = 1e-12;  // bracket width in z
inline constexpr int kMaxIterations = 200;
inline constexpr double kZCap = 1e6;
}  // namespace wilson_detail

/**
 * Wilson score interval for an observed rate p over n trials at deviation
 * score z (z = 1.96 for 95% confidence). Unlike normal-approximation bounds
 * it stays valid for small n and rates near 0 or 1.
 */
inline WilsonInterval wilson_interval(double p, std::uint64_t n, double z) {
  if (n == 0) throw NumericError("wilson_interval: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw NumericError("wilson_interval: p outside [0,1]");
  if (!(z >= 0.0)) throw NumericError("wilson_interval: z must be >= 0");

  const double nd = static_cast<double>(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double center = (p + z2 / (2.0 * nd)) / denom;
  const double half =
      (z / denom) * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd));

  WilsonInterval iv;
  // The exact bounds always contain p and stay inside [0,1]; the min/max
  // only scrub last-ulp rounding noise.
  iv.lower = std::max(0.0, std::min(center - half, p));
  iv.upper = std::min(1.0, std::max(center + half, p));
  return iv;
}

/**
 * Inverts the Wilson interval: finds the deviation score z at which the
 * subset's mean prediction sits exactly on the interval bound around the
 * observed rate. Uses the upper bound when p_hat > p, the lower bound when
 * p_hat < p, and returns 0 when they agree.
 *
 * The bound is strictly monotone in z, so bisection over a doubled bracket
 * finds the unique root. p_hat is clamped into [1e-9, 1-1e-9] first; z is
 * capped at 1e6 (the z-transform saturates far below that).
 *
 * Convergence is on the bracket width (1e-12 in z). A bound-residual test
 * alone would stop early where the bound is nearly flat in z (large n,
 * small z) and hand back a z far less accurate than the bracket implies;
 * at width 1e-12 the residual is below 1e-10 everywhere anyway.
 */
inline double solve_deviation(const SubsetStats& s) {
  using namespace wilson_detail;
  if (s.n == 0) throw NumericError("solve_deviation: empty subset");
  if (!(s.p >= 0.0 && s.p <= 1.0) || !(s.p_hat >= 0.0 && s.p_hat <= 1.0))
    throw NumericError("solve_deviation: probabilities outside [0,1]");
  if (s.p_hat == s.p) return 0.0;  // before clamping, so 0/0 and 1/1 stay exact

  const double target = clamp_mean(s.p_hat);
  if (target == s.p) return 0.0;
  const bool upper_branch = target > s.p;

  const auto bound = [&](double z) {
    const WilsonInterval iv = wilson_interval(s.p, s.n, z);
    return upper_branch ? iv.upper : iv.lower;
  };
  // true when the bound at z has not yet reached the target
  const auto below = [&](double z) {
    return upper_branch ? bound(z) < target : bound(z) > target;
  };

  double hi = 1.0;
  while (below(hi)) {
    if (hi >= kZCap) return kZCap;  // target closer to 0/1 than any capped bound
    hi = std::min(hi * 2.0, kZCap);
  }
  double lo = 0.0;

  for (int it = 0; it < kMaxIterations && hi - lo > kBracketTol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (below(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (hi - lo > 1e-9)
    throw NumericError("solve_deviation: no convergence, bracket [" +
                       std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return 0.5 * (lo + hi);
}

}  // namespace confcal
