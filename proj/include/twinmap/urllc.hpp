#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/stats.hpp"

namespace twinmap::urllc {

/// Inverse error function on (-1, 1). Initial guess from the Acklam inverse
/// normal CDF rational approximation (|relative error| < 1.15e-9), then one
/// Newton step against std::erf, which leaves the result accurate to a few
/// ulp. Exactly odd, with erfinv(0) == 0.
inline double erfinv(double y) {
  require(y > -1.0 && y < 1.0, "erfinv: argument outside (-1, 1)");
  if (y == 0.0) return 0.0;
  const double ay = std::abs(y);

  // Acklam coefficients for the inverse standard normal CDF.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double p = 0.5 * (1.0 + ay);  // Phi(x sqrt 2) for x = erfinv(ay)
  double x;
  if (p <= 0.97575) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double t = x / std::sqrt(2.0);
  // Newton refinement on erf(t) = ay.
  const double sqrt_pi_over_2 = 0.88622692545275801365;
  t -= (std::erf(t) - ay) * sqrt_pi_over_2 * std::exp(t * t);
  return y > 0.0 ? t : -t;
}

/// One rate decision: the transmission rate backed by its posterior inputs.
struct RateDecision {
  double rate = 0.0;
  int location = -1;
  double delta = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double ptx_over_noise = 1.0;
};

/// Rate selection from the log-quantile posterior at one location:
///   R = log2(1 + ptx * exp(mu + sqrt(2) * sigma * erfinv(2 delta - 1))).
/// delta is the tolerated meta-probability level; sigma = 0 reduces to the
/// plug-in rate. Nonnegative for any inputs since the argument of log2 is
/// above 1.
inline RateDecision rate_select(double mu, double sigma, double delta,
                                double ptx_over_noise = 1.0, int location = -1) {
  require(sigma >= 0.0, "rate_select: negative sigma");
  require(delta > 0.0 && delta < 1.0, "rate_select: delta outside (0, 1)");
  require(ptx_over_noise > 0.0, "rate_select: nonpositive ptx");
  const double shifted = mu + std::sqrt(2.0) * sigma * erfinv(2.0 * delta - 1.0);
  RateDecision d;
  d.rate = std::log2(1.0 + ptx_over_noise * std::exp(shifted));
  d.location = location;
  d.delta = delta;
  d.mu = mu;
  d.sigma = sigma;
  d.ptx_over_noise = ptx_over_noise;
  return d;
}

/// Outage capacity under the true fading distribution at one location.
inline double ideal_rate(const Eigen::Ref<const Eigen::VectorXd>& samples, double epsilon,
                         double ptx_over_noise) {
  require(ptx_over_noise > 0.0, "ideal_rate: nonpositive ptx");
  const double q = std::max(stats::empirical_quantile(samples, epsilon), 0.0);
  return std::log2(1.0 + ptx_over_noise * q);
}

/// Fraction of locations whose selected rate exceeds (strictly) the rate the
/// true epsilon-quantile supports. Invariant under common ptx because both
/// sides pass through the same monotone map.
inline double meta_probability(const std::vector<RateDecision>& decisions,
                               const Eigen::VectorXd& true_quantiles, double ptx_over_noise) {
  const auto n = static_cast<Eigen::Index>(decisions.size());
  require(n > 0, "meta_probability: no decisions");
  require(true_quantiles.size() == n, "meta_probability: size mismatch");
  require(ptx_over_noise > 0.0, "meta_probability: nonpositive ptx");
  Eigen::Index violations = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double supported =
        std::log2(1.0 + ptx_over_noise * std::max(true_quantiles[i], 0.0));
    if (decisions[static_cast<std::size_t>(i)].rate > supported) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(n);
}

/// R / R_ideal with the conventions: 0/0 is a correct refusal (1.0), and
/// positive R over zero R_ideal is an anomaly reported as +inf for the
/// caller to count and exclude.
inline double normalized_rate(double rate, double ideal) {
  require(rate >= 0.0 && ideal >= 0.0, "normalized_rate: negative rate");
  if (ideal == 0.0)
    return rate == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return rate / ideal;
}

}  // namespace twinmap::urllc
