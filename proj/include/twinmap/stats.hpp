#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/propagate.hpp"

namespace twinmap::stats {

/// Log epsilon-quantile of channel power per candidate location, derived
/// from one environment draw's power matrix.
struct QuantileDataset {
  double epsilon = 0.0;
  Eigen::VectorXd values;  // q_m = ln(max(p_eps(x_m), power floor))
  std::uint64_t source_seed = 0;
};

/// Empirical lower epsilon-quantile: the r-th order statistic with
/// r = max(floor(N * eps), 1), i.e. the value with index r - 1 after sorting
/// ascending. Biased low for tiny N by design; never interpolates.
inline double empirical_quantile(const Eigen::Ref<const Eigen::VectorXd>& samples,
                                 double epsilon) {
  const Eigen::Index n = samples.size();
  require(n > 0, "quantile: empty sample set");
  require(epsilon > 0.0 && epsilon < 1.0, "quantile: epsilon outside (0, 1)");
  const auto r = std::max<Eigen::Index>(
      static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * epsilon)), 1);
  std::vector<double> v(samples.data(), samples.data() + n);
  std::nth_element(v.begin(), v.begin() + (r - 1), v.end());
  return v[static_cast<std::size_t>(r - 1)];
}

/// ln of the floored quantile; the floor keeps dead channels finite.
inline double log_quantile(const Eigen::Ref<const Eigen::VectorXd>& samples,
                           double epsilon) {
  return std::log(std::max(empirical_quantile(samples, epsilon), kPowerFloor));
}

inline QuantileDataset build_dataset(const propagate::PowerMatrix& pm, double epsilon) {
  QuantileDataset ds;
  ds.epsilon = epsilon;
  ds.source_seed = pm.beta_seed;
  ds.values.resize(pm.values.cols());
  for (Eigen::Index m = 0; m < pm.values.cols(); ++m)
    ds.values[m] = log_quantile(pm.values.col(m), epsilon);
  return ds;
}

/// Fraction of fading samples whose instantaneous rate falls below R.
inline double empirical_outage(const Eigen::Ref<const Eigen::VectorXd>& samples, double rate,
                               double ptx_over_noise) {
  require(samples.size() > 0, "outage: empty sample set");
  Eigen::Index below = 0;
  for (Eigen::Index i = 0; i < samples.size(); ++i)
    if (std::log2(1.0 + ptx_over_noise * samples[i]) < rate) ++below;
  return static_cast<double>(below) / static_cast<double>(samples.size());
}

}  // namespace twinmap::stats
