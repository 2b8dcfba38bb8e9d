#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/prior.hpp"

namespace twinmap::gp {

/// Measurements at a subset A of candidate indices: values y_A and the
/// per-observation noise variance.
struct Observations {
  std::vector<int> indices;
  Eigen::VectorXd values;
  Eigen::VectorXd noise;

  int size() const { return static_cast<int>(indices.size()); }
};

/// Posterior over a target index set, together with the plan that produced
/// it.
struct PosteriorField {
  std::vector<int> targets;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Observations plan;
  prior::PriorKind prior_kind = prior::PriorKind::Ensemble;
};

namespace detail {

inline void validate_indices(const std::vector<int>& idx, int m, const char* what) {
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (const int i : idx) {
    require(i >= 0 && i < m, std::string("gp: ") + what + " index out of range");
    require(!seen[static_cast<std::size_t>(i)], std::string("gp: duplicate ") + what + " index");
    seen[static_cast<std::size_t>(i)] = 1;
  }
}

}  // namespace detail

/// Precomputed conditioning handle: factorizes C_AA + diag(noise) once, then
/// serves any number of posterior queries. Variance queries do not depend on
/// the measured values, so re-planning with fresh measurements at the same
/// locations only repeats the cheap residual solve. The prior must outlive
/// the solver. All query methods are const and safe to share across threads.
class Solver {
 public:
  Solver(const prior::GpPrior& prior, Observations obs)
      : prior_(&prior), obs_(std::move(obs)) {
    const int m = prior_->size();
    require(m > 0, "gp: empty prior");
    require(prior_->cov.rows() == m && prior_->cov.cols() == m, "gp: prior shape mismatch");
    detail::validate_indices(obs_.indices, m, "observation");
    const auto a = static_cast<Eigen::Index>(obs_.indices.size());
    require(obs_.values.size() == a, "gp: observation value count mismatch");
    require(obs_.noise.size() == a, "gp: observation noise count mismatch");
    require((obs_.noise.array() >= 0.0).all(), "gp: negative observation noise");
    if (a == 0) return;
    Eigen::MatrixXd v(a, a);
    for (Eigen::Index i = 0; i < a; ++i)
      for (Eigen::Index j = 0; j < a; ++j)
        v(i, j) = prior_->cov(obs_.indices[static_cast<std::size_t>(i)],
                              obs_.indices[static_cast<std::size_t>(j)]);
    v.diagonal() += obs_.noise;
    llt_.compute(v);
    require(llt_.info() == Eigen::Success, "gp: factorization failure");
  }

  const Observations& observations() const { return obs_; }

  /// Posterior mean at the targets for measurement vector y (same locations
  /// as the stored plan, possibly different values).
  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& y,
                                 const std::vector<int>& targets) const {
    detail::validate_indices(targets, prior_->size(), "target");
    const auto a = static_cast<Eigen::Index>(obs_.indices.size());
    require(y.size() == a, "gp: measurement size mismatch");
    const auto t = static_cast<Eigen::Index>(targets.size());
    Eigen::VectorXd mean(t);
    for (Eigen::Index i = 0; i < t; ++i)
      mean[i] = prior_->mean[targets[static_cast<std::size_t>(i)]];
    if (a == 0) return mean;
    Eigen::VectorXd resid(a);
    for (Eigen::Index i = 0; i < a; ++i)
      resid[i] = y[i] - prior_->mean[obs_.indices[static_cast<std::size_t>(i)]];
    const Eigen::VectorXd alpha = llt_.solve(resid);
    // Accumulate column by column: cov is column-major, so walking one
    // observation column across all targets stays on contiguous memory.
    for (Eigen::Index j = 0; j < a; ++j) {
      const auto col = prior_->cov.col(obs_.indices[static_cast<std::size_t>(j)]);
      const double w = alpha[j];
      for (Eigen::Index i = 0; i < t; ++i)
        mean[i] += w * col[targets[static_cast<std::size_t>(i)]];
    }
    return mean;
  }

  /// Posterior variance at the targets; independent of measured values.
  /// Tiny negative results from rounding clamp to zero; anything worse
  /// throws.
  Eigen::VectorXd posterior_variance(const std::vector<int>& targets) const {
    detail::validate_indices(targets, prior_->size(), "target");
    const auto a = static_cast<Eigen::Index>(obs_.indices.size());
    const auto t = static_cast<Eigen::Index>(targets.size());
    Eigen::VectorXd var(t);
    if (a == 0) {
      for (Eigen::Index i = 0; i < t; ++i)
        var[i] = prior_->cov(targets[static_cast<std::size_t>(i)],
                             targets[static_cast<std::size_t>(i)]);
      return var;
    }
    Eigen::MatrixXd cat(a, t);
    for (Eigen::Index j = 0; j < t; ++j)
      for (Eigen::Index i = 0; i < a; ++i)
        cat(i, j) = prior_->cov(obs_.indices[static_cast<std::size_t>(i)],
                                targets[static_cast<std::size_t>(j)]);
    const Eigen::MatrixXd w = llt_.matrixL().solve(cat);
    for (Eigen::Index j = 0; j < t; ++j) {
      const int tj = targets[static_cast<std::size_t>(j)];
      double v = prior_->cov(tj, tj) - w.col(j).squaredNorm();
      if (v < 0.0) {
        require(v >= -1e-10 * std::max(1.0, prior_->cov(tj, tj)), "gp: negative variance");
        v = 0.0;
      }
      var[j] = v;
    }
    return var;
  }

  PosteriorField predict(const Eigen::VectorXd& y, const std::vector<int>& targets) const {
    PosteriorField f;
    f.targets = targets;
    f.mean = posterior_mean(y, targets);
    f.variance = posterior_variance(targets);
    f.plan = obs_;
    f.plan.values = y;
    f.prior_kind = prior_->kind;
    return f;
  }

 private:
  const prior::GpPrior* prior_;
  Observations obs_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// One-shot posterior; bit-identical to building the solver by hand.
inline PosteriorField posterior(const prior::GpPrior& prior, const Observations& obs,
                                const std::vector<int>& targets) {
  const Solver s(prior, obs);
  return s.predict(obs.values, targets);
}

/// Convenience: every candidate index as a target list.
inline std::vector<int> all_targets(int m) {
  std::vector<int> t(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) t[static_cast<std::size_t>(i)] = i;
  return t;
}

}  // namespace twinmap::gp
