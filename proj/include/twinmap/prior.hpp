#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/scene.hpp"
#include "twinmap/stats.hpp"

namespace twinmap::prior {

using geom::Vec3;

enum class PriorKind { Ensemble, MaternMle, StationaryDt };

/// Regularization actually applied to a prior covariance.
struct Regularization {
  double lambda = 0.0;
  double jitter = 0.0;
};

/// A Gaussian prior over the log-quantile field at every candidate location.
struct GpPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  PriorKind kind = PriorKind::Ensemble;
  Regularization reg;

  int size() const { return static_cast<int>(mean.size()); }
};

struct MaternParams {
  double signal_variance = 1.0;
  double lengthscale = 1.0;
  double smoothness = 1.5;  // nu, one of 1/2, 3/2, 5/2
};

/// Log-distance trend q = zeta + alpha * ln(d), d the 3-D distance to the AP.
struct PathlossFit {
  double zeta = 0.0;
  double alpha = 0.0;
};

struct MaternFitResult {
  MaternParams params;
  double best_loglik = 0.0;
  std::vector<double> start_logliks;  // marginal likelihood at each restart point
  bool degenerate = false;            // constant targets, lengthscale unidentifiable
};

/// Shrinkage toward the diagonal plus a diagonal jitter:
///   C' = (1 - lambda) * C + lambda * diag(C) + jitter * I.
/// The input is symmetrized first, so the output is exactly symmetric, and
/// diagonal entries only ever grow (by jitter).
inline Eigen::MatrixXd regularize(const Eigen::MatrixXd& C, double lambda, double jitter) {
  require(C.rows() == C.cols(), "regularize: non-square input");
  require(lambda >= 0.0 && lambda <= 1.0, "regularize: lambda outside [0, 1]");
  require(jitter >= 0.0, "regularize: negative jitter");
  Eigen::MatrixXd out = 0.5 * (C + C.transpose());
  const Eigen::VectorXd diag = out.diagonal();
  out *= (1.0 - lambda);
  out.diagonal() = diag.array() + jitter;
  return out;
}

/// Moment-matched prior from an ensemble of twin draws: mean and sample
/// covariance (divisor K - 1) of the K log-quantile fields, then shrinkage.
/// jitter < 0 selects the automatic value 1e-6 * median(diag C), floored at
/// 1e-12 so an all-zero ensemble still yields a positive-definite prior.
inline GpPrior ensemble_prior(const std::vector<stats::QuantileDataset>& draws,
                              double lambda = 0.05, double jitter = -1.0) {
  require(draws.size() >= 2, "ensemble: fewer than 2 draws");
  const Eigen::Index m = draws.front().values.size();
  require(m > 0, "ensemble: empty draws");
  for (const auto& d : draws) {
    require(d.values.size() == m, "ensemble: draws of unequal length");
    require(d.epsilon == draws.front().epsilon, "ensemble: mixed epsilon");
  }
  const auto k = static_cast<Eigen::Index>(draws.size());
  Eigen::MatrixXd D(m, k);
  for (Eigen::Index i = 0; i < k; ++i) D.col(i) = draws[static_cast<std::size_t>(i)].values;

  GpPrior p;
  p.kind = PriorKind::Ensemble;
  p.mean = D.rowwise().mean();
  D.colwise() -= p.mean;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
  C.selfadjointView<Eigen::Lower>().rankUpdate(D, 1.0 / static_cast<double>(k - 1));
  C.triangularView<Eigen::StrictlyUpper>() = C.transpose();

  if (jitter < 0.0) {
    Eigen::VectorXd diag = C.diagonal();
    std::nth_element(diag.data(), diag.data() + m / 2, diag.data() + m);
    jitter = std::max(1e-6 * diag[m / 2], 1e-12);
  }
  require(jitter > 0.0, "ensemble: jitter must be positive");
  p.cov = regularize(C, lambda, jitter);
  p.reg = {lambda, jitter};
  return p;
}

inline void validate(const MaternParams& mp) {
  require(mp.signal_variance > 0.0, "matern: nonpositive signal variance");
  require(mp.lengthscale > 0.0, "matern: nonpositive lengthscale");
  require(mp.smoothness == 0.5 || mp.smoothness == 1.5 || mp.smoothness == 2.5,
          "matern: unsupported smoothness");
}

inline double matern_cov(const Vec3& a, const Vec3& b, const MaternParams& mp) {
  validate(mp);
  const double r = (a - b).norm() / mp.lengthscale;
  if (mp.smoothness == 0.5) return mp.signal_variance * std::exp(-r);
  if (mp.smoothness == 1.5) {
    const double s = std::sqrt(3.0) * r;
    return mp.signal_variance * (1.0 + s) * std::exp(-s);
  }
  const double s = std::sqrt(5.0) * r;
  return mp.signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

inline Eigen::MatrixXd matern_gram(const std::vector<Vec3>& pts, const MaternParams& mp) {
  validate(mp);
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = mp.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = matern_cov(pts[static_cast<std::size_t>(i)],
                                  pts[static_cast<std::size_t>(j)], mp);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

namespace detail {

/// Gaussian log marginal likelihood of y under K = gram + noise * I. A tiny
/// relative stabilizer keeps the factorization alive at near-zero noise;
/// -inf signals an unusable point to the search.
inline double log_marginal(const Eigen::MatrixXd& dist, const Eigen::VectorXd& y,
                           double sigma2, double ell, double nu, double noise_var) {
  const auto n = dist.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double r = dist(i, j) / ell;
      double v;
      if (nu == 0.5) {
        v = sigma2 * std::exp(-r);
      } else if (nu == 1.5) {
        const double s = std::sqrt(3.0) * r;
        v = sigma2 * (1.0 + s) * std::exp(-s);
      } else {
        const double s = std::sqrt(5.0) * r;
        v = sigma2 * (1.0 + s + s * s / 3.0) * std::exp(-s);
      }
      k(i, j) = v;
      k(j, i) = v;
    }
  k.diagonal().array() += noise_var + 1e-10 * sigma2;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const double quad = y.dot(alpha);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * quad - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
}

}  // namespace detail

/// Matern hyperparameter MLE by bounded coordinate search in log space over
/// (lengthscale, signal variance), smoothness fixed, observation noise fixed.
/// Deterministic: 8 fixed starts on the bound box, per-coordinate probing
/// with halving steps until the log step drops below 1e-3. Ties keep the
/// earlier start. Constant targets short-circuit to a flagged bounds-clipped
/// result. Requires at least 3 observations and non-coincident geometry.
inline MaternFitResult fit_matern_mle(const std::vector<Vec3>& xs, const Eigen::VectorXd& y,
                                      double noise_var, double smoothness = 1.5) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  require(n >= 3, "matern fit: insufficient data (need at least 3 points)");
  require(y.size() == n, "matern fit: feature/target size mismatch");
  require(noise_var >= 0.0, "matern fit: negative noise variance");
  validate(MaternParams{1.0, 1.0, smoothness});

  Eigen::MatrixXd dist(n, n);
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d =
          (xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)]).norm();
      dist(i, j) = d;
      dist(j, i) = d;
      dmax = std::max(dmax, d);
      if (d > 1e-12) dmin = std::min(dmin, d);
    }
  }
  require(dmax > 0.0, "matern fit: all points coincide");

  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(n - 1);
  const double lo_ell = std::log(0.5 * dmin);
  const double hi_ell = std::log(10.0 * dmax);

  MaternFitResult res;
  if (var <= 1e-15 * std::max(1.0, mean * mean)) {
    res.degenerate = true;
    res.params = {std::max(var, 1e-12), 10.0 * dmax, smoothness};
    res.best_loglik = detail::log_marginal(dist, y, res.params.signal_variance,
                                           res.params.lengthscale, smoothness, noise_var);
    return res;
  }
  const double lo_s2 = std::log(1e-4 * var);
  const double hi_s2 = std::log(1e4 * var);

  const auto eval = [&](double lell, double ls2) {
    return detail::log_marginal(dist, y, std::exp(ls2), std::exp(lell), smoothness, noise_var);
  };

  double best_ell = 0.0, best_s2 = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < 8; ++start) {
    const double fe = (1.0 + 2.0 * (start % 4)) / 8.0;  // 1/8, 3/8, 5/8, 7/8
    const double fs = (start < 4) ? 0.25 : 0.75;
    double le = lo_ell + fe * (hi_ell - lo_ell);
    double ls = lo_s2 + fs * (hi_s2 - lo_s2);
    double cur = eval(le, ls);
    res.start_logliks.push_back(cur);

    double step_e = (hi_ell - lo_ell) / 8.0;
    double step_s = (hi_s2 - lo_s2) / 8.0;
    int evals = 0;
    while ((step_e > 1e-3 || step_s > 1e-3) && evals < 400) {
      bool improved = false;
      for (int coord = 0; coord < 2; ++coord) {
        double& v = (coord == 0) ? le : ls;
        const double step = (coord == 0) ? step_e : step_s;
        const double lo = (coord == 0) ? lo_ell : lo_s2;
        const double hi = (coord == 0) ? hi_ell : hi_s2;
        for (const double trial : {std::clamp(v - step, lo, hi), std::clamp(v + step, lo, hi)}) {
          if (trial == v) continue;
          const double save = v;
          v = trial;
          const double f = eval(le, ls);
          evals += 1;
          if (f > cur) {
            cur = f;
            improved = true;
          } else {
            v = save;
          }
        }
      }
      if (!improved) {
        step_e *= 0.5;
        step_s *= 0.5;
      }
    }
    if (cur > best) {
      best = cur;
      best_ell = le;
      best_s2 = ls;
    }
  }
  res.params = {std::exp(best_s2), std::exp(best_ell), smoothness};
  res.best_loglik = best;
  return res;
}

/// Least-squares fit of the log-distance trend over the candidate grid.
inline PathlossFit pathloss_fit(const stats::QuantileDataset& ds,
                                const scene::CandidateGrid& grid, const Vec3& ap) {
  const auto n = static_cast<Eigen::Index>(grid.points.size());
  require(ds.values.size() == n, "pathloss: dataset/grid size mismatch");
  require(n >= 2, "pathloss: insufficient data");
  double sl = 0.0, sll = 0.0, sq = 0.0, slq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (grid.points[static_cast<std::size_t>(i)] - ap).norm();
    require(d > 0.0, "pathloss: candidate coincides with ap");
    const double l = std::log(d);
    const double q = ds.values[i];
    sl += l;
    sll += l * l;
    sq += q;
    slq += l * q;
  }
  const double nn = static_cast<double>(n);
  const double det = nn * sll - sl * sl;
  require(std::abs(det) > 1e-12 * std::max(1.0, nn * sll), "pathloss: singular regression");
  PathlossFit f;
  f.alpha = (nn * slq - sl * sq) / det;
  f.zeta = (sq - f.alpha * sl) / nn;
  return f;
}

/// Baseline prior from a single twin draw: log-distance trend as the mean,
/// stationary Matern fitted to the draw's residuals as the covariance. When
/// the residuals vanish (or the Matern fit degenerates) the covariance falls
/// back to a bare 1e-12 jitter so downstream factorizations stay valid.
inline GpPrior stationary_dt_prior(const stats::QuantileDataset& ds,
                                   const scene::CandidateGrid& grid, const Vec3& ap,
                                   double noise_var, double smoothness = 1.5) {
  const PathlossFit fit = pathloss_fit(ds, grid, ap);
  const auto n = static_cast<Eigen::Index>(grid.points.size());
  GpPrior p;
  p.kind = PriorKind::StationaryDt;
  p.mean.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    p.mean[i] = fit.zeta + fit.alpha * std::log((grid.points[static_cast<std::size_t>(i)] - ap).norm());
  const Eigen::VectorXd resid = ds.values - p.mean;

  const double scale = 1.0 + ds.values.cwiseAbs().maxCoeff();
  if (resid.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    p.cov = 1e-12 * Eigen::MatrixXd::Identity(n, n);
    p.reg = {0.0, 1e-12};
    return p;
  }
  const MaternFitResult mfit = fit_matern_mle(grid.points, resid, noise_var, smoothness);
  if (mfit.degenerate) {
    p.cov = 1e-12 * Eigen::MatrixXd::Identity(n, n);
    p.reg = {0.0, 1e-12};
    return p;
  }
  const double jitter = 1e-8 * mfit.params.signal_variance;
  p.cov = matern_gram(grid.points, mfit.params);
  p.cov.diagonal().array() += jitter;
  p.reg = {0.0, jitter};
  return p;
}

}  // namespace twinmap::prior
