#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/prior.hpp"
#include "twinmap/rng.hpp"

namespace twinmap::select {

enum class SelectMethod { GreedyMi, LazyGreedyMi, Random };

struct ProbePlan {
  std::vector<int> chosen;    // selection order; prefixes are smaller-budget plans
  std::vector<double> gains;  // gain recorded at each pick (zeros for Random)
  SelectMethod method = SelectMethod::GreedyMi;
  int budget = 0;
  long gain_evaluations = 0;  // diagnostic: lazy should need far fewer than naive
};

/// Mutual-information gain of probing candidate c given already-chosen A:
///   0.5 * log( sigma^2(c | y_A) / sigma^2(c | t_{S \ (A+c)}) ),
/// noisy observations in the numerator, noiseless field values in the
/// denominator. Both variances are floored before the ratio so near-singular
/// priors cannot produce infinities; the result must come out finite.
inline double mi_gain(const Eigen::MatrixXd& c, const std::vector<int>& a, int cand,
                      const Eigen::VectorXd& noise, double floor) {
  const Eigen::Index m = c.rows();
  require(c.cols() == m, "mi_gain: non-square covariance");
  require(noise.size() == m, "mi_gain: noise size mismatch");
  require(cand >= 0 && cand < m, "mi_gain: candidate out of range");
  require(floor > 0.0, "mi_gain: nonpositive floor");
  std::vector<char> in_a(static_cast<std::size_t>(m), 0);
  for (const int i : a) {
    require(i >= 0 && i < m, "mi_gain: chosen index out of range");
    require(!in_a[static_cast<std::size_t>(i)], "mi_gain: duplicate chosen index");
    in_a[static_cast<std::size_t>(i)] = 1;
  }
  require(!in_a[static_cast<std::size_t>(cand)], "mi_gain: candidate already chosen");

  const auto conditional_var = [&](const std::vector<int>& given, bool noisy) {
    const auto n = static_cast<Eigen::Index>(given.size());
    if (n == 0) return c(cand, cand);
    Eigen::MatrixXd k(n, n);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int gi = given[static_cast<std::size_t>(i)];
      v[i] = c(gi, cand);
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = c(gi, given[static_cast<std::size_t>(j)]);
      if (noisy) k(i, i) += noise[gi];
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    require(llt.info() == Eigen::Success, "mi_gain: factorization failure");
    return c(cand, cand) - v.dot(llt.solve(v));
  };

  std::vector<int> rest;
  for (int i = 0; i < m; ++i)
    if (!in_a[static_cast<std::size_t>(i)] && i != cand) rest.push_back(i);
  const double num = std::max(conditional_var(a, true), floor);
  const double den = std::max(conditional_var(rest, false), floor);
  const double g = 0.5 * std::log(num / den);
  require(std::isfinite(g), "mi_gain: non-finite gain");
  return g;
}

namespace detail {

/// Shared per-iteration gain evaluator. After begin_iteration(), gain(c) for
/// any unselected c reproduces mi_gain(C, A, c, noise, floor) bit-for-bit:
/// numerators reuse one factorization of C_AA + Sigma_A, and all denominators
/// come from the diagonal of inv(C_BB) over the unselected block B via the
/// Schur identity sigma^2(c | t_{B \ c}) = 1 / [inv(C_BB)]_cc.
class MiGainEngine {
 public:
  MiGainEngine(const Eigen::MatrixXd& c, Eigen::VectorXd noise, double floor)
      : c_(&c), noise_(std::move(noise)), floor_(floor) {
    const Eigen::Index m = c.rows();
    require(c.cols() == m && m > 0, "select: bad covariance");
    require(noise_.size() == m, "select: noise size mismatch");
    require((noise_.array() >= 0.0).all(), "select: negative noise");
    require(floor_ > 0.0, "select: nonpositive floor");
    sel_.assign(static_cast<std::size_t>(m), 0);
    den_.resize(m);
  }

  void begin_iteration() {
    const auto na = static_cast<Eigen::Index>(a_.size());
    const Eigen::Index m = c_->rows();
    if (na > 0) {
      Eigen::MatrixXd kaa(na, na);
      for (Eigen::Index i = 0; i < na; ++i) {
        for (Eigen::Index j = 0; j < na; ++j)
          kaa(i, j) = (*c_)(a_[static_cast<std::size_t>(i)], a_[static_cast<std::size_t>(j)]);
        kaa(i, i) += noise_[a_[static_cast<std::size_t>(i)]];
      }
      llt_.compute(kaa);
      require(llt_.info() == Eigen::Success, "select: factorization failure");
    }
    std::vector<int> b;
    for (int i = 0; i < m; ++i)
      if (!sel_[static_cast<std::size_t>(i)]) b.push_back(i);
    const auto nb = static_cast<Eigen::Index>(b.size());
    Eigen::MatrixXd kbb(nb, nb);
    for (Eigen::Index i = 0; i < nb; ++i)
      for (Eigen::Index j = 0; j < nb; ++j)
        kbb(i, j) = (*c_)(b[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
    const Eigen::LLT<Eigen::MatrixXd> lltb(kbb);
    require(lltb.info() == Eigen::Success, "select: complement factorization failure");
    const Eigen::MatrixXd inv = lltb.solve(Eigen::MatrixXd::Identity(nb, nb));
    for (Eigen::Index i = 0; i < nb; ++i) {
      require(inv(i, i) > 0.0, "select: denominator breakdown");
      den_[b[static_cast<std::size_t>(i)]] = 1.0 / inv(i, i);
    }
  }

  double gain(int cand) {
    ++evals_;
    const auto na = static_cast<Eigen::Index>(a_.size());
    double num = (*c_)(cand, cand);
    if (na > 0) {
      Eigen::VectorXd v(na);
      for (Eigen::Index i = 0; i < na; ++i) v[i] = (*c_)(a_[static_cast<std::size_t>(i)], cand);
      llt_.matrixL().solveInPlace(v);
      num -= v.squaredNorm();
    }
    const double g =
        0.5 * std::log(std::max(num, floor_) / std::max(den_[cand], floor_));
    require(std::isfinite(g), "select: non-finite gain");
    return g;
  }

  void commit(int idx) {
    sel_[static_cast<std::size_t>(idx)] = 1;
    a_.push_back(idx);
  }

  bool is_selected(int idx) const { return sel_[static_cast<std::size_t>(idx)] != 0; }
  long evals() const { return evals_; }

 private:
  const Eigen::MatrixXd* c_;
  Eigen::VectorXd noise_;
  double floor_;
  std::vector<char> sel_;
  std::vector<int> a_;
  Eigen::VectorXd den_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  long evals_ = 0;
};

inline double gain_floor(const prior::GpPrior& p) {
  return std::max(p.reg.jitter, 1e-300);
}

inline void check_budget(const prior::GpPrior& p, int k) {
  require(k >= 0, "select: negative budget");
  require(k <= p.size(), "select: budget exceeds candidate count");
}

}  // namespace detail

/// Naive greedy: every iteration evaluates the gain of every unselected
/// candidate and picks the largest, ties to the smallest index.
inline ProbePlan greedy_select(const prior::GpPrior& p, int k, const Eigen::VectorXd& noise) {
  detail::check_budget(p, k);
  const int m = p.size();
  detail::MiGainEngine eng(p.cov, noise, detail::gain_floor(p));
  ProbePlan plan;
  plan.method = SelectMethod::GreedyMi;
  plan.budget = k;
  for (int step = 0; step < k; ++step) {
    eng.begin_iteration();
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int cand = 0; cand < m; ++cand) {
      if (eng.is_selected(cand)) continue;
      const double g = eng.gain(cand);
      if (g > best) {
        best = g;
        best_idx = cand;
      }
    }
    eng.commit(best_idx);
    plan.chosen.push_back(best_idx);
    plan.gains.push_back(best);
  }
  plan.gain_evaluations = eng.evals();
  return plan;
}

/// Lazy greedy with stale upper bounds (gains from earlier iterations).
/// Submodularity makes stale bounds valid ceilings, so a candidate whose
/// fresh gain tops every remaining bound is the true argmax. Floating-point
/// reevaluation can wobble around a stale bound by a few ulp, so a candidate
/// is only accepted once it clears the best remaining bound by a small
/// relative margin; anything closer gets refreshed. Produces exactly the
/// plan and gains of greedy_select on the same inputs.
inline ProbePlan lazy_greedy_select(const prior::GpPrior& p, int k,
                                    const Eigen::VectorXd& noise) {
  detail::check_budget(p, k);
  const int m = p.size();
  detail::MiGainEngine eng(p.cov, noise, detail::gain_floor(p));
  ProbePlan plan;
  plan.method = SelectMethod::LazyGreedyMi;
  plan.budget = k;
  if (k == 0) return plan;

  struct Entry {
    double bound;
    int idx;
    int stamp;
    bool operator<(const Entry& o) const {
      if (bound != o.bound) return bound < o.bound;
      return idx > o.idx;
    }
  };
  std::priority_queue<Entry> heap;

  eng.begin_iteration();
  {
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int cand = 0; cand < m; ++cand) {
      const double g = eng.gain(cand);
      heap.push({g, cand, 0});
      if (g > best) {
        best = g;
        best_idx = cand;
      }
    }
    eng.commit(best_idx);
    plan.chosen.push_back(best_idx);
    plan.gains.push_back(best);
  }

  std::vector<Entry> parked;
  for (int step = 1; step < k; ++step) {
    eng.begin_iteration();
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    parked.clear();
    while (!heap.empty()) {
      const Entry e = heap.top();
      if (eng.is_selected(e.idx)) {
        heap.pop();
        continue;
      }
      if (best_idx >= 0 && best > e.bound + 1e-12 * (1.0 + std::abs(best))) break;
      heap.pop();
      if (e.stamp == step) {
        parked.push_back(e);  // already refreshed and reflected in best
        continue;
      }
      const double g = eng.gain(e.idx);
      heap.push({g, e.idx, step});
      if (g > best || (g == best && e.idx < best_idx)) {
        best = g;
        best_idx = e.idx;
      }
    }
    for (const auto& e : parked) heap.push(e);
    eng.commit(best_idx);
    plan.chosen.push_back(best_idx);
    plan.gains.push_back(best);
  }
  plan.gain_evaluations = eng.evals();
  return plan;
}

/// Uniform random plan: the first k entries of a seeded Fisher-Yates
/// shuffle, so plans for growing budgets under one seed are nested.
inline ProbePlan random_select(int m, int k, std::uint64_t seed) {
  require(m > 0, "select: empty candidate set");
  require(k >= 0, "select: negative budget");
  require(k <= m, "select: budget exceeds candidate count");
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  ProbePlan plan;
  plan.method = SelectMethod::Random;
  plan.budget = k;
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    plan.chosen.push_back(idx[static_cast<std::size_t>(i)]);
    plan.gains.push_back(0.0);
  }
  return plan;
}

}  // namespace twinmap::select
