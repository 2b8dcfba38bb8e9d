#pragma once

// Shared fixtures and oracles for the test suites. Every oracle here is
// deliberately written against the obvious textbook formula -- explicit
// matrix inverses, full sorts, hand loops -- so it shares no code path with
// the factorization-based library implementations it checks.

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinmap/common.hpp"
#include "twinmap/prior.hpp"
#include "twinmap/rng.hpp"
#include "twinmap/scene.hpp"

namespace testsupport {

using twinmap::Rng;

/// Unique scratch directory, recursively removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::string templ =
        (std::filesystem::temp_directory_path() / "twinmap-test-XXXXXX").string();
    std::vector<char> buf(templ.begin(), templ.end());
    buf.push_back('\0');
    const char* made = mkdtemp(buf.data());
    twinmap::require(made != nullptr, "test: mkdtemp failed");
    path = made;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  twinmap::require(f.good(), "test: cannot write " + path);
  f << text;
}

// --- scene builders ---------------------------------------------------------

/// Axis-aligned box footprint obstacle.
inline twinmap::scene::Obstacle box(double x0, double y0, double x1, double y1,
                                    double height, double permittivity) {
  twinmap::scene::Obstacle o;
  o.footprint.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  o.height = height;
  o.permittivity = permittivity;
  return o;
}

/// Square scene built directly (no file): grid from the origin, AP above the
/// center unless moved afterwards. n_sub subcarriers around a 6 GHz carrier.
inline twinmap::scene::Scene make_scene(double extent = 50.0, double spacing = 5.0,
                                        int n_sub = 5, double spacing_hz = 1e6) {
  twinmap::scene::Scene s;
  s.ap_position = {extent / 2.0, extent / 2.0, 27.0};
  s.grid.origin = {0.0, 0.0};
  s.grid.extent = {extent, extent};
  s.grid.spacing = spacing;
  s.grid.height = 1.5;
  s.rf.carrier_hz = 6e9;
  s.rf.subcarrier_spacing_hz = spacing_hz;
  s.rf.bandwidth_hz = spacing_hz * (n_sub - 1);
  s.rf.n_subcarriers = n_sub;
  return s;
}

/// The same scene as JSON text, for the file-loading surface.
inline nlohmann::json scene_json(double extent = 50.0, double spacing = 5.0,
                                 int n_sub = 5) {
  nlohmann::json j;
  j["ap_position"] = {extent / 2.0, extent / 2.0, 27.0};
  j["grid"] = {{"origin", {0.0, 0.0}},
               {"extent", {extent, extent}},
               {"spacing", spacing},
               {"height", 1.5}};
  j["rf"] = {{"carrier_hz", 6e9},
             {"bandwidth_hz", 1e6 * (n_sub - 1)},
             {"subcarrier_spacing_hz", 1e6}};
  j["obstacles"] = nlohmann::json::array();
  return j;
}

inline nlohmann::json obstacle_json(double x0, double y0, double x1, double y1,
                                    double height, double permittivity) {
  nlohmann::json j;
  j["footprint"] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  j["height"] = height;
  j["permittivity"] = permittivity;
  return j;
}

// --- random linear-algebra instances -----------------------------------------

/// Random symmetric positive-definite matrix: G G^T / m plus a ridge, exactly
/// symmetrized. The ridge keeps oracle inverses trustworthy.
inline Eigen::MatrixXd random_spd(int m, Rng& rng, double ridge = 1e-3) {
  Eigen::MatrixXd g(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = rng.gaussian();
  Eigen::MatrixXd c = g * g.transpose() / static_cast<double>(m);
  c = ((c + c.transpose()) / 2.0).eval();
  c.diagonal().array() += ridge;
  return c;
}

inline Eigen::VectorXd random_vector(int m, Rng& rng) {
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i) v[i] = rng.gaussian();
  return v;
}

/// Random prior over m points with a well-conditioned covariance; reg.jitter
/// carries the selection gain floor.
inline twinmap::prior::GpPrior random_prior(int m, Rng& rng, double ridge = 1e-3) {
  twinmap::prior::GpPrior p;
  p.mean = random_vector(m, rng);
  p.cov = random_spd(m, rng, ridge);
  p.reg = {0.0, 1e-12};
  return p;
}

// --- GP conditioning oracle ---------------------------------------------------

struct DensePosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Partitioned-Gaussian conditional evaluated directly with an explicit
/// inverse of C_AA + diag(noise).
inline DensePosterior dense_posterior(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                      const std::vector<int>& a, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& noise,
                                      const std::vector<int>& targets) {
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nt = static_cast<Eigen::Index>(targets.size());
  DensePosterior out;
  out.mean.resize(nt);
  out.variance.resize(nt);
  if (na == 0) {
    for (Eigen::Index j = 0; j < nt; ++j) {
      out.mean[j] = mean[targets[static_cast<std::size_t>(j)]];
      out.variance[j] = cov(targets[static_cast<std::size_t>(j)],
                            targets[static_cast<std::size_t>(j)]);
    }
    return out;
  }
  Eigen::MatrixXd kaa(na, na);
  Eigen::VectorXd resid(na);
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < na; ++j)
      kaa(i, j) = cov(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
    kaa(i, i) += noise[i];
    resid[i] = y[i] - mean[a[static_cast<std::size_t>(i)]];
  }
  const Eigen::MatrixXd kinv = kaa.inverse();
  for (Eigen::Index j = 0; j < nt; ++j) {
    const int t = targets[static_cast<std::size_t>(j)];
    Eigen::RowVectorXd cta(na);
    for (Eigen::Index i = 0; i < na; ++i) cta[i] = cov(t, a[static_cast<std::size_t>(i)]);
    out.mean[j] = mean[t] + cta * kinv * resid;
    out.variance[j] = cov(t, t) - cta * kinv * cta.transpose();
  }
  return out;
}

// --- mutual-information oracles -----------------------------------------------

/// Conditional variance of one coordinate given a conditioning set, via an
/// explicit inverse; `noisy` adds the per-point noise to the conditioning
/// block only.
inline double conditional_variance(const Eigen::MatrixXd& cov, int cand,
                                   const std::vector<int>& given,
                                   const Eigen::VectorXd& noise, bool noisy) {
  if (given.empty()) return cov(cand, cand);
  const auto n = static_cast<Eigen::Index>(given.size());
  Eigen::MatrixXd kgg(n, n);
  Eigen::VectorXd kcg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      kgg(i, j) = cov(given[static_cast<std::size_t>(i)], given[static_cast<std::size_t>(j)]);
    if (noisy) kgg(i, i) += noise[given[static_cast<std::size_t>(i)]];
    kcg[i] = cov(cand, given[static_cast<std::size_t>(i)]);
  }
  return cov(cand, cand) - kcg.dot(kgg.inverse() * kcg);
}

/// Entropy-difference oracle H(t_c | y_A) - H(t_c | t_Abar), with
/// Abar = S \ (A + cand), from Gaussian differential entropies.
inline double mi_gain_oracle(const Eigen::MatrixXd& cov, const std::vector<int>& a, int cand,
                             const Eigen::VectorXd& noise) {
  const int m = static_cast<int>(cov.rows());
  std::vector<char> in(static_cast<std::size_t>(m), 0);
  for (const int i : a) in[static_cast<std::size_t>(i)] = 1;
  in[static_cast<std::size_t>(cand)] = 1;
  std::vector<int> abar;
  for (int i = 0; i < m; ++i)
    if (!in[static_cast<std::size_t>(i)]) abar.push_back(i);
  const double v_num = conditional_variance(cov, cand, a, noise, true);
  const double v_den = conditional_variance(cov, cand, abar, noise, false);
  const double h_num = 0.5 * std::log(2.0 * twinmap::kPi * std::exp(1.0) * v_num);
  const double h_den = 0.5 * std::log(2.0 * twinmap::kPi * std::exp(1.0) * v_den);
  return h_num - h_den;
}

/// Set objective I(y_A; t_{S\A}) from joint-Gaussian log determinants:
/// I = 1/2 [ln det(C_AA + Sigma_A) + ln det(C_BB) - ln det(J)] with B = S\A
/// and J the joint covariance of (y_A, t_B). Used by the greedy-guarantee
/// checks to score arbitrary subsets.
inline double subset_mi(const Eigen::MatrixXd& cov, const std::vector<int>& a,
                        const Eigen::VectorXd& noise) {
  const int m = static_cast<int>(cov.rows());
  std::vector<char> in(static_cast<std::size_t>(m), 0);
  for (const int i : a) in[static_cast<std::size_t>(i)] = 1;
  std::vector<int> b;
  for (int i = 0; i < m; ++i)
    if (!in[static_cast<std::size_t>(i)]) b.push_back(i);
  if (a.empty() || b.empty()) return 0.0;

  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  std::vector<int> all(a);
  all.insert(all.end(), b.begin(), b.end());
  Eigen::MatrixXd joint(na + nb, na + nb);
  for (Eigen::Index i = 0; i < na + nb; ++i)
    for (Eigen::Index j = 0; j < na + nb; ++j)
      joint(i, j) = cov(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  for (Eigen::Index i = 0; i < na; ++i)
    joint(i, i) += noise[a[static_cast<std::size_t>(i)]];

  const double ld_a = std::log(joint.topLeftCorner(na, na).determinant());
  const double ld_b = std::log(joint.bottomRightCorner(nb, nb).determinant());
  const double ld_j = std::log(joint.determinant());
  return 0.5 * (ld_a + ld_b - ld_j);
}

// --- misc ---------------------------------------------------------------------

/// Exponential(mean mu) samples from the shared deterministic stream.
inline Eigen::VectorXd exponential_samples(int n, double mu, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = -mu * std::log(1.0 - rng.uniform());
  return v;
}

/// Sorted copy (the sort-based order-statistic oracle uses full sorts on
/// purpose; the library uses nth_element).
inline std::vector<double> sorted(const Eigen::VectorXd& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace testsupport
