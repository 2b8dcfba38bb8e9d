#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "twinmap/common.hpp"
#include "twinmap/geometry.hpp"
#include "twinmap/parallel.hpp"
#include "twinmap/scene.hpp"

namespace twinmap::propagate {

using geom::Vec2;
using geom::Vec3;

enum class PathKind { Los, Reflected };

/// One wall interaction: which obstacle, and the incidence angle measured
/// from the facade normal, in [0, pi/2).
struct Bounce {
  int obstacle = -1;
  double incidence = 0.0;
};

struct Path {
  PathKind kind = PathKind::Los;
  double total_length = 0.0;  // meters, AP to Rx along the polyline
  std::vector<Bounce> bounces;
  bool blocked = false;

  int order() const { return static_cast<int>(bounces.size()); }
};

/// Channel gain samples |h(f_n, x_m)|^2: rows are subcarriers, columns are
/// candidate locations. Tagged with the environment draw that produced it.
struct PowerMatrix {
  Eigen::MatrixXd values;
  std::uint64_t beta_seed = 0;
};

/// TE (perpendicular polarization) reflection coefficient off a wall with
/// relative permittivity eps_r >= 1. Real-valued for lossless walls; negative
/// at normal incidence, approaching -1 at grazing.
inline double fresnel_te(double incidence, double eps_r) {
  require(incidence >= 0.0 && incidence <= kPi / 2.0 + 1e-12,
          "fresnel: incidence outside [0, pi/2]");
  require(eps_r >= 1.0, "fresnel: permittivity below 1");
  const double c = std::cos(incidence);
  const double s2 = std::sin(incidence) * std::sin(incidence);
  const double root = std::sqrt(std::max(eps_r - s2, 0.0));
  return (c - root) / (c + root);
}

inline std::vector<double> subcarrier_frequencies(const scene::RfConfig& rf) {
  require(rf.n_subcarriers >= 1, "rf: no subcarriers");
  const double f0 = rf.carrier_hz - 0.5 * rf.bandwidth_hz;
  require(f0 > 0.0, "rf: band extends to nonpositive frequency");
  std::vector<double> f(static_cast<std::size_t>(rf.n_subcarriers));
  for (int n = 0; n < rf.n_subcarriers; ++n)
    f[static_cast<std::size_t>(n)] = f0 + n * rf.subcarrier_spacing_hz;
  return f;
}

namespace detail {

struct Facade {
  int obstacle = -1;
  Vec2 e0, e1;
  double height = 0.0;
};

inline std::vector<Facade> facades(const scene::Scene& s,
                                   const std::vector<geom::Prism>& prisms) {
  std::vector<Facade> out;
  for (std::size_t i = 0; i < prisms.size(); ++i) {
    const auto& fp = prisms[i].footprint;
    for (std::size_t e = 0; e < fp.size(); ++e) {
      const auto [u, v] = fp.edge(e);
      if ((v - u).norm() <= 1e-12) continue;
      out.push_back({static_cast<int>(i), u, v, s.obstacles[i].height});
    }
  }
  return out;
}

inline bool blocked_by_any(const Vec3& a, const Vec3& b,
                           const std::vector<geom::Prism>& prisms) {
  for (const auto& p : prisms)
    if (geom::segment_blocked(a, b, p)) return true;
  return false;
}

}  // namespace detail

/// Image-method path enumeration up to max_order wall reflections, against
/// the shifted obstacle prisms of the given draw. Mirrors act on the
/// horizontal plane only (facades are vertical), so image heights stay at the
/// AP height. A reflected path is kept when every specular point lands
/// strictly within its facade (horizontally and below the wall top) and
/// every polyline segment clears every prism. Consecutive bounces off the
/// same facade are not enumerated. The LOS path, when clear, comes first;
/// reflected paths follow in facade-sequence order.
inline std::vector<Path> trace_paths(const scene::Scene& s, const scene::BetaDraw& beta,
                                     const Vec3& rx, int max_order) {
  require(max_order >= 0, "trace: negative max_order");
  require(max_order <= 3, "trace: max_order above 3 rejected (cost guard)");
  const auto prisms = scene::shifted_prisms(s, beta);
  const auto walls = detail::facades(s, prisms);
  const Vec3 ap = s.ap_position;

  std::vector<Path> paths;
  if (!detail::blocked_by_any(ap, rx, prisms)) {
    Path los;
    los.kind = PathKind::Los;
    los.total_length = (rx - ap).norm();
    paths.push_back(std::move(los));
  }

  constexpr double kTol = 1e-12;
  std::vector<int> seq;          // facade indices, one per bounce
  std::vector<Vec2> images = {ap.head<2>()};  // images[j] = AP mirrored j times

  const auto try_complete = [&]() {
    const std::size_t k = seq.size();
    std::vector<Vec3> pts(k);  // specular points, folded back from the receiver
    Vec3 tgt = rx;
    for (std::size_t j = k; j >= 1; --j) {
      const auto& f = walls[static_cast<std::size_t>(seq[j - 1])];
      const Vec2 img = images[j];
      const auto ts = geom::cross_params(img, tgt.head<2>(), f.e0, f.e1);
      if (!ts) return;
      const auto [t, se] = *ts;
      if (t <= kTol || t >= 1.0 - kTol) return;
      if (se <= kTol || se >= 1.0 - kTol) return;
      const double z = ap.z() + t * (tgt.z() - ap.z());
      if (z <= 0.0 || z >= f.height) return;
      const Vec2 xy = img + t * (tgt.head<2>() - img).eval();
      pts[j - 1] = Vec3(xy.x(), xy.y(), z);
      tgt = pts[j - 1];
    }
    Path path;
    path.kind = PathKind::Reflected;
    Vec3 prev = ap;
    for (std::size_t j = 0; j <= k; ++j) {
      const Vec3 next = (j < k) ? pts[j] : rx;
      if (detail::blocked_by_any(prev, next, prisms)) return;
      if (j < k) {
        const auto& f = walls[static_cast<std::size_t>(seq[j])];
        const Vec2 edge_dir = (f.e1 - f.e0).normalized();
        const Vec3 normal(-edge_dir.y(), edge_dir.x(), 0.0);
        const Vec3 dir = (next - prev).normalized();
        const double c = std::min(std::abs(dir.dot(normal)), 1.0);
        path.bounces.push_back({f.obstacle, std::acos(c)});
      }
      path.total_length += (next - prev).norm();
      prev = next;
    }
    paths.push_back(std::move(path));
  };

  const auto recurse = [&](auto&& self, int last) -> void {
    for (std::size_t fi = 0; fi < walls.size(); ++fi) {
      if (static_cast<int>(fi) == last) continue;
      const auto& f = walls[fi];
      images.push_back(geom::mirror_point(images.back(), f.e0, f.e1));
      seq.push_back(static_cast<int>(fi));
      try_complete();
      if (static_cast<int>(seq.size()) < max_order) self(self, static_cast<int>(fi));
      seq.pop_back();
      images.pop_back();
    }
  };
  if (max_order >= 1) recurse(recurse, -1);
  return paths;
}

/// Complex amplitude of one path at one frequency:
///   (lambda / (4 pi L)) * prod_j Gamma_j * exp(-i 2 pi f L / c).
inline std::complex<double> path_amplitude(const Path& path, const scene::BetaDraw& beta,
                                           double frequency_hz) {
  require(!path.blocked, "amplitude: blocked path");
  require(path.total_length > 0.0, "amplitude: degenerate path");
  require(frequency_hz > 0.0, "amplitude: nonpositive frequency");
  const double lambda = kSpeedOfLight / frequency_hz;
  double mag = lambda / (4.0 * kPi * path.total_length);
  for (const auto& b : path.bounces) {
    const auto idx = static_cast<std::size_t>(b.obstacle);
    require(idx < beta.permittivities.size(), "amplitude: bounce obstacle out of range");
    mag *= fresnel_te(b.incidence, beta.permittivities[idx]);
  }
  const double phase = -2.0 * kPi * frequency_hz * path.total_length / kSpeedOfLight;
  return {mag * std::cos(phase), mag * std::sin(phase)};
}

/// |h|^2 across the subcarrier comb at one location.
inline Eigen::VectorXd channel_power_column(const scene::Scene& s,
                                            const scene::BetaDraw& beta, const Vec3& rx,
                                            int max_order) {
  const auto paths = trace_paths(s, beta, rx, max_order);
  const auto freqs = subcarrier_frequencies(s.rf);
  Eigen::VectorXd out(static_cast<Eigen::Index>(freqs.size()));
  for (std::size_t n = 0; n < freqs.size(); ++n) {
    std::complex<double> h{0.0, 0.0};
    for (const auto& p : paths) h += path_amplitude(p, beta, freqs[n]);
    out[static_cast<Eigen::Index>(n)] = std::norm(h);
  }
  return out;
}

/// Full N x M gain matrix over the candidate grid. Columns are filled in
/// parallel; each column depends only on its own location, so the matrix is
/// identical for any thread count.
inline PowerMatrix channel_power_matrix(const scene::Scene& s, const scene::CandidateGrid& grid,
                                        const scene::BetaDraw& beta, int max_order) {
  PowerMatrix pm;
  pm.beta_seed = beta.seed;
  pm.values.resize(s.rf.n_subcarriers, grid.size());
  parallel_for(static_cast<std::size_t>(grid.size()), [&](std::size_t m) {
    pm.values.col(static_cast<Eigen::Index>(m)) =
        channel_power_column(s, beta, grid.points[m], max_order);
  });
  return pm;
}

}  // namespace twinmap::propagate
