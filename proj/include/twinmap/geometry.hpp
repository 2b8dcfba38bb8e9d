#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "twinmap/common.hpp"

namespace twinmap::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double point_segment_distance(const Vec2& p, const Vec2& u, const Vec2& v) {
  const Vec2 e = v - u;
  const double l2 = e.squaredNorm();
  if (l2 == 0.0) return (p - u).norm();
  const double t = std::clamp((p - u).dot(e) / l2, 0.0, 1.0);
  return (p - (u + t * e)).norm();
}

/// Intersection parameters of the lines a + t(b - a) and u + s(v - u).
/// Empty when the lines are (near) parallel. Callers apply their own range
/// checks on t and s, so one solver serves segment/segment and segment/line.
inline std::optional<std::pair<double, double>> cross_params(const Vec2& a, const Vec2& b,
                                                             const Vec2& u, const Vec2& v) {
  const Vec2 d = b - a;
  const Vec2 e = v - u;
  const double denom = cross2(d, e);
  const double scale = d.norm() * e.norm();
  if (std::abs(denom) <= 1e-14 * scale) return std::nullopt;
  const Vec2 w = u - a;
  return std::make_pair(cross2(w, e) / denom, cross2(w, d) / denom);
}

/// Reflection of p across the infinite line through e0, e1.
inline Vec2 mirror_point(const Vec2& p, const Vec2& e0, const Vec2& e1) {
  const Vec2 e = e1 - e0;
  const double l2 = e.squaredNorm();
  require(l2 > 0.0, "geometry: degenerate mirror edge");
  const Vec2 w = p - e0;
  const Vec2 foot = e0 + (w.dot(e) / l2) * e;
  return 2.0 * foot - p;
}

/// Simple polygon given by its vertex loop (either winding, no repeated
/// closing vertex). Used for obstacle footprints.
struct Polygon {
  std::vector<Vec2> vertices;

  std::size_t size() const { return vertices.size(); }

  std::pair<Vec2, Vec2> edge(std::size_t i) const {
    return {vertices[i], vertices[(i + 1) % vertices.size()]};
  }

  double signed_area() const {
    double s = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto [u, v] = edge(i);
      s += cross2(u, v);
    }
    return 0.5 * s;
  }

  double area() const { return std::abs(signed_area()); }

  /// Strict interior test: points on the boundary (within tol) are outside.
  bool contains(const Vec2& p, double tol = 1e-9) const {
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto [u, v] = edge(i);
      if (point_segment_distance(p, u, v) <= tol) return false;
    }
    bool inside = false;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto [u, v] = edge(i);
      if ((u.y() > p.y()) != (v.y() > p.y())) {
        const double xint = u.x() + (p.y() - u.y()) / (v.y() - u.y()) * (v.x() - u.x());
        if (p.x() < xint) inside = !inside;
      }
    }
    return inside;
  }

  Polygon shifted(const Vec2& offset) const {
    Polygon out = *this;
    for (auto& v : out.vertices) v += offset;
    return out;
  }
};

/// Vertical prism: footprint extruded from the ground plane z = 0 up to
/// height. Obstacles are prisms over (possibly shifted) footprints.
struct Prism {
  Polygon footprint;
  double height = 0.0;
};

/// True when the open segment between a and b, shrunk to parameters
/// [eps, 1 - eps], passes through the prism interior. The shrink keeps
/// endpoints that sit exactly on a facade (e.g. reflection points) from
/// flagging their own wall. Grazing contact with a facade or the roof plane
/// does not block.
inline bool segment_blocked(const Vec3& a, const Vec3& b, const Prism& prism,
                            double eps = 1e-9) {
  const double t0 = eps;
  const double t1 = 1.0 - eps;
  if (t0 >= t1) return false;
  const Vec2 a2 = a.head<2>();
  const Vec2 b2 = b.head<2>();
  const auto z_at = [&](double t) { return a.z() + t * (b.z() - a.z()); };
  const auto xy_at = [&](double t) -> Vec2 { return a2 + t * (b2 - a2); };

  if ((b2 - a2).norm() <= 1e-12) {
    return prism.footprint.contains(a2) &&
           std::min(z_at(t0), z_at(t1)) < prism.height;
  }

  std::vector<double> cuts = {t0, t1};
  for (std::size_t i = 0; i < prism.footprint.size(); ++i) {
    const auto [u, v] = prism.footprint.edge(i);
    if (const auto ts = cross_params(a2, b2, u, v)) {
      const auto [t, s] = *ts;
      if (t > t0 && t < t1 && s >= 0.0 && s <= 1.0) cuts.push_back(t);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i];
    const double hi = cuts[i + 1];
    if (hi - lo <= 1e-12) continue;
    if (!prism.footprint.contains(xy_at(0.5 * (lo + hi)))) continue;
    if (std::min(z_at(lo), z_at(hi)) < prism.height) return true;
  }
  return false;
}

}  // namespace twinmap::geom
