#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinmap/common.hpp"
#include "twinmap/geometry.hpp"
#include "twinmap/rng.hpp"

namespace twinmap::scene {

using geom::Vec2;
using geom::Vec3;

/// One building: a footprint polygon extruded to `height`, with the nominal
/// (blueprint) relative permittivity of its walls. The twin never trusts the
/// nominal value; sample_beta replaces it with a random draw.
struct Obstacle {
  geom::Polygon footprint;
  double height = 0.0;
  double permittivity = 1.0;
};

struct GridSpec {
  Vec2 origin = Vec2::Zero();
  Vec2 extent = Vec2::Zero();
  double spacing = 0.0;
  double height = 0.0;  // z of every candidate point
};

struct RfConfig {
  double carrier_hz = 0.0;
  double bandwidth_hz = 0.0;
  double subcarrier_spacing_hz = 0.0;
  int n_subcarriers = 0;
};

struct Scene {
  std::vector<Obstacle> obstacles;
  Vec3 ap_position = Vec3::Zero();
  GridSpec grid;
  RfConfig rf;
};

/// Candidate probing/prediction locations: the lattice over grid.extent with
/// points strictly inside any footprint removed. Ordering is row-major from
/// the origin, x fastest: index = iy * nx + ix before pruning, compacted
/// after. The map recovers an index from lattice coordinates.
struct CandidateGrid {
  std::vector<Vec3> points;
  std::unordered_map<std::uint64_t, int> index_map;  // packed (ix, iy) -> index
  int nx = 0;
  int ny = 0;

  static std::uint64_t pack(int ix, int iy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) |
           static_cast<std::uint32_t>(iy);
  }

  int size() const { return static_cast<int>(points.size()); }

  /// Index of the candidate at lattice cell (ix, iy), or -1 if pruned.
  int index_of(int ix, int iy) const {
    const auto it = index_map.find(pack(ix, iy));
    return it == index_map.end() ? -1 : it->second;
  }
};

/// One realization of the uncertain environment state: per-obstacle wall
/// permittivity and horizontal footprint shift. z components of shifts are
/// always zero; buildings slide on the ground plane, they do not levitate.
struct BetaDraw {
  std::vector<double> permittivities;  // one per obstacle, in [1.5, 30]
  std::vector<Vec2> shifts;            // one per obstacle, each |component| <= bound
  std::uint64_t seed = 0;
};

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& name) {
  const auto it = j.find(name);
  if (it == j.end()) fail("missing field: " + name);
  return *it;
}

inline double number(const nlohmann::json& j, const std::string& name) {
  const auto& f = field(j, name);
  if (!f.is_number()) fail("invalid field: " + name);
  return f.get<double>();
}

inline Vec2 vec2(const nlohmann::json& j, const std::string& name) {
  const auto& f = field(j, name);
  if (!f.is_array() || f.size() != 2 || !f[0].is_number() || !f[1].is_number())
    fail("invalid field: " + name);
  return {f[0].get<double>(), f[1].get<double>()};
}

inline Vec3 vec3(const nlohmann::json& j, const std::string& name) {
  const auto& f = field(j, name);
  if (!f.is_array() || f.size() != 3) fail("invalid field: " + name);
  for (const auto& c : f)
    if (!c.is_number()) fail("invalid field: " + name);
  return {f[0].get<double>(), f[1].get<double>(), f[2].get<double>()};
}

}  // namespace detail

inline Scene parse_scene(const nlohmann::json& j) {
  using detail::field;
  using detail::number;
  Scene s;
  s.ap_position = detail::vec3(j, "ap_position");

  const auto& grid = field(j, "grid");
  s.grid.origin = detail::vec2(grid, "origin");
  s.grid.extent = detail::vec2(grid, "extent");
  s.grid.spacing = number(grid, "spacing");
  s.grid.height = number(grid, "height");
  require(s.grid.spacing > 0.0, "invalid field: grid.spacing");
  require(s.grid.extent.x() >= 0.0 && s.grid.extent.y() >= 0.0, "invalid field: grid.extent");

  const auto& rf = field(j, "rf");
  s.rf.carrier_hz = number(rf, "carrier_hz");
  s.rf.bandwidth_hz = number(rf, "bandwidth_hz");
  s.rf.subcarrier_spacing_hz = number(rf, "subcarrier_spacing_hz");
  require(s.rf.carrier_hz > 0.0, "invalid field: rf.carrier_hz");
  require(s.rf.subcarrier_spacing_hz > 0.0, "invalid field: rf.subcarrier_spacing_hz");
  require(s.rf.bandwidth_hz >= 0.0, "invalid field: rf.bandwidth_hz");
  const double ratio = s.rf.bandwidth_hz / s.rf.subcarrier_spacing_hz;
  const double rounded = std::round(ratio);
  require(std::abs(ratio - rounded) <= 1e-6 * std::max(1.0, ratio),
          "rf grid inconsistency: bandwidth is not a multiple of subcarrier spacing");
  s.rf.n_subcarriers = static_cast<int>(rounded) + 1;
  if (rf.contains("n_subcarriers")) {
    require(rf["n_subcarriers"].is_number_integer() &&
                rf["n_subcarriers"].get<int>() == s.rf.n_subcarriers,
            "rf grid inconsistency: n_subcarriers does not match bandwidth / spacing + 1");
  }

  const auto& obstacles = field(j, "obstacles");
  require(obstacles.is_array(), "invalid field: obstacles");
  for (const auto& jo : obstacles) {
    Obstacle o;
    const auto& fp = field(jo, "footprint");
    require(fp.is_array() && fp.size() >= 3, "invalid footprint: fewer than 3 vertices");
    for (const auto& v : fp) {
      require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
              "invalid footprint: vertex is not [x, y]");
      o.footprint.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
    require(o.footprint.area() > 0.0, "invalid footprint: zero area");
    o.height = detail::number(jo, "height");
    o.permittivity = detail::number(jo, "permittivity");
    require(o.height > 0.0, "invalid field: obstacle height");
    require(o.permittivity >= 1.0, "invalid field: obstacle permittivity");
    s.obstacles.push_back(std::move(o));
  }

  for (const auto& o : s.obstacles) {
    if (o.footprint.contains(s.ap_position.head<2>()) && s.ap_position.z() < o.height)
      fail("ap inside obstacle");
  }
  return s;
}

inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open scene file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("scene parse error: " + std::string(e.what()));
  }
  return parse_scene(j);
}

/// Lattice construction with pruning. Points strictly inside a nominal
/// footprint are removed; boundary points are kept. Throws if nothing
/// survives.
inline CandidateGrid build_grid(const Scene& s) {
  CandidateGrid g;
  g.nx = static_cast<int>(std::floor(s.grid.extent.x() / s.grid.spacing + 1e-9)) + 1;
  g.ny = static_cast<int>(std::floor(s.grid.extent.y() / s.grid.spacing + 1e-9)) + 1;
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const Vec2 p = s.grid.origin + s.grid.spacing * Vec2(ix, iy);
      bool pruned = false;
      for (const auto& o : s.obstacles) {
        if (o.footprint.contains(p)) {
          pruned = true;
          break;
        }
      }
      if (pruned) continue;
      g.index_map.emplace(CandidateGrid::pack(ix, iy), g.size());
      g.points.emplace_back(p.x(), p.y(), s.grid.height);
    }
  }
  require(!g.points.empty(), "empty grid");
  return g;
}

/// Draws one environment state: per obstacle, permittivity ~ U(1.5, 30) and
/// a horizontal shift with both components ~ U(-pos_bound, pos_bound), in
/// obstacle order, permittivity before shift. Equal seeds reproduce the draw
/// exactly.
inline BetaDraw sample_beta(const Scene& s, std::uint64_t seed, double pos_bound) {
  require(pos_bound >= 0.0, "sample_beta: negative pos_bound");
  BetaDraw b;
  b.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    b.permittivities.push_back(rng.uniform(1.5, 30.0));
    const double dx = rng.uniform(-pos_bound, pos_bound);
    const double dy = rng.uniform(-pos_bound, pos_bound);
    b.shifts.emplace_back(dx, dy);
  }
  return b;
}

/// The nominal state: blueprint permittivities, no shifts.
inline BetaDraw nominal_beta(const Scene& s) {
  BetaDraw b;
  for (const auto& o : s.obstacles) {
    b.permittivities.push_back(o.permittivity);
    b.shifts.emplace_back(0.0, 0.0);
  }
  return b;
}

/// Obstacle prisms under the given draw's footprint shifts.
inline std::vector<geom::Prism> shifted_prisms(const Scene& s, const BetaDraw& b) {
  require(b.permittivities.size() == s.obstacles.size() &&
              b.shifts.size() == s.obstacles.size(),
          "beta draw does not match scene obstacle count");
  std::vector<geom::Prism> out;
  out.reserve(s.obstacles.size());
  for (std::size_t i = 0; i < s.obstacles.size(); ++i)
    out.push_back({s.obstacles[i].footprint.shifted(b.shifts[i]), s.obstacles[i].height});
  return out;
}

}  // namespace twinmap::scene
