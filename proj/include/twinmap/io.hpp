#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinmap/common.hpp"
#include "twinmap/gp.hpp"
#include "twinmap/prior.hpp"
#include "twinmap/propagate.hpp"
#include "twinmap/scene.hpp"
#include "twinmap/select.hpp"
#include "twinmap/stats.hpp"

namespace twinmap::io {

using geom::Vec3;

/// Shortest round-trip decimal form (std::to_chars). Every number in every
/// CSV goes through this, so rereading a file reproduces the doubles bit for
/// bit and byte-identical reruns are meaningful.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  require(res.ec == std::errc(), "format_double: conversion failure");
  return {buf, res.ptr};
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          "csv: bad number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          "csv: bad integer '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: no CRLF translation anywhere
  require(f.good(), "cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open for reading: " + path);
  return f;
}

inline std::string read_file(const std::string& path) {
  auto f = open_in(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

// --- quantile datasets ----------------------------------------------------

inline void write_quantile_csv(const std::string& path, const stats::QuantileDataset& ds,
                               const std::vector<Vec3>& points) {
  require(ds.values.size() == static_cast<Eigen::Index>(points.size()),
          "quantile csv: dataset/grid size mismatch");
  auto f = open_out(path);
  f << "# epsilon=" << format_double(ds.epsilon) << " source_seed=" << ds.source_seed << "\n";
  f << "index,x,y,z,q\n";
  for (Eigen::Index i = 0; i < ds.values.size(); ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    f << i << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
      << format_double(p.z()) << ',' << format_double(ds.values[i]) << "\n";
  }
}

struct QuantileFile {
  stats::QuantileDataset dataset;
  std::vector<Vec3> points;
};

inline QuantileFile read_quantile_csv(const std::string& path) {
  auto f = open_in(path);
  QuantileFile out;
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), "quantile csv: empty file");
  require(line.rfind("# epsilon=", 0) == 0, "quantile csv: missing metadata line");
  {
    const auto fields = split(line.substr(2), ' ');
    require(fields.size() == 2, "quantile csv: malformed metadata line");
    out.dataset.epsilon = parse_double(split(fields[0], '=').at(1));
    out.dataset.source_seed = parse_u64(split(fields[1], '=').at(1));
  }
  require(static_cast<bool>(std::getline(f, line)) && line == "index,x,y,z,q",
          "quantile csv: bad header");
  std::vector<double> q;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    require(c.size() == 5, "quantile csv: bad row");
    require(parse_u64(c[0]) == q.size(), "quantile csv: rows out of order");
    out.points.emplace_back(parse_double(c[1]), parse_double(c[2]), parse_double(c[3]));
    q.push_back(parse_double(c[4]));
  }
  require(!q.empty(), "quantile csv: no rows");
  out.dataset.values = Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
  return out;
}

// --- posterior fields -----------------------------------------------------

inline void write_posterior_csv(const std::string& path, const gp::PosteriorField& field,
                                const std::vector<Vec3>& points) {
  auto f = open_out(path);
  f << "index,x,y,mean,variance,observed_flag\n";
  std::vector<char> observed(points.size(), 0);
  for (const int i : field.plan.indices) observed[static_cast<std::size_t>(i)] = 1;
  for (std::size_t j = 0; j < field.targets.size(); ++j) {
    const int t = field.targets[j];
    const auto& p = points[static_cast<std::size_t>(t)];
    f << t << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
      << format_double(field.mean[static_cast<Eigen::Index>(j)]) << ','
      << format_double(field.variance[static_cast<Eigen::Index>(j)]) << ','
      << int(observed[static_cast<std::size_t>(t)]) << "\n";
  }
}

// --- probe plans ------------------------------------------------------------

inline void write_plan_csv(const std::string& path, const select::ProbePlan& plan,
                           const std::vector<Vec3>& points) {
  auto f = open_out(path);
  f << "step,index,x,y,gain\n";
  for (std::size_t s = 0; s < plan.chosen.size(); ++s) {
    const int i = plan.chosen[s];
    const auto& p = points[static_cast<std::size_t>(i)];
    f << s << ',' << i << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
      << format_double(plan.gains[s]) << "\n";
  }
}

inline select::ProbePlan read_plan_csv(const std::string& path) {
  auto f = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)) && line == "step,index,x,y,gain",
          "plan csv: bad header");
  select::ProbePlan plan;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    require(c.size() == 5, "plan csv: bad row");
    require(parse_u64(c[0]) == plan.chosen.size(), "plan csv: steps out of order");
    plan.chosen.push_back(static_cast<int>(parse_u64(c[1])));
    plan.gains.push_back(parse_double(c[4]));
  }
  plan.budget = static_cast<int>(plan.chosen.size());
  return plan;
}

// --- power matrices ---------------------------------------------------------

inline void write_power_csv(const std::string& path, const propagate::PowerMatrix& pm,
                            const std::vector<double>& freqs) {
  require(static_cast<Eigen::Index>(freqs.size()) == pm.values.rows(),
          "power csv: frequency count mismatch");
  auto f = open_out(path);
  f << "# beta_seed=" << pm.beta_seed << "\n";
  f << "freq_hz";
  for (Eigen::Index m = 0; m < pm.values.cols(); ++m) f << ",p" << m;
  f << "\n";
  for (Eigen::Index n = 0; n < pm.values.rows(); ++n) {
    f << format_double(freqs[static_cast<std::size_t>(n)]);
    for (Eigen::Index m = 0; m < pm.values.cols(); ++m)
      f << ',' << format_double(pm.values(n, m));
    f << "\n";
  }
}

// --- prior cache ------------------------------------------------------------

inline std::string prior_kind_name(prior::PriorKind k) {
  switch (k) {
    case prior::PriorKind::Ensemble: return "ensemble";
    case prior::PriorKind::MaternMle: return "matern_mle";
    case prior::PriorKind::StationaryDt: return "stationary_dt";
  }
  fail("unknown prior kind");
}

inline prior::PriorKind prior_kind_from_name(const std::string& s) {
  if (s == "ensemble") return prior::PriorKind::Ensemble;
  if (s == "matern_mle") return prior::PriorKind::MaternMle;
  if (s == "stationary_dt") return prior::PriorKind::StationaryDt;
  fail("unknown prior kind: " + s);
}

/// Prior cache = <stem>.prior.json (metadata) + <stem>.mean.csv (mean with
/// coordinates) + <stem>.cov.bin (magic, count, column-major doubles,
/// little-endian host layout).
inline void save_prior(const std::string& stem, const prior::GpPrior& p,
                       const std::vector<Vec3>& points, const nlohmann::json& key = {}) {
  require(p.mean.size() == static_cast<Eigen::Index>(points.size()),
          "prior cache: prior/grid size mismatch");
  nlohmann::json meta;
  meta["kind"] = prior_kind_name(p.kind);
  meta["lambda"] = p.reg.lambda;
  meta["jitter"] = p.reg.jitter;
  meta["m"] = p.size();
  meta["key"] = key;
  {
    auto f = open_out(stem + ".prior.json");
    f << meta.dump(2) << "\n";
  }
  {
    auto f = open_out(stem + ".mean.csv");
    f << "index,x,y,z,mean\n";
    for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
      const auto& pt = points[static_cast<std::size_t>(i)];
      f << i << ',' << format_double(pt.x()) << ',' << format_double(pt.y()) << ','
        << format_double(pt.z()) << ',' << format_double(p.mean[i]) << "\n";
    }
  }
  {
    auto f = open_out(stem + ".cov.bin");
    const char magic[8] = {'T', 'W', 'I', 'N', 'C', 'O', 'V', '1'};
    f.write(magic, 8);
    const auto m = static_cast<std::uint64_t>(p.size());
    f.write(reinterpret_cast<const char*>(&m), 8);
    f.write(reinterpret_cast<const char*>(p.cov.data()),
            static_cast<std::streamsize>(sizeof(double)) * p.cov.size());
  }
}

struct PriorFile {
  prior::GpPrior prior;
  std::vector<Vec3> points;
  nlohmann::json key;
};

inline PriorFile load_prior(const std::string& stem) {
  PriorFile out;
  nlohmann::json meta;
  {
    auto f = open_in(stem + ".prior.json");
    try {
      f >> meta;
    } catch (const nlohmann::json::exception& e) {
      fail("prior cache: bad metadata: " + std::string(e.what()));
    }
  }
  for (const char* k : {"kind", "lambda", "jitter", "m"})
    require(meta.contains(k), std::string("prior cache: missing field: ") + k);
  out.prior.kind = prior_kind_from_name(meta["kind"].get<std::string>());
  out.prior.reg = {meta["lambda"].get<double>(), meta["jitter"].get<double>()};
  out.key = meta.value("key", nlohmann::json());
  const auto m = meta["m"].get<std::int64_t>();
  require(m > 0, "prior cache: nonpositive size");

  {
    auto f = open_in(stem + ".mean.csv");
    std::string line;
    require(static_cast<bool>(std::getline(f, line)) && line == "index,x,y,z,mean",
            "prior cache: bad mean header");
    std::vector<double> mean;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto c = split(line);
      require(c.size() == 5, "prior cache: bad mean row");
      require(parse_u64(c[0]) == mean.size(), "prior cache: mean rows out of order");
      out.points.emplace_back(parse_double(c[1]), parse_double(c[2]), parse_double(c[3]));
      mean.push_back(parse_double(c[4]));
    }
    require(static_cast<std::int64_t>(mean.size()) == m, "prior cache: mean size mismatch");
    out.prior.mean =
        Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  }
  {
    auto f = open_in(stem + ".cov.bin");
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, "TWINCOV1", 8) == 0, "prior cache: bad cov magic");
    std::uint64_t mm = 0;
    f.read(reinterpret_cast<char*>(&mm), 8);
    require(f.good() && static_cast<std::int64_t>(mm) == m, "prior cache: cov size mismatch");
    out.prior.cov.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    f.read(reinterpret_cast<char*>(out.prior.cov.data()),
           static_cast<std::streamsize>(sizeof(double)) * out.prior.cov.size());
    require(f.good(), "prior cache: truncated covariance");
  }
  return out;
}

}  // namespace twinmap::io
