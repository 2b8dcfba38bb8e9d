#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinmap/common.hpp"
#include "twinmap/gp.hpp"
#include "twinmap/io.hpp"
#include "twinmap/parallel.hpp"
#include "twinmap/prior.hpp"
#include "twinmap/propagate.hpp"
#include "twinmap/scene.hpp"
#include "twinmap/select.hpp"
#include "twinmap/stats.hpp"
#include "twinmap/urllc.hpp"

namespace twinmap::harness {

inline constexpr const char* kSchemeProposed = "proposed";
inline constexpr const char* kSchemeUninformed = "uninformed";
inline constexpr const char* kSchemeStationaryDt = "stationary_dt";

struct ExperimentConfig {
  std::string scene_path;
  std::string output_dir = "out";
  double epsilon = 0.05;
  double delta = 0.05;
  int ensemble_size = 50;
  std::vector<int> budgets = {5, 10, 15, 20, 25, 30, 35, 40, 45};
  std::vector<std::string> schemes = {kSchemeProposed, kSchemeUninformed, kSchemeStationaryDt};
  std::vector<std::uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                      11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  double noise_variance = 0.01;
  double pos_bound = 2.0;
  int max_order = 2;
  double ptx_over_noise = 1.0;
  std::uint64_t prior_seed_base = 1000000;
  double shrinkage = 0.05;
  double jitter = -1.0;  // negative: automatic
  double matern_smoothness = 1.5;
};

inline void validate(const ExperimentConfig& c) {
  require(!c.scene_path.empty(), "config: empty scene path");
  require(c.epsilon > 0.0 && c.epsilon < 1.0, "config: epsilon outside (0, 1)");
  require(c.delta > 0.0 && c.delta < 1.0, "config: delta outside (0, 1)");
  require(c.ensemble_size >= 2, "config: ensemble_size below 2");
  require(!c.budgets.empty(), "config: no budgets");
  for (std::size_t i = 0; i < c.budgets.size(); ++i) {
    require(c.budgets[i] >= 0, "config: negative budget");  // 0 = prior-only cell
    require(i == 0 || c.budgets[i] > c.budgets[i - 1],
            "config: budgets must be strictly increasing");
  }
  require(!c.schemes.empty(), "config: no schemes");
  for (std::size_t i = 0; i < c.schemes.size(); ++i) {
    const auto& s = c.schemes[i];
    require(s == kSchemeProposed || s == kSchemeUninformed || s == kSchemeStationaryDt,
            "config: unknown scheme: " + s);
    for (std::size_t j = 0; j < i; ++j)
      require(c.schemes[j] != s, "config: duplicate scheme: " + s);
  }
  require(!c.seeds.empty(), "config: no seeds");
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      require(c.seeds[j] != c.seeds[i], "config: duplicate seed");
    require(c.seeds[i] < c.prior_seed_base ||
                c.seeds[i] >= c.prior_seed_base + static_cast<std::uint64_t>(c.ensemble_size),
            "config: target seed collides with the prior seed range");
  }
  require(c.noise_variance >= 0.0, "config: negative noise_variance");
  require(c.pos_bound >= 0.0, "config: negative pos_bound");
  require(c.max_order >= 0 && c.max_order <= 3, "config: max_order outside [0, 3]");
  require(c.ptx_over_noise > 0.0, "config: nonpositive ptx_over_noise");
  require(c.shrinkage >= 0.0 && c.shrinkage <= 1.0, "config: shrinkage outside [0, 1]");
}

/// Reads a config JSON. Every key except "scene" has a desk-scale default.
/// A relative scene path is resolved against the config file's directory, so
/// configs can travel with their scenes.
inline ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  {
    auto f = io::open_in(path);
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      fail("config parse error: " + std::string(e.what()));
    }
  }
  ExperimentConfig c;
  require(j.contains("scene"), "missing field: scene");
  c.scene_path = j["scene"].get<std::string>();
  if (std::filesystem::path(c.scene_path).is_relative())
    c.scene_path = (std::filesystem::path(path).parent_path() / c.scene_path).string();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
  if (j.contains("delta")) c.delta = j["delta"].get<double>();
  if (j.contains("ensemble_size")) c.ensemble_size = j["ensemble_size"].get<int>();
  if (j.contains("budgets")) c.budgets = j["budgets"].get<std::vector<int>>();
  if (j.contains("schemes")) c.schemes = j["schemes"].get<std::vector<std::string>>();
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("noise_variance")) c.noise_variance = j["noise_variance"].get<double>();
  if (j.contains("pos_bound")) c.pos_bound = j["pos_bound"].get<double>();
  if (j.contains("max_order")) c.max_order = j["max_order"].get<int>();
  if (j.contains("ptx_over_noise")) c.ptx_over_noise = j["ptx_over_noise"].get<double>();
  if (j.contains("prior_seed_base")) c.prior_seed_base = j["prior_seed_base"].get<std::uint64_t>();
  if (j.contains("shrinkage")) c.shrinkage = j["shrinkage"].get<double>();
  if (j.contains("jitter")) c.jitter = j["jitter"].get<double>();
  if (j.contains("matern_smoothness")) c.matern_smoothness = j["matern_smoothness"].get<double>();
  validate(c);
  return c;
}

struct MetricsRecord {
  std::string scheme;
  int budget = 0;
  std::uint64_t seed = 0;
  double mae = 0.0;
  double meta_probability = 0.0;
  std::vector<double> normalized_rates;  // finite entries only
  long anomalies = 0;                    // positive rate over zero ideal, excluded above
  double wall_time_s = 0.0;              // in-memory diagnostic, never written to outputs
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;  // ordered by (scheme, budget, seed) config order
  std::vector<std::string> output_files;
  std::string manifest_path;
  int grid_size = 0;
};

inline double mae(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size() && a.size() > 0, "mae: size mismatch");
  return (a - b).cwiseAbs().mean();
}

/// Empirical CDF support points: ascending values with cumulative fraction,
/// duplicates collapsed to their last (highest) fraction.
inline std::vector<std::pair<double, double>> rate_cdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double frac = static_cast<double>(i + 1) / n;
    if (!out.empty() && out.back().first == samples[i])
      out.back().second = frac;
    else
      out.emplace_back(samples[i], frac);
  }
  return out;
}

namespace detail {

inline const std::uint64_t kNoiseTag = fnv1a64("measurement-noise");
inline const std::uint64_t kUninformedPlanTag = fnv1a64("uninformed-plan");

struct Cell {
  gp::PosteriorField field;
  MetricsRecord record;
};

/// Prediction-time prior for one (scheme, budget, seed) cell.
inline prior::GpPrior prediction_prior(const std::string& scheme,
                                       const ExperimentConfig& cfg,
                                       const scene::CandidateGrid& grid,
                                       const prior::GpPrior& ensemble,
                                       const prior::GpPrior& stationary,
                                       const std::vector<int>& a,
                                       const Eigen::VectorXd& y) {
  const auto m = static_cast<Eigen::Index>(grid.points.size());
  if (scheme == kSchemeProposed) return ensemble;

  std::vector<geom::Vec3> xs;
  xs.reserve(a.size());
  for (const int i : a) xs.push_back(grid.points[static_cast<std::size_t>(i)]);

  prior::GpPrior p;
  if (scheme == kSchemeUninformed) {
    p.kind = prior::PriorKind::MaternMle;
    p.mean = Eigen::VectorXd::Zero(m);
    prior::MaternParams mp{1.0, 20.0, cfg.matern_smoothness};
    if (a.size() >= 3) {
      const auto fit =
          prior::fit_matern_mle(xs, y, cfg.noise_variance, cfg.matern_smoothness);
      if (!fit.degenerate) mp = fit.params;
    }
    const double jitter = 1e-8 * mp.signal_variance;
    p.cov = prior::matern_gram(grid.points, mp);
    p.cov.diagonal().array() += jitter;
    p.reg = {0.0, jitter};
    return p;
  }

  // stationary_dt: keep the twin-draw trend, refit the residual kernel to
  // what was actually measured once enough probes exist.
  p = stationary;
  if (a.size() >= 3) {
    Eigen::VectorXd resid(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      resid[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(i)] - stationary.mean[a[i]];
    const auto fit = prior::fit_matern_mle(xs, resid, cfg.noise_variance, cfg.matern_smoothness);
    if (!fit.degenerate) {
      const double jitter = 1e-8 * fit.params.signal_variance;
      p.cov = prior::matern_gram(grid.points, fit.params);
      p.cov.diagonal().array() += jitter;
      p.reg = {0.0, jitter};
    }
  }
  return p;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

/// Full study: build the ensemble prior and probing plans, then for every
/// (scheme, budget, seed) cell measure, predict, select rates, and score.
/// All randomness flows from the config seeds, every parallel loop writes
/// disjoint slots, and no output contains a timestamp, so reruns of the same
/// config produce byte-identical files.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const scene::Scene sc = scene::load_scene(cfg.scene_path);
  const scene::CandidateGrid grid = scene::build_grid(sc);
  const int m = grid.size();
  const int k_max = cfg.budgets.back();
  require(k_max <= m, "config: budget exceeds candidate count");

  // Twin ensemble, one dataset per draw; matrices are transient.
  std::vector<stats::QuantileDataset> ensemble_draws(
      static_cast<std::size_t>(cfg.ensemble_size));
  parallel_for(ensemble_draws.size(), [&](std::size_t i) {
    const auto beta = scene::sample_beta(
        sc, cfg.prior_seed_base + static_cast<std::uint64_t>(i), cfg.pos_bound);
    const auto pm = propagate::channel_power_matrix(sc, grid, beta, cfg.max_order);
    ensemble_draws[i] = stats::build_dataset(pm, cfg.epsilon);
  });

  const prior::GpPrior ensemble = prior::ensemble_prior(ensemble_draws, cfg.shrinkage, cfg.jitter);
  const prior::GpPrior stationary = prior::stationary_dt_prior(
      ensemble_draws.front(), grid, sc.ap_position, cfg.noise_variance, cfg.matern_smoothness);

  const Eigen::VectorXd noise_diag = Eigen::VectorXd::Constant(m, cfg.noise_variance);
  std::map<std::string, select::ProbePlan> shared_plans;
  for (const auto& scheme : cfg.schemes) {
    if (scheme == kSchemeProposed)
      shared_plans[scheme] = select::lazy_greedy_select(ensemble, k_max, noise_diag);
    else if (scheme == kSchemeStationaryDt)
      shared_plans[scheme] = select::lazy_greedy_select(stationary, k_max, noise_diag);
  }

  const auto n_schemes = cfg.schemes.size();
  const auto n_budgets = cfg.budgets.size();
  const auto n_seeds = cfg.seeds.size();
  const auto cell_at = [&](std::size_t si, std::size_t bi, std::size_t ti) {
    return (si * n_budgets + bi) * n_seeds + ti;
  };
  std::vector<detail::Cell> cells(n_schemes * n_budgets * n_seeds);
  std::vector<select::ProbePlan> first_seed_uninformed(1);

  parallel_for(n_seeds, [&](std::size_t ti) {
    const std::uint64_t seed = cfg.seeds[ti];
    const auto beta = scene::sample_beta(sc, seed, cfg.pos_bound);
    const auto pm = propagate::channel_power_matrix(sc, grid, beta, cfg.max_order);
    Eigen::VectorXd true_quantile(m);
    for (int i = 0; i < m; ++i)
      true_quantile[i] = stats::empirical_quantile(pm.values.col(i), cfg.epsilon);
    Eigen::VectorXd truth(m);  // log-quantile field, the regression target
    for (int i = 0; i < m; ++i)
      truth[i] = std::log(std::max(true_quantile[i], kPowerFloor));
    Eigen::VectorXd ideal(m);
    for (int i = 0; i < m; ++i)
      ideal[i] = std::log2(1.0 + cfg.ptx_over_noise * true_quantile[i]);

    // One noise value per location per seed, shared by every scheme and
    // budget that probes that location.
    Eigen::VectorXd meas_noise(m);
    {
      Rng rng(mix_seed(seed, detail::kNoiseTag));
      const double sd = std::sqrt(cfg.noise_variance);
      for (int i = 0; i < m; ++i) meas_noise[i] = sd * rng.gaussian();
    }

    const auto targets = gp::all_targets(m);
    for (std::size_t si = 0; si < n_schemes; ++si) {
      const auto& scheme = cfg.schemes[si];
      select::ProbePlan plan;
      if (scheme == kSchemeUninformed) {
        plan = select::random_select(m, k_max, mix_seed(seed, detail::kUninformedPlanTag));
        if (ti == 0) first_seed_uninformed[0] = plan;
      } else {
        plan = shared_plans.at(scheme);
      }

      for (std::size_t bi = 0; bi < n_budgets; ++bi) {
        const auto t0 = std::chrono::steady_clock::now();
        const int k = cfg.budgets[static_cast<std::size_t>(bi)];
        const std::vector<int> a(plan.chosen.begin(), plan.chosen.begin() + k);
        Eigen::VectorXd y(k);
        for (int i = 0; i < k; ++i)
          y[i] = truth[a[static_cast<std::size_t>(i)]] + meas_noise[a[static_cast<std::size_t>(i)]];

        const prior::GpPrior pred_prior =
            detail::prediction_prior(scheme, cfg, grid, ensemble, stationary, a, y);
        gp::Observations obs{a, y, Eigen::VectorXd::Constant(k, cfg.noise_variance)};
        gp::PosteriorField field = gp::posterior(pred_prior, obs, targets);

        MetricsRecord rec;
        rec.scheme = scheme;
        rec.budget = k;
        rec.seed = seed;
        rec.mae = mae(field.mean, truth);
        std::vector<urllc::RateDecision> decisions;
        decisions.reserve(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
          decisions.push_back(urllc::rate_select(field.mean[i], std::sqrt(field.variance[i]),
                                                 cfg.delta, cfg.ptx_over_noise, i));
        rec.meta_probability =
            urllc::meta_probability(decisions, true_quantile, cfg.ptx_over_noise);
        for (int i = 0; i < m; ++i) {
          const double nr = urllc::normalized_rate(decisions[static_cast<std::size_t>(i)].rate,
                                                   ideal[i]);
          if (std::isfinite(nr))
            rec.normalized_rates.push_back(nr);
          else
            ++rec.anomalies;
        }
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        auto& cell = cells[cell_at(si, bi, ti)];
        cell.record = std::move(rec);
        if (ti == 0) cell.field = std::move(field);
      }
    }
  });

  // Emission, fixed order throughout.
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  ExperimentResult res;
  res.grid_size = m;
  const auto outpath = [&](const std::string& name) {
    res.output_files.push_back(name);
    return (fs::path(cfg.output_dir) / name).string();
  };

  {
    auto f = io::open_out(outpath("mae.csv"));
    f << "scheme,budget,seed,mae,meta_probability\n";
    for (std::size_t si = 0; si < n_schemes; ++si)
      for (std::size_t bi = 0; bi < n_budgets; ++bi)
        for (std::size_t ti = 0; ti < n_seeds; ++ti) {
          const auto& r = cells[cell_at(si, bi, ti)].record;
          f << r.scheme << ',' << r.budget << ',' << r.seed << ','
            << io::format_double(r.mae) << ',' << io::format_double(r.meta_probability)
            << "\n";
        }
  }

  for (std::size_t bi = 0; bi < n_budgets; ++bi) {
    auto f = io::open_out(outpath("rate_cdf_" + std::to_string(cfg.budgets[bi]) + ".csv"));
    f << "scheme,value,cum_fraction\n";
    for (std::size_t si = 0; si < n_schemes; ++si) {
      std::vector<double> pooled;
      for (std::size_t ti = 0; ti < n_seeds; ++ti) {
        const auto& r = cells[cell_at(si, bi, ti)].record;
        pooled.insert(pooled.end(), r.normalized_rates.begin(), r.normalized_rates.end());
      }
      for (const auto& [v, frac] : rate_cdf(std::move(pooled)))
        f << cfg.schemes[si] << ',' << io::format_double(v) << ',' << io::format_double(frac)
          << "\n";
    }
  }

  for (std::size_t si = 0; si < n_schemes; ++si) {
    const auto& scheme = cfg.schemes[si];
    const select::ProbePlan& plan = (scheme == kSchemeUninformed)
                                        ? first_seed_uninformed[0]
                                        : shared_plans.at(scheme);
    io::write_plan_csv(outpath("plan_" + scheme + ".csv"), plan, grid.points);
    for (std::size_t bi = 0; bi < n_budgets; ++bi) {
      const auto& cell = cells[cell_at(si, bi, 0)];
      io::write_posterior_csv(
          outpath("posterior_" + scheme + "_" + std::to_string(cfg.budgets[bi]) + ".csv"),
          cell.field, grid.points);
    }
  }

  for (auto& cell : cells) res.records.push_back(std::move(cell.record));

  nlohmann::json manifest;
  manifest["grid_size"] = m;
  manifest["n_subcarriers"] = sc.rf.n_subcarriers;
  manifest["scene_hash"] = detail::hash_hex(io::file_hash(cfg.scene_path));
  nlohmann::json jc;
  jc["epsilon"] = cfg.epsilon;
  jc["delta"] = cfg.delta;
  jc["ensemble_size"] = cfg.ensemble_size;
  jc["budgets"] = cfg.budgets;
  jc["schemes"] = cfg.schemes;
  jc["seeds"] = cfg.seeds;
  jc["noise_variance"] = cfg.noise_variance;
  jc["pos_bound"] = cfg.pos_bound;
  jc["max_order"] = cfg.max_order;
  jc["ptx_over_noise"] = cfg.ptx_over_noise;
  jc["prior_seed_base"] = cfg.prior_seed_base;
  jc["shrinkage"] = cfg.shrinkage;
  jc["jitter"] = cfg.jitter;
  jc["matern_smoothness"] = cfg.matern_smoothness;
  manifest["config"] = jc;
  nlohmann::json anomalies;
  for (std::size_t si = 0; si < n_schemes; ++si) {
    long total = 0;
    for (std::size_t bi = 0; bi < n_budgets; ++bi)
      for (std::size_t ti = 0; ti < n_seeds; ++ti)
        total += res.records[cell_at(si, bi, ti)].anomalies;
    anomalies[cfg.schemes[si]] = total;
  }
  manifest["anomalies"] = anomalies;
  nlohmann::json hashes;
  for (const auto& name : res.output_files)
    hashes[name] = detail::hash_hex(io::file_hash((fs::path(cfg.output_dir) / name).string()));
  manifest["outputs"] = hashes;
  {
    res.manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();
    auto f = io::open_out(res.manifest_path);
    f << manifest.dump(2) << "\n";
    res.output_files.push_back("manifest.json");
  }
  return res;
}

}  // namespace twinmap::harness
