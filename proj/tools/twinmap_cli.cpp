// twinmap: digital-twin-assisted channel statistics mapping.
//
//   twinmap run <config.json> [--out DIR]
//   twinmap trace --scene S --seed N [--rx "x,y,z"] --out FILE
//   twinmap prior --scene S --out STEM [options]
//   twinmap select --prior STEM --k N [--noise VAR] --out FILE
//   twinmap predict --prior STEM --plan FILE --target FILE [--noise VAR] --out FILE

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "twinmap/twinmap.hpp"

namespace tw = twinmap;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override) {
  tw::harness::ExperimentConfig cfg = tw::harness::load_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  const auto res = tw::harness::run_experiment(cfg);
  std::printf("grid: %d candidates\n", res.grid_size);
  std::printf("records: %zu\n", res.records.size());
  for (const auto& name : res.output_files)
    std::printf("wrote %s\n", (std::string(cfg.output_dir) + "/" + name).c_str());
  return 0;
}

int cmd_trace(const std::string& scene_path, std::uint64_t seed, const std::string& rx,
              double pos_bound, int max_order, const std::string& out) {
  const auto sc = tw::scene::load_scene(scene_path);
  const auto beta = tw::scene::sample_beta(sc, seed, pos_bound);
  const auto freqs = tw::propagate::subcarrier_frequencies(sc.rf);
  tw::propagate::PowerMatrix pm;
  pm.beta_seed = seed;
  if (!rx.empty()) {
    const auto parts = tw::io::split(rx);
    tw::require(parts.size() == 3, "trace: --rx expects x,y,z");
    const tw::geom::Vec3 p(tw::io::parse_double(parts[0]), tw::io::parse_double(parts[1]),
                           tw::io::parse_double(parts[2]));
    pm.values = tw::propagate::channel_power_column(sc, beta, p, max_order);
    const auto paths = tw::propagate::trace_paths(sc, beta, p, max_order);
    std::printf("%zu paths at (%s)\n", paths.size(), rx.c_str());
  } else {
    const auto grid = tw::scene::build_grid(sc);
    pm = tw::propagate::channel_power_matrix(sc, grid, beta, max_order);
  }
  tw::io::write_power_csv(out, pm, freqs);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_prior(const std::string& scene_path, int k, double epsilon, std::uint64_t seed_base,
              double pos_bound, int max_order, double lambda, double jitter,
              const std::string& stem) {
  const auto sc = tw::scene::load_scene(scene_path);
  const auto grid = tw::scene::build_grid(sc);
  std::vector<tw::stats::QuantileDataset> draws(static_cast<std::size_t>(k));
  tw::parallel_for(draws.size(), [&](std::size_t i) {
    const auto beta =
        tw::scene::sample_beta(sc, seed_base + static_cast<std::uint64_t>(i), pos_bound);
    const auto pm = tw::propagate::channel_power_matrix(sc, grid, beta, max_order);
    draws[i] = tw::stats::build_dataset(pm, epsilon);
  });
  const auto prior = tw::prior::ensemble_prior(draws, lambda, jitter);
  nlohmann::json key;
  key["scene_hash"] = tw::io::file_hash(scene_path);
  key["epsilon"] = epsilon;
  key["ensemble_size"] = k;
  key["seed_base"] = seed_base;
  key["pos_bound"] = pos_bound;
  key["max_order"] = max_order;
  tw::io::save_prior(stem, prior, grid.points, key);
  std::printf("wrote %s.prior.json, %s.mean.csv, %s.cov.bin (m=%d)\n", stem.c_str(),
              stem.c_str(), stem.c_str(), prior.size());
  return 0;
}

int cmd_select(const std::string& stem, int k, double noise_var, const std::string& out) {
  const auto pf = tw::io::load_prior(stem);
  const Eigen::VectorXd noise = Eigen::VectorXd::Constant(pf.prior.size(), noise_var);
  const auto plan = tw::select::lazy_greedy_select(pf.prior, k, noise);
  tw::io::write_plan_csv(out, plan, pf.points);
  std::printf("wrote %s (%d picks, %ld gain evaluations)\n", out.c_str(), plan.budget,
              plan.gain_evaluations);
  return 0;
}

int cmd_predict(const std::string& stem, const std::string& plan_path,
                const std::string& target_path, double noise_var, const std::string& out) {
  const auto pf = tw::io::load_prior(stem);
  const auto plan = tw::io::read_plan_csv(plan_path);
  const auto target = tw::io::read_quantile_csv(target_path);
  tw::require(target.dataset.values.size() == pf.prior.mean.size(),
              "predict: target dataset does not match prior size");
  tw::gp::Observations obs;
  obs.indices = plan.chosen;
  obs.values.resize(static_cast<Eigen::Index>(plan.chosen.size()));
  for (std::size_t i = 0; i < plan.chosen.size(); ++i)
    obs.values[static_cast<Eigen::Index>(i)] = target.dataset.values[plan.chosen[i]];
  obs.noise = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(plan.chosen.size()), noise_var);
  const auto field =
      tw::gp::posterior(pf.prior, obs, tw::gp::all_targets(pf.prior.size()));
  tw::io::write_posterior_csv(out, field, pf.points);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"digital-twin channel statistics mapping"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  auto* run = app.add_subcommand("run", "run a full experiment from a config file");
  run->add_option("config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_override, "override the config output directory");

  std::string scene_path, rx, out;
  std::uint64_t seed = 0;
  double pos_bound = 2.0, epsilon = 0.05, lambda = 0.05, jitter = -1.0, noise_var = 0.0;
  int max_order = 2, k = 50;
  auto* trace = app.add_subcommand("trace", "trace one environment draw to a power matrix");
  trace->add_option("--scene", scene_path, "scene JSON")->required();
  trace->add_option("--seed", seed, "environment draw seed")->required();
  trace->add_option("--rx", rx, "single receiver \"x,y,z\" (default: full grid)");
  trace->add_option("--pos-bound", pos_bound, "footprint shift bound, meters");
  trace->add_option("--max-order", max_order, "reflection order cap");
  trace->add_option("--out", out, "output CSV")->required();

  auto* prior = app.add_subcommand("prior", "build and cache an ensemble prior");
  prior->add_option("--scene", scene_path, "scene JSON")->required();
  prior->add_option("--k", k, "ensemble size");
  prior->add_option("--epsilon", epsilon, "outage quantile level");
  prior->add_option("--seed-base", seed, "first ensemble seed")->default_val(1000000);
  prior->add_option("--pos-bound", pos_bound, "footprint shift bound, meters");
  prior->add_option("--max-order", max_order, "reflection order cap");
  prior->add_option("--lambda", lambda, "shrinkage weight");
  prior->add_option("--jitter", jitter, "diagonal jitter (negative: automatic)");
  prior->add_option("--out", out, "cache stem path")->required();

  std::string prior_stem, plan_path, target_path;
  auto* select = app.add_subcommand("select", "greedy probing plan from a cached prior");
  select->add_option("--prior", prior_stem, "prior cache stem")->required();
  select->add_option("--k", k, "probing budget")->required();
  select->add_option("--noise", noise_var, "observation noise variance");
  select->add_option("--out", out, "plan CSV")->required();

  auto* predict = app.add_subcommand("predict", "GP posterior from plan + measurements");
  predict->add_option("--prior", prior_stem, "prior cache stem")->required();
  predict->add_option("--plan", plan_path, "plan CSV")->required();
  predict->add_option("--target", target_path, "measured quantile dataset CSV")->required();
  predict->add_option("--noise", noise_var, "observation noise variance");
  predict->add_option("--out", out, "posterior CSV")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, out_override);
    if (trace->parsed()) return cmd_trace(scene_path, seed, rx, pos_bound, max_order, out);
    if (prior->parsed())
      return cmd_prior(scene_path, k, epsilon, seed, pos_bound, max_order, lambda, jitter, out);
    if (select->parsed()) return cmd_select(prior_stem, k, noise_var, out);
    if (predict->parsed())
      return cmd_predict(prior_stem, plan_path, target_path, noise_var, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
