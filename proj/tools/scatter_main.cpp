// Command-line front end: forward simulation, reconstruction, coherence
// reports, bound evaluation, and the named experiment presets.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 numerical error.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "scatter/experiments.hpp"

namespace {

using namespace scatter;
using namespace scatter::experiments;

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  try {
    return read_json_file(path);
  } catch (const std::exception& e) {
    throw std::invalid_argument(e.what());
  }
}

VoxelGrid grid_from_json(const Json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("config: missing '") + key + "'");
  const Json& g = j.at(key);
  return build_grid(g.at("side_length").get<double>(), g.at("n_per_side").get<int>());
}

DirectionSet directions_from_json(const Json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("config: missing '") + key + "'");
  const Json& d = j.at(key);
  Coverage coverage = Coverage::FullSphere;
  if (d.contains("coverage")) {
    const std::string c = d.at("coverage").get<std::string>();
    if (c == "hemisphere")
      coverage = Coverage::Hemisphere;
    else if (c != "full")
      throw std::invalid_argument("config: coverage must be 'full' or 'hemisphere'");
  }
  return sphere_directions(d.at("count").get<int>(), coverage);
}

int born_order_from_json(const Json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kFullOrder;
    throw std::invalid_argument("config: born_order must be an integer >= 1 or \"inf\"");
  }
  const int m = v.get<int>();
  if (m < 1) throw std::invalid_argument("config: born_order must be an integer >= 1 or \"inf\"");
  return m;
}

double kernel_scale_from_json(const Json& j) {
  if (!j.contains("kernel")) return 1.0;
  const std::string k = j.at("kernel").get<std::string>();
  if (k == "standard") return 1.0;
  if (k == "unnormalized") return kUnnormalizedKernel;
  throw std::invalid_argument("config: kernel must be 'standard' or 'unnormalized'");
}

int cmd_forward(const std::string& config_path, const std::string& out_dir) {
  const Json cfg = load_config(config_path);
  const VoxelGrid grid = grid_from_json(cfg, "grid");
  const DirectionSet meas = directions_from_json(cfg, "measurement_directions");
  const DirectionSet src = directions_from_json(cfg, "source_directions");
  PotentialField pot = potential_field_from_json(cfg.at("potential"));
  const ComplexVector v = potential_diagonal(pot, grid);
  const ComplexMatrix a = assemble_measurement_matrix(grid, meas);
  const ComplexMatrix b = assemble_source_matrix(grid, src);
  const GammaView gamma(grid, kernel_scale_from_json(cfg));
  const int order = born_order_from_json(cfg, "born_order", kFullOrder);
  MeasurementMatrix y = order == kFullOrder ? forward_full(a, v, gamma, b)
                                            : forward_born(a, v, gamma, b, order);
  const double noise = cfg.value("noise_level", 0.0);
  const std::uint64_t seed = cfg.value("seed", 0ull);
  if (noise > 0.0) y = add_noise(y, noise, seed);
  ensure_out_dir(out_dir);
  std::vector<std::string> comments{"noise_level=" + format_double(y.noise_level)};
  if (y.seed) comments.push_back("seed=" + std::to_string(*y.seed));
  write_matrix_file(join_path(out_dir, cfg.value("output", std::string("measurements.txt"))), y.data,
                    comments);
  return 0;
}

int cmd_reconstruct(const std::string& config_path, const std::string& out_dir) {
  const Json cfg = load_config(config_path);
  const VoxelGrid grid = grid_from_json(cfg, "grid");
  const DirectionSet meas = directions_from_json(cfg, "measurement_directions");
  const DirectionSet src = directions_from_json(cfg, "source_directions");
  const ComplexMatrix y = read_matrix_file(cfg.at("data").get<std::string>());
  const ComplexMatrix a = assemble_measurement_matrix(grid, meas);
  const ComplexMatrix b = assemble_source_matrix(grid, src);
  const GammaView gamma(grid, kernel_scale_from_json(cfg));

  IHTConfig iht_cfg;
  iht_cfg.s_threshold = cfg.at("s_threshold").get<int>();
  iht_cfg.born_order = born_order_from_json(cfg, "born_order", 1);
  iht_cfg.max_iter = cfg.value("iterations", 100);
  if (cfg.contains("tol")) iht_cfg.tol = cfg.at("tol").get<double>();

  const NormalizedOperators ops = column_normalize(a, b);
  ComplexVector v_true;
  const ComplexVector* truth = nullptr;
  if (cfg.contains("ground_truth")) {
    PotentialField pot = potential_field_from_json(read_json_file(cfg.at("ground_truth").get<std::string>()));
    v_true = potential_diagonal(pot, grid);
    truth = &v_true;
  }
  const ReconstructionTrace trace = iht_cfg.born_order == kFullOrder
                                        ? tmatrix_iht(ops, gamma, y, iht_cfg, truth)
                                        : nonlinear_iht(ops, gamma, y, iht_cfg, truth);
  ensure_out_dir(out_dir);
  write_trace_csv_file(join_path(out_dir, "trace.csv"), trace);
  PotentialField rec;
  rec.grid_n_per_side = grid.n_per_side;
  rec.grid_side_length = grid.side_length;
  for (int j : support_of(trace.final_v)) {
    rec.support.push_back(j);
    rec.values.push_back(eta_from_potential(trace.final_v[j], grid));
  }
  write_json_file(join_path(out_dir, "reconstruction.json"), potential_field_json(rec));
  std::printf("iterations=%d final_y_err=%s\n", trace.iterations_used,
              format_double(trace.iterations.back().y_err).c_str());
  return 0;
}

int cmd_coherence(const std::string& config_path, const std::string& out_dir) {
  const Json cfg = load_config(config_path);
  const VoxelGrid grid = grid_from_json(cfg, "grid");
  const DirectionSet meas = directions_from_json(cfg, "measurement_directions");
  const ComplexMatrix a = assemble_measurement_matrix(grid, meas);

  CoherenceReport report;
  if (cfg.contains("potential")) {
    PotentialField pot = potential_field_from_json(cfg.at("potential"));
    const ComplexVector v = potential_diagonal(pot, grid);
    const GammaView gamma(grid, kernel_scale_from_json(cfg));
    const int order = born_order_from_json(cfg, "born_order", 2);
    report = linearized_coherence_numeric(a, v, gamma, order);
    const auto [delta, gamma1] = potential_gamma_norms(v, gamma);
    const int s = static_cast<int>(pot.support.size());
    const double mu_a = mutual_coherence(a).mu_exact;
    if (delta < 1.0) {
      const PerturbationBound pb = perturbation_coherence_bound(delta, s, mu_a);
      report.bound_chain.push_back({"perturbation_composed", pb.composed.value, pb.composed.clamped});
    }
  } else {
    report = mutual_coherence(a);
    report.bound_chain.push_back(
        {"farfield_analytic_estimate", farfield_coherence_analytic(grid.kh()), false});
  }
  ensure_out_dir(out_dir);
  write_json_file(join_path(out_dir, "coherence.json"), coherence_report_json(report));
  std::printf("mu_exact=%s\n", format_double(report.mu_exact).c_str());
  return 0;
}

int cmd_bounds(const std::string& config_path, const std::string& out_dir) {
  const Json cfg = load_config(config_path);
  BoundInputs in;
  in.mu_a = cfg.at("mu_a").get<double>();
  in.mu_b_star = cfg.at("mu_b_star").get<double>();
  in.s = cfg.at("s").get<int>();
  in.delta = cfg.value("delta", 0.0);
  in.gamma = cfg.value("gamma", 0.0);
  in.delta_n_const = cfg.value("delta_n", in.delta);
  in.gamma_n_const = cfg.value("gamma_n", in.gamma);
  in.v_inf = cfg.value("v_inf", 0.0);
  in.v0_err = cfg.value("v0_err", 0.0);
  in.noise_term = cfg.value("noise_term", 0.0);
  in.iterations = cfg.value("iterations", 100);

  ensure_out_dir(out_dir);
  Json constants;
  const struct {
    const char* name;
    BoundTrace trace;
  } all[] = {{"linear", linear_bound(in)},
             {"second_born", second_born_bound(in)},
             {"full_nonlinear", full_nonlinear_bound(in)}};
  for (const auto& entry : all) {
    std::ofstream os(join_path(out_dir, std::string("bound_") + entry.name + ".csv"));
    write_bound_trace_csv(os, entry.trace);
    constants[entry.name] = {{"guarantee", entry.trace.guarantee},
                             {"rho_first", entry.trace.rho_n.front()},
                             {"floor", entry.trace.floor_value}};
  }
  if (cfg.contains("delta_2s") && cfg.contains("gamma_2")) {
    const RipConstants rip =
        rip_constants(cfg.at("delta_2s").get<double>(), cfg.at("gamma_2").get<double>(), in.v_inf);
    constants["rip"] = {{"alpha", rip.alpha}, {"beta", rip.beta}, {"C", rip.c}, {"converges", rip.converges}};
  }
  write_json_file(join_path(out_dir, "bound_constants.json"), constants);
  return 0;
}

int cmd_experiment(const std::string& name, const std::string& config_path, const std::string& out_dir,
                   std::uint64_t seed, bool seed_set, const std::string& scale) {
  const ScalePreset preset = preset_from_string(scale);
  const Json overrides = load_config(config_path);
  auto finish = [&](auto cfg, auto&& runner, auto&& writer) {
    cfg.apply_json(overrides);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.master_seed = seed;
    auto result = runner(cfg);
    writer(result, cfg);
    return 0;
  };
  if (name == "coherence_vs_directions") {
    auto cfg = CoherenceVsDirectionsConfig::preset(preset);
    cfg.apply_json(overrides);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    write_coherence_vs_directions(run_coherence_vs_directions(cfg), cfg);
    return 0;
  }
  if (name == "single_scatterer_curves") {
    auto cfg = SingleScattererCurvesConfig::preset(preset);
    cfg.apply_json(overrides);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    write_single_scatterer_curves(run_single_scatterer_curves(cfg), cfg);
    return 0;
  }
  if (name == "coherence_vs_sparsity")
    return finish(CoherenceVsSparsityConfig::preset(preset), run_coherence_vs_sparsity,
                  write_coherence_vs_sparsity);
  if (name == "convergence1")
    return finish(ConvergenceComparisonConfig::preset_experiment1(), run_convergence_comparison,
                  write_convergence_comparison);
  if (name == "convergence2")
    return finish(ConvergenceComparisonConfig::preset_experiment2(), run_convergence_comparison,
                  write_convergence_comparison);
  if (name == "model1")
    return finish(ModelReconstructionConfig::preset_model1(preset), run_model_reconstruction,
                  write_model_reconstruction);
  if (name == "model2")
    return finish(ModelReconstructionConfig::preset_model2(preset), run_model_reconstruction,
                  write_model_reconstruction);
  if (name == "success_rate")
    return finish(SuccessRateConfig::preset(preset), run_success_rate, write_success_rate);
  throw std::invalid_argument("unknown experiment: " + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse inverse scattering via iterative hard thresholding"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", experiment_name, scale = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out-dir", out_dir, "output directory");
  };
  CLI::App* c_forward = app.add_subcommand("forward", "simulate far-field data");
  add_common(c_forward);
  CLI::App* c_reconstruct = app.add_subcommand("reconstruct", "run IHT on measured data");
  add_common(c_reconstruct);
  CLI::App* c_coherence = app.add_subcommand("coherence", "coherence report for a configuration");
  add_common(c_coherence);
  CLI::App* c_bounds = app.add_subcommand("bounds", "evaluate convergence guarantees");
  add_common(c_bounds);
  CLI::App* c_experiment = app.add_subcommand("experiment", "run a named experiment preset");
  c_experiment->add_option("name", experiment_name, "experiment id")->required();
  add_common(c_experiment);
  c_experiment->add_option("--seed", seed, "master seed")->each([&](const std::string&) { seed_set = true; });
  c_experiment->add_option("--scale", scale, "preset scale: desk or paper");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_forward->parsed()) return cmd_forward(config_path, out_dir);
    if (c_reconstruct->parsed()) return cmd_reconstruct(config_path, out_dir);
    if (c_coherence->parsed()) return cmd_coherence(config_path, out_dir);
    if (c_bounds->parsed()) return cmd_bounds(config_path, out_dir);
    if (c_experiment->parsed())
      return cmd_experiment(experiment_name, config_path, out_dir, seed, seed_set, scale);
  } catch (const scatter::singular_operator_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const scatter::divergence_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
