#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "scatter/experiments.hpp"

using namespace scatter;
using namespace scatter::experiments;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("coherence_vs_directions: single direction saturates, many approach sinc") {
  CoherenceVsDirectionsConfig cfg;
  cfg.grid = {1.5, 5};  // kh = 1.885 with only 125 voxels
  cfg.direction_counts = {1, 60, 240};
  const auto result = run_coherence_vs_directions(cfg);
  REQUIRE(result.rows.size() == 3);
  CHECK(result.rows[0].mu_exact == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(result.rows[2].mu_exact == doctest::Approx(result.rows[2].mu_analytic).epsilon(0.06));
  // more directions never increase the coherence beyond sampling noise
  CHECK(result.rows[2].mu_exact <= result.rows[1].mu_exact + 0.05);
}

TEST_CASE("single_scatterer_curves: maxima ordered by scattering strength") {
  SingleScattererCurvesConfig cfg;
  cfg.samples = 800;
  const auto result = run_single_scatterer_curves(cfg);
  REQUIRE(result.maxima.size() == 3);  // 0.05, 0.1, 0.2
  CHECK(result.maxima[0].value < result.maxima[1].value);
  CHECK(result.maxima[1].value < result.maxima[2].value);
  CHECK(result.maxima[1].value == doctest::Approx(0.540).epsilon(0.01));
  // the strong curve peaks nearer the scatterer than the weak curve
  CHECK(result.maxima[2].argmax_distance < result.maxima[0].argmax_distance);
}

TEST_CASE("coherence_vs_sparsity: s=0 collapses every curve to mu(A)") {
  CoherenceVsSparsityConfig cfg;
  cfg.grid = {1.5, 5};
  cfg.directions = 120;
  cfg.sparsity_list = {0, 1};
  cfg.realizations = 2;
  const auto result = run_coherence_vs_sparsity(cfg);
  for (const auto& row : result.rows) {
    if (row.s != 0) continue;
    CHECK(row.mu_second_mean == doctest::Approx(row.mu_linear).epsilon(1e-12));
    CHECK(row.mu_full_mean == doctest::Approx(row.mu_linear).epsilon(1e-12));
    CHECK(row.mu_second_std == 0.0);
  }
}

TEST_CASE("coherence_vs_sparsity trends on the reference grid") {
  CoherenceVsSparsityConfig cfg;  // side 3.0, 10^3, 500 directions
  cfg.sparsity_list = {1, 8};
  cfg.realizations = 4;
  cfg.master_seed = 5;
  const auto result = run_coherence_vs_sparsity(cfg);
  auto row = [&](const char* regime, int s) -> const CoherenceVsSparsityResult::Row& {
    for (const auto& r : result.rows)
      if (r.regime == regime && r.s == s) return r;
    throw std::out_of_range("row");
  };
  // single scatterer at eta 0.1 reproduces the known nonlinear coherence
  CHECK(row("fixed_eta", 1).mu_full_mean == doctest::Approx(0.539).epsilon(0.02));
  // fixed eta: adding scatterers raises the coherence of the linearized map
  CHECK(row("fixed_eta", 8).mu_full_mean > row("fixed_eta", 1).mu_full_mean);
  // fixed coupling: nonincreasing within the realization scatter
  CHECK(row("fixed_gamma1", 8).mu_full_mean <=
        row("fixed_gamma1", 1).mu_full_mean + 2.0 * row("fixed_gamma1", 8).mu_full_std + 0.01);
}

TEST_CASE("experiment outputs are byte-identical across runs") {
  TempDir dir_a("scatter_exp_a"), dir_b("scatter_exp_b");
  CoherenceVsSparsityConfig cfg;
  cfg.grid = {1.5, 5};
  cfg.directions = 80;
  cfg.sparsity_list = {1, 2};
  cfg.realizations = 3;
  cfg.master_seed = 99;
  cfg.out_dir = dir_a.path.string();
  write_coherence_vs_sparsity(run_coherence_vs_sparsity(cfg), cfg);
  cfg.out_dir = dir_b.path.string();
  write_coherence_vs_sparsity(run_coherence_vs_sparsity(cfg), cfg);
  CHECK(slurp((dir_a.path / "coherence_vs_sparsity.csv").string()) ==
        slurp((dir_b.path / "coherence_vs_sparsity.csv").string()));
  CHECK(slurp((dir_a.path / "coherence_vs_sparsity_manifest.json").string()) ==
        slurp((dir_b.path / "coherence_vs_sparsity_manifest.json").string()));
}

TEST_CASE("realization seeds never collide across streams") {
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < 200; ++r) seeds.push_back(realization_seed(7, "exp_a", r));
  for (int r = 0; r < 200; ++r) seeds.push_back(realization_seed(7, "exp_b", r));
  for (int r = 0; r < 200; ++r) seeds.push_back(realization_seed(8, "exp_a", r));
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("convergence comparison on a reduced instance stays below theory") {
  ConvergenceComparisonConfig cfg;  // experiment-1 defaults
  cfg.grid = {4.75, 6};             // 216 voxels keeps this a unit test
  cfg.directions = 120;
  cfg.iterations = 12;
  const auto result = run_convergence_comparison(cfg);
  CHECK(result.theory_second.guarantee);
  CHECK(result.theory_full.guarantee);
  for (std::size_t i = 0; i < result.sim_second.size(); ++i) {
    CHECK(result.sim_second[i] <= result.theory_second.bound_l1[i]);
    CHECK(result.sim_full[i] <= result.theory_full.bound_l1[i]);
  }
  CHECK(result.support_recovered_full);
}

TEST_CASE("orthogonal-regime sanity: simulated error collapses within 5 iterations") {
  ConvergenceComparisonConfig cfg;
  cfg.grid = {4.75, 4};  // tiny high-frequency grid: near-orthogonal columns
  cfg.directions = 200;
  cfg.eta0 = 1e-6;
  cfg.iterations = 5;
  const auto result = run_convergence_comparison(cfg);
  const double initial = result.sim_full.front();
  CHECK(result.sim_full.back() <= std::max(1e-10, 1e-6 * initial));
}

TEST_CASE("model reconstruction on a miniature pair of grids improves with order") {
  ModelReconstructionConfig cfg = ModelReconstructionConfig::preset_model1(ScalePreset::Desk);
  cfg.data_grid = {5.0, 9};
  cfg.recon_grid = {5.0, 7};
  cfg.directions = 64;
  cfg.threshold = 9;
  cfg.iterations = 10;
  cfg.born_orders = {1, kFullOrder};
  cfg.model.eta0 = 0.04;
  const auto result = run_model_reconstruction(cfg);
  REQUIRE(result.traces.size() == 2);
  for (const auto& tr : result.traces) {
    CHECK(tr.iterations.size() == 10);
    for (const auto& rec : tr.iterations) CHECK(std::isfinite(rec.y_err));
  }
  // the exact linearization should fit the data at least as well as first Born
  CHECK(result.traces[1].iterations.back().y_err <=
        result.traces[0].iterations.back().y_err + 0.02);
}

TEST_CASE("model reconstruction writes the documented artifacts") {
  TempDir dir("scatter_model_out");
  ModelReconstructionConfig cfg = ModelReconstructionConfig::preset_model1(ScalePreset::Desk);
  cfg.data_grid = {5.0, 7};
  cfg.recon_grid = {5.0, 5};
  cfg.directions = 36;
  cfg.threshold = 5;
  cfg.iterations = 4;
  cfg.born_orders = {1};
  cfg.out_dir = dir.path.string();
  write_model_reconstruction(run_model_reconstruction(cfg), cfg);
  CHECK(std::filesystem::exists(dir.path / "model1_yerr.csv"));
  CHECK(std::filesystem::exists(dir.path / "model1_trace_M1.csv"));
  CHECK(std::filesystem::exists(dir.path / "model1_slice_M1.csv"));
  CHECK(std::filesystem::exists(dir.path / "model1_recon_M1.json"));
  CHECK(std::filesystem::exists(dir.path / "model1_manifest.json"));
  // slice is an n x n table
  const std::string slice = slurp((dir.path / "model1_slice_M1.csv").string());
  CHECK(std::count(slice.begin(), slice.end(), '\n') == 5);
}

TEST_CASE("success-rate study on a tiny instance recovers easy supports") {
  SuccessRateConfig cfg;
  cfg.grid = {3.0, 5};
  cfg.directions = 60;
  cfg.eta_values = {0.01};
  cfg.sparsity_list = {1, 2};
  cfg.born_orders = {1, kFullOrder};
  cfg.iterations = 15;
  cfg.realizations = 6;
  const auto result = run_success_rate(cfg);
  REQUIRE(result.cells.size() == 4);
  for (const auto& cell : result.cells) {
    CHECK(cell.realizations == 6);
    CHECK(cell.rate == doctest::Approx(1.0));  // weak scattering, tiny supports
  }
}
