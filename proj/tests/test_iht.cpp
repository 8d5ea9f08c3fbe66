#include <doctest.h>

#include "oracles.hpp"
#include "scatter/coherence.hpp"
#include "scatter/iht.hpp"
#include "scatter/models.hpp"

using namespace scatter;
using scatter::testing::random_complex;
using scatter::testing::StackedOracle;

TEST_CASE("extract_diagonal") {
  CHECK(extract_diagonal(ComplexMatrix::Identity(4, 4)).isApprox(ComplexVector::Ones(4)));
  ComplexMatrix zero_diag = ComplexMatrix::Constant(3, 3, Complex(1, 2));
  zero_diag.diagonal().setZero();
  CHECK(extract_diagonal(zero_diag).norm() == 0.0);
  CHECK_THROWS_AS(extract_diagonal(ComplexMatrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("diagonal of A D_x B equals the Hadamard product action") {
  Rng rng(21);
  const ComplexMatrix a = random_complex(3, 3, rng);
  const ComplexMatrix b = random_complex(3, 3, rng);
  ComplexVector x(3);
  x << Complex(0.5, -1), Complex(2, 0.25), Complex(-0.75, 0.1);
  const ComplexVector lhs = extract_diagonal(a * x.asDiagonal() * b);
  // (A o B^T) x computed entrywise
  ComplexVector rhs = ComplexVector::Zero(3);
  for (int j = 0; j < 3; ++j)
    for (int l = 0; l < 3; ++l) rhs[j] += a(j, l) * b(l, j) * x[l];
  CHECK((lhs - rhs).norm() <= 1e-14 * rhs.norm());
}

TEST_CASE("hard_threshold keeps the largest magnitudes") {
  ComplexVector v(4);
  v << Complex(3, 0), Complex(-1, 0), Complex(0, 2), Complex(0, 0);
  const ComplexVector kept = hard_threshold(v, 2);
  CHECK(kept[0] == v[0]);
  CHECK(kept[1] == Complex(0, 0));
  CHECK(kept[2] == v[2]);
  CHECK(kept[3] == Complex(0, 0));
}

TEST_CASE("hard_threshold tie goes to the lower index") {
  ComplexVector v(3);
  v << Complex(1, 0), Complex(-1, 0), Complex(1, 0);
  const ComplexVector kept = hard_threshold(v, 2);
  CHECK(kept[0] == v[0]);
  CHECK(kept[1] == v[1]);
  CHECK(kept[2] == Complex(0, 0));
}

TEST_CASE("hard_threshold is a projection and the identity on sparse input") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ComplexVector v(12);
    for (int i = 0; i < 12; ++i) v[i] = Complex(rng.normal(), rng.normal());
    const int s = 1 + static_cast<int>(rng.uniform_index(6));
    const ComplexVector once = hard_threshold(v, s);
    const ComplexVector twice = hard_threshold(once, s);
    CHECK((once - twice).norm() == 0.0);
  }
  ComplexVector sparse = ComplexVector::Zero(6);
  sparse[2] = Complex(1, 1);
  sparse[4] = Complex(-2, 0);
  CHECK((hard_threshold(sparse, 5) - sparse).norm() == 0.0);
  CHECK(hard_threshold(sparse, 0).norm() == 0.0);
}

TEST_CASE("column_normalize: plane-wave operators have uniform scales") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(7, Coverage::FullSphere);
  const ComplexMatrix a = assemble_measurement_matrix(grid, dirs);
  const ComplexMatrix b = assemble_source_matrix(grid, dirs);
  const NormalizedOperators ops = column_normalize(a, b);
  for (int j = 0; j < 8; ++j) {
    CHECK(ops.a_col_norms[j] == doctest::Approx(std::sqrt(7.0)).epsilon(1e-14));
    CHECK(ops.b_row_norms[j] == doctest::Approx(std::sqrt(7.0)).epsilon(1e-14));
    CHECK(ops.A_hat.col(j).norm() == doctest::Approx(1.0).epsilon(1e-14));
  }
  // max diagonal of the normalized Gram is 1
  const ComplexMatrix gram = ops.A_hat.adjoint() * ops.A_hat;
  CHECK(gram.diagonal().real().maxCoeff() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("column_normalize already-normalized input has unit scales") {
  ComplexMatrix a = ComplexMatrix::Identity(4, 3);
  ComplexMatrix b = ComplexMatrix::Identity(3, 4);
  const NormalizedOperators ops = column_normalize(a, b);
  CHECK((ops.col_scales - RealVector::Ones(3)).norm() < 1e-15);
}

TEST_CASE("column_normalize names the offending index") {
  ComplexMatrix a = ComplexMatrix::Identity(3, 3);
  a.col(1).setZero();
  const ComplexMatrix b = ComplexMatrix::Identity(3, 3);
  CHECK_THROWS_WITH_AS(column_normalize(a, b), doctest::Contains("index 1"), std::invalid_argument);
}

TEST_CASE("matrix-form update equals the stacked vector form (oracle)") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_index(5));
    const int nd = 2 + static_cast<int>(rng.uniform_index(4));
    const int ns = 2 + static_cast<int>(rng.uniform_index(4));
    const ComplexMatrix a = random_complex(nd, n, rng);
    const ComplexMatrix b = random_complex(n, ns, rng);
    const ComplexMatrix y = random_complex(nd, ns, rng);
    ComplexVector w = ComplexVector::Zero(n);
    for (int j = 0; j < n; ++j)
      if (rng.uniform() < 0.5) w[j] = Complex(rng.normal(), rng.normal());

    const NormalizedOperators ops = column_normalize(a, b);
    const ComplexMatrix gamma = ComplexMatrix::Zero(n, n);
    const ComplexVector z_matrix = iht_update_diagonal(ops, gamma, y, w, 1);
    const StackedOracle oracle(a, b);
    const ComplexVector z_vector = oracle.update(y, w);
    CHECK((z_matrix - z_vector).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("linear_iht recovers exactly in one step with orthonormal factors") {
  Rng rng(17);
  const int n = 6, nd = 8, ns = 9;
  // Orthonormal columns of A and of B^* make Phi^* Phi the identity.
  Eigen::HouseholderQR<ComplexMatrix> qra(random_complex(nd, n, rng));
  const ComplexMatrix a = ComplexMatrix(qra.householderQ()).leftCols(n);
  Eigen::HouseholderQR<ComplexMatrix> qrb(random_complex(ns, n, rng));
  const ComplexMatrix b = ComplexMatrix(qrb.householderQ()).leftCols(n).transpose();

  ComplexVector v_true = ComplexVector::Zero(n);
  v_true[1] = Complex(0.8, -0.3);
  v_true[4] = Complex(-0.5, 0.2);
  const ComplexMatrix y = a * v_true.asDiagonal() * b;

  const NormalizedOperators ops = column_normalize(a, b);
  const ComplexMatrix gamma = ComplexMatrix::Zero(n, n);
  IHTConfig cfg;
  cfg.s_threshold = 2;
  cfg.max_iter = 1;
  const ReconstructionTrace trace = linear_iht(ops, gamma, y, cfg, &v_true);
  CHECK(trace.iterations.back().l1_error.value() < 1e-12);
  CHECK(support_of(trace.final_v) == std::vector<int>{1, 4});
}

TEST_CASE("linear_iht error contracts per the coherence recursion") {
  Rng gen(23);
  const int n = 20, nd = 400;
  const ComplexMatrix a = random_complex(nd, n, gen);
  ComplexMatrix b = ComplexMatrix::Ones(n, 1);
  const NormalizedOperators ops = column_normalize(a, b);
  const double mu = coherence_factored(a, b, true).mu_phi_exact.value();
  const double rho = mu * 4.0;  // (3s+1) with s = 1
  REQUIRE(rho < 1.0);

  ComplexVector v_true = ComplexVector::Zero(n);
  v_true[7] = Complex(1.2, 0.4);
  const ComplexMatrix y = a * v_true.asDiagonal() * b;
  IHTConfig cfg;
  cfg.s_threshold = 1;
  cfg.max_iter = 12;
  const ComplexMatrix gamma = ComplexMatrix::Zero(n, n);
  const ReconstructionTrace trace = linear_iht(ops, gamma, y, cfg, &v_true);
  double prev = v_true.cwiseAbs().sum();
  for (const auto& rec : trace.iterations) {
    const double err = rec.l1_error.value();
    if (prev > 1e-13) CHECK(err <= rho * prev * (1.0 + 1e-9) + 1e-14);
    prev = err;
  }
}

TEST_CASE("linear_iht on zero data stays at the zero fixed point") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(4, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 2;
  cfg.max_iter = 3;
  const ComplexMatrix y = ComplexMatrix::Zero(4, 4);
  const ReconstructionTrace trace = linear_iht(ops, op.gamma, y, cfg);
  for (const auto& rec : trace.iterations) {
    CHECK(rec.y_err == 0.0);
    CHECK(rec.support.empty());
  }
}

TEST_CASE("nonlinear_iht with order 1 reproduces linear_iht exactly") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(6, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[2] = Complex(0.05, 0.01);
  v_true[6] = Complex(-0.04, 0.02);
  const ComplexMatrix y = forward_full(op.A, v_true, op.gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 2;
  cfg.max_iter = 8;
  const ReconstructionTrace lin = linear_iht(ops, op.gamma, y, cfg, &v_true);
  cfg.born_order = 1;
  const ReconstructionTrace non = nonlinear_iht(ops, op.gamma, y, cfg, &v_true);
  REQUIRE(lin.iterations.size() == non.iterations.size());
  for (std::size_t i = 0; i < lin.iterations.size(); ++i) {
    CHECK(lin.iterations[i].support == non.iterations[i].support);
    CHECK(lin.iterations[i].y_err == non.iterations[i].y_err);
  }
  CHECK((lin.final_v - non.final_v).norm() == 0.0);
}

TEST_CASE("residual at the true potential is the Born truncation remainder") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(5, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  GammaView gamma(grid, kUnnormalizedKernel);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[1] = Complex(0.02, 0.0);
  v_true[6] = Complex(0.015, 0.005);
  const ComplexMatrix y = forward_full(op.A, v_true, gamma, op.B).data;
  for (int order : {1, 2, 3}) {
    // Atilde_v V B with V the truth equals the order-M Born data, so the
    // residual must equal Y_full - Y_born(M).
    const ComplexMatrix lin = linearized_operator(op.A, v_true, gamma, order);
    const ComplexMatrix residual = y - lin * v_true.asDiagonal() * op.B;
    const ComplexMatrix remainder = y - forward_born(op.A, v_true, gamma, op.B, order).data;
    CHECK((residual - remainder).norm() <= 1e-12 * y.norm());
  }
}

TEST_CASE("tmatrix_iht on one site matches nonlinear order 2 trace") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(6, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  GammaView gamma(grid, kUnnormalizedKernel);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[3] = Complex(0.08, -0.02);
  const ComplexMatrix y = forward_full(op.A, v_true, gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 1;
  cfg.max_iter = 6;
  cfg.born_order = 2;
  const ReconstructionTrace second = nonlinear_iht(ops, gamma, y, cfg, &v_true);
  const ReconstructionTrace full = tmatrix_iht(ops, gamma, y, cfg, &v_true);
  REQUIRE(second.iterations.size() == full.iterations.size());
  for (std::size_t i = 0; i < second.iterations.size(); ++i) {
    CHECK(second.iterations[i].support == full.iterations[i].support);
    CHECK(second.iterations[i].y_err == doctest::Approx(full.iterations[i].y_err).epsilon(1e-12));
  }
}

TEST_CASE("tmatrix first iteration from zero equals the linear first iteration") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(5, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[0] = Complex(0.1, 0.1);
  v_true[7] = Complex(0.06, -0.04);
  const ComplexMatrix y = forward_full(op.A, v_true, op.gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 2;
  cfg.max_iter = 1;
  const ReconstructionTrace lin = linear_iht(ops, op.gamma, y, cfg);
  const ReconstructionTrace full = tmatrix_iht(ops, op.gamma, y, cfg);
  CHECK((lin.final_v - full.final_v).norm() == 0.0);
}

TEST_CASE("support never exceeds the threshold") {
  const VoxelGrid grid = build_grid(1.0, 3);
  const DirectionSet dirs = sphere_directions(20, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  GammaView gamma(grid, kUnnormalizedKernel);
  ScattererModel model;
  model.kind = ModelKind::RandomVoxels;
  model.count = 4;
  model.eta0 = 0.05;
  model.seed = 3;
  const ComplexVector v_true = potential_diagonal(build_model(model, grid), grid);
  const ComplexMatrix y = forward_full(op.A, v_true, gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 3;
  cfg.max_iter = 10;
  cfg.born_order = 2;
  const ReconstructionTrace trace = nonlinear_iht(ops, gamma, y, cfg);
  for (const auto& rec : trace.iterations) CHECK(rec.support.size() <= 3);
}

TEST_CASE("iterates satisfy the restricted linfty-to-l1 inequality") {
  // ||v_n - v||_1 <= (3s+1) max over the union of the current top s+1, the
  // previous support, and the true support of |z_n - v|.
  const VoxelGrid grid = build_grid(1.0, 3);
  const DirectionSet dirs = sphere_directions(40, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  GammaView gamma(grid, kUnnormalizedKernel);
  ScattererModel model;
  model.kind = ModelKind::RandomVoxels;
  model.count = 2;
  model.eta0 = 0.03;
  model.seed = 9;
  const ComplexVector v_true = potential_diagonal(build_model(model, grid), grid);
  const std::vector<int> true_support = support_of(v_true);
  const ComplexMatrix y = forward_full(op.A, v_true, gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 2;
  cfg.max_iter = 8;
  cfg.born_order = 2;
  cfg.record_pre_threshold = true;
  const ReconstructionTrace trace = nonlinear_iht(ops, gamma, y, cfg, &v_true);
  const int s = cfg.s_threshold;
  std::vector<int> prev_support;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const ComplexVector& z = trace.pre_threshold[i];
    // union of indices: top s+1 of z, previous support, true support
    const ComplexVector top = hard_threshold(z, s + 1);
    std::vector<int> idx = support_of(top);
    idx.insert(idx.end(), prev_support.begin(), prev_support.end());
    idx.insert(idx.end(), true_support.begin(), true_support.end());
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    double winf = 0.0;
    for (int j : idx) winf = std::max(winf, std::abs(z[j] - v_true[j]));
    CHECK(trace.iterations[i].l1_error.value() <= (3.0 * s + 1.0) * winf * (1.0 + 1e-9));
    prev_support = trace.iterations[i].support;
  }
}

TEST_CASE("data_misfit conventions") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(5, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[2] = Complex(0.07, 0.01);
  const ComplexMatrix y = forward_full(op.A, v_true, op.gamma, op.B).data;
  CHECK(data_misfit(y, v_true, op.A, op.B, op.gamma) < 1e-12);
  CHECK(data_misfit(y, ComplexVector::Zero(8), op.A, op.B, op.gamma) == 1.0);
  CHECK(data_misfit(ComplexMatrix::Zero(5, 5), v_true, op.A, op.B, op.gamma) == 0.0);
}

TEST_CASE("data_misfit sits at the noise floor for the true potential") {
  const VoxelGrid grid = build_grid(1.0, 3);
  const DirectionSet dirs = sphere_directions(15, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(27);
  v_true[4] = Complex(0.05, 0.0);
  v_true[20] = Complex(0.03, 0.02);
  const MeasurementMatrix clean = forward_full(op.A, v_true, op.gamma, op.B);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MeasurementMatrix noisy = add_noise(clean, 0.01, seed);
    const double err = data_misfit(noisy.data, v_true, op.A, op.B, op.gamma);
    CHECK(err > 0.007);
    CHECK(err < 0.013);
  }
}

TEST_CASE("traces are deterministic") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(6, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[5] = Complex(0.05, 0.02);
  const ComplexMatrix y = forward_full(op.A, v_true, op.gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 1;
  cfg.max_iter = 5;
  cfg.born_order = 2;
  const ReconstructionTrace t1 = nonlinear_iht(ops, op.gamma, y, cfg, &v_true);
  const ReconstructionTrace t2 = nonlinear_iht(ops, op.gamma, y, cfg, &v_true);
  REQUIRE(t1.iterations.size() == t2.iterations.size());
  for (std::size_t i = 0; i < t1.iterations.size(); ++i) {
    CHECK(t1.iterations[i].y_err == t2.iterations[i].y_err);
    CHECK(t1.iterations[i].support == t2.iterations[i].support);
  }
  CHECK((t1.final_v - t2.final_v).norm() == 0.0);
}

TEST_CASE("iht config validation") {
  IHTConfig cfg;
  cfg.s_threshold = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.s_threshold = 1;
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(hard_threshold(ComplexVector::Ones(3), -1), std::invalid_argument);
  const NormalizedOperators ops = column_normalize(ComplexMatrix::Identity(4, 3),
                                                   ComplexMatrix::Identity(3, 4));
  const ComplexMatrix gamma = ComplexMatrix::Zero(3, 3);
  const ComplexMatrix y = ComplexMatrix::Zero(4, 4);
  IHTConfig bad;
  bad.s_threshold = 1;
  bad.born_order = -3;
  CHECK_THROWS_AS(nonlinear_iht(ops, gamma, y, bad), std::invalid_argument);
}

TEST_CASE("tol-based early stop sets the converged flag") {
  const VoxelGrid grid = build_grid(1.0, 2);
  const DirectionSet dirs = sphere_directions(6, Coverage::FullSphere);
  const Operators op = assemble_operators(grid, dirs, dirs);
  ComplexVector v_true = ComplexVector::Zero(8);
  v_true[4] = Complex(0.03, 0.0);
  const ComplexMatrix y = forward_full(op.A, v_true, op.gamma, op.B).data;
  const NormalizedOperators ops = column_normalize(op.A, op.B);
  IHTConfig cfg;
  cfg.s_threshold = 1;
  cfg.max_iter = 50;
  cfg.tol = 1e-12;
  const ReconstructionTrace trace = linear_iht(ops, op.gamma, y, cfg, &v_true);
  CHECK(trace.converged);
  CHECK(trace.iterations_used < 50);
}

TEST_CASE("shape mismatches are rejected") {
  const NormalizedOperators ops = column_normalize(ComplexMatrix::Identity(4, 3),
                                                   ComplexMatrix::Identity(3, 4));
  const ComplexMatrix gamma = ComplexMatrix::Zero(3, 3);
  const ComplexMatrix bad_gamma = ComplexMatrix::Zero(2, 2);
  const ComplexMatrix bad_y = ComplexMatrix::Zero(5, 4);
  const ComplexMatrix good_y = ComplexMatrix::Zero(4, 4);
  IHTConfig cfg;
  cfg.s_threshold = 1;
  CHECK_THROWS_AS(linear_iht(ops, gamma, bad_y, cfg), std::invalid_argument);
  CHECK_THROWS_AS(linear_iht(ops, bad_gamma, good_y, cfg), std::invalid_argument);
}
