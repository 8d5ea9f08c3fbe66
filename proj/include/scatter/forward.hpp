#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include <Eigen/LU>

#include "scatter/geometry.hpp"
#include "scatter/matrix.hpp"
#include "scatter/rng.hpp"

namespace scatter {

/// Free-space Helmholtz Green's function e^{ikr}/(4 pi r).
inline Complex green_function(const Vec3& x, const Vec3& y, double k) {
  const double r = (x - y).norm();
  if (r == 0.0) throw std::domain_error("green_function: coincident points");
  const double phase = k * r;
  return Complex(std::cos(phase), std::sin(phase)) / (4.0 * kPi * r);
}

/// Interaction matrix Gamma_{mn} = (1 - delta_{mn}) G(r_m, r_n), either held
/// dense or generated on demand from voxel centers. The generated form keeps
/// large-grid solves at O(s) memory instead of O(N^2). kernel_scale multiplies
/// the Green's function; 4*pi selects the unnormalized point-interaction
/// kernel e^{ikr}/r used by coupled-dipole codes.
class GammaView {
public:
  GammaView(const ComplexMatrix& dense) : dense_(&dense) {}  // NOLINT(runtime/explicit)
  GammaView(const VoxelGrid& grid, double kernel_scale = 1.0)  // NOLINT(runtime/explicit)
      : points_(&grid.centers), k_(grid.k), scale_(kernel_scale) {}

  Eigen::Index size() const {
    return dense_ ? dense_->rows() : static_cast<Eigen::Index>(points_->size());
  }

  Complex entry(Eigen::Index i, Eigen::Index j) const {
    if (i == j) return Complex(0.0, 0.0);
    if (dense_) return (*dense_)(i, j);
    return scale_ * green_function((*points_)[i], (*points_)[j], k_);
  }

  /// Gathered rows S (|S| x N).
  ComplexMatrix rows(const std::vector<int>& support) const {
    const Eigen::Index n = size();
    ComplexMatrix out(static_cast<Eigen::Index>(support.size()), n);
    for (std::size_t a = 0; a < support.size(); ++a)
      for (Eigen::Index j = 0; j < n; ++j) out(static_cast<Eigen::Index>(a), j) = entry(support[a], j);
    return out;
  }

  /// Principal block S x S.
  ComplexMatrix block(const std::vector<int>& support) const {
    const auto s = static_cast<Eigen::Index>(support.size());
    ComplexMatrix out(s, s);
    for (Eigen::Index a = 0; a < s; ++a)
      for (Eigen::Index b = 0; b < s; ++b) out(a, b) = entry(support[a], support[b]);
    return out;
  }

  bool is_dense() const { return dense_ != nullptr; }

private:
  const ComplexMatrix* dense_ = nullptr;
  const std::vector<Vec3>* points_ = nullptr;
  double k_ = kWavenumber;
  double scale_ = 1.0;
};

/// Kernel scale for the unnormalized coupled-dipole convention e^{ikr}/r.
inline constexpr double kUnnormalizedKernel = 4.0 * kPi;

struct Operators {
  ComplexMatrix A;      // N_d x N, entries e^{-ik x_m . r_j}
  ComplexMatrix B;      // N x N_s, entries e^{+ik d_n . r_j}
  ComplexMatrix gamma;  // N x N, zero diagonal
};

inline ComplexMatrix assemble_measurement_matrix(const VoxelGrid& grid, const DirectionSet& meas_dirs) {
  if (meas_dirs.count() < 1) throw std::invalid_argument("assemble_operators: empty measurement direction set");
  const int nd = meas_dirs.count();
  const int n = grid.num_voxels();
  ComplexMatrix a(nd, n);
  for (int j = 0; j < n; ++j)
    for (int m = 0; m < nd; ++m) {
      const double phase = -grid.k * meas_dirs.directions[m].dot(grid.centers[j]);
      a(m, j) = Complex(std::cos(phase), std::sin(phase));
    }
  return a;
}

inline ComplexMatrix assemble_source_matrix(const VoxelGrid& grid, const DirectionSet& src_dirs) {
  if (src_dirs.count() < 1) throw std::invalid_argument("assemble_operators: empty source direction set");
  const int ns = src_dirs.count();
  const int n = grid.num_voxels();
  ComplexMatrix b(n, ns);
  for (int nn = 0; nn < ns; ++nn)
    for (int j = 0; j < n; ++j) {
      const double phase = grid.k * src_dirs.directions[nn].dot(grid.centers[j]);
      b(j, nn) = Complex(std::cos(phase), std::sin(phase));
    }
  return b;
}

inline ComplexMatrix assemble_gamma(const VoxelGrid& grid, double kernel_scale = 1.0) {
  const int n = grid.num_voxels();
  ComplexMatrix g = ComplexMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Complex v = kernel_scale * green_function(grid.centers[i], grid.centers[j], grid.k);
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

inline Operators assemble_operators(const VoxelGrid& grid, const DirectionSet& meas_dirs,
                                    const DirectionSet& src_dirs) {
  Operators ops;
  ops.A = assemble_measurement_matrix(grid, meas_dirs);
  ops.B = assemble_source_matrix(grid, src_dirs);
  ops.gamma = assemble_gamma(grid);
  require_finite(ops.A, "assemble_operators(A)");
  require_finite(ops.B, "assemble_operators(B)");
  require_finite(ops.gamma, "assemble_operators(gamma)");
  return ops;
}

/// Sparse scatterer: eta values on a sorted set of voxel indices, tied to the
/// grid it was built on.
struct PotentialField {
  int grid_n_per_side = 0;
  double grid_side_length = 0.0;
  std::vector<int> support;
  std::vector<Complex> values;

  int sparsity() const { return static_cast<int>(support.size()); }

  void validate(int num_voxels) const {
    if (support.size() != values.size())
      throw std::invalid_argument("PotentialField: support/values size mismatch");
    for (std::size_t a = 0; a < support.size(); ++a) {
      if (support[a] < 0 || support[a] >= num_voxels)
        throw std::invalid_argument("PotentialField: support index out of range");
      if (a > 0 && support[a] <= support[a - 1])
        throw std::invalid_argument("PotentialField: support must be strictly increasing");
    }
  }
};

/// Diagonal of V: V_jj = k^2 h^3 eta(r_j) on the support, zero elsewhere.
inline ComplexVector potential_diagonal(const PotentialField& pot, const VoxelGrid& grid) {
  if (pot.grid_n_per_side != grid.n_per_side || pot.grid_side_length != grid.side_length)
    throw std::invalid_argument("potential_diagonal: field built on a different grid");
  pot.validate(grid.num_voxels());
  ComplexVector v = ComplexVector::Zero(grid.num_voxels());
  const double scale = grid.k * grid.k * grid.h * grid.h * grid.h;
  for (std::size_t a = 0; a < pot.support.size(); ++a) v[pot.support[a]] = scale * pot.values[a];
  return v;
}

/// Recovers eta from a diagonal of V on a given grid.
inline Complex eta_from_potential(Complex v_entry, const VoxelGrid& grid) {
  const double scale = grid.k * grid.k * grid.h * grid.h * grid.h;
  return v_entry / scale;
}

struct MeasurementMatrix {
  ComplexMatrix data;  // N_d x N_s
  double noise_level = 0.0;
  std::optional<std::uint64_t> seed;
};

inline std::vector<int> support_of(const ComplexVector& v) {
  std::vector<int> s;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v[j] != Complex(0.0, 0.0)) s.push_back(static_cast<int>(j));
  return s;
}

inline ComplexVector gather(const ComplexVector& v, const std::vector<int>& idx) {
  ComplexVector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out[static_cast<Eigen::Index>(a)] = v[idx[a]];
  return out;
}

inline ComplexMatrix gather_columns(const ComplexMatrix& m, const std::vector<int>& idx) {
  ComplexMatrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = m.col(idx[a]);
  return out;
}

inline ComplexMatrix gather_rows(const ComplexMatrix& m, const std::vector<int>& idx) {
  ComplexMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t a = 0; a < idx.size(); ++a) out.row(static_cast<Eigen::Index>(a)) = m.row(idx[a]);
  return out;
}

namespace detail {

/// LU of (I_s - V_S Gamma_SS) with a reciprocal-condition guard.
inline Eigen::PartialPivLU<ComplexMatrix> support_system_lu(const ComplexVector& v_support,
                                                            const ComplexMatrix& gamma_block) {
  const auto s = v_support.size();
  ComplexMatrix sys = ComplexMatrix::Identity(s, s) - v_support.asDiagonal() * gamma_block;
  Eigen::PartialPivLU<ComplexMatrix> lu(sys);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw singular_operator_error(
        "support system (I - V_S Gamma_SS) is numerically singular; rcond=" + format_double(rcond) +
            ", support size=" + std::to_string(s),
        static_cast<std::size_t>(s), rcond);
  }
  return lu;
}

}  // namespace detail

/// Mth Born approximation Y = A (sum_{m=0}^{M-1} (V Gamma)^m) V B, evaluated
/// through the <= s nonzero rows of V Gamma.
inline MeasurementMatrix forward_born(const ComplexMatrix& A, const ComplexVector& v_diag,
                                      const GammaView& gamma, const ComplexMatrix& B, int order) {
  if (order < 1) throw std::invalid_argument("forward_born: order must be >= 1");
  if (A.cols() != v_diag.size() || B.rows() != v_diag.size() || gamma.size() != v_diag.size())
    throw std::invalid_argument("forward_born: operator shape mismatch");
  const std::vector<int> sup = support_of(v_diag);
  MeasurementMatrix out;
  out.data = ComplexMatrix::Zero(A.rows(), B.cols());
  if (sup.empty()) return out;
  const ComplexVector v_s = gather(v_diag, sup);
  const ComplexMatrix b_s = gather_rows(B, sup);
  const ComplexMatrix c_ss = v_s.asDiagonal() * gamma.block(sup);  // (V Gamma)_SS
  ComplexMatrix term = v_s.asDiagonal() * b_s;                     // (V B)_S
  ComplexMatrix acc = term;
  for (int m = 1; m < order; ++m) {
    term = c_ss * term;
    acc += term;
  }
  out.data = gather_columns(A, sup) * acc;
  require_finite(out.data, "forward_born");
  return out;
}

/// Exact forward data Y = A (I - V Gamma)^{-1} V B via the s x s support
/// system; the N x N inverse is never formed.
inline MeasurementMatrix forward_full(const ComplexMatrix& A, const ComplexVector& v_diag,
                                      const GammaView& gamma, const ComplexMatrix& B) {
  if (A.cols() != v_diag.size() || B.rows() != v_diag.size() || gamma.size() != v_diag.size())
    throw std::invalid_argument("forward_full: operator shape mismatch");
  const std::vector<int> sup = support_of(v_diag);
  MeasurementMatrix out;
  out.data = ComplexMatrix::Zero(A.rows(), B.cols());
  if (sup.empty()) return out;
  const ComplexVector v_s = gather(v_diag, sup);
  auto lu = detail::support_system_lu(v_s, gamma.block(sup));
  const ComplexMatrix rhs = v_s.asDiagonal() * gather_rows(B, sup);
  const ComplexMatrix u_s = lu.solve(rhs);  // rows of (I - V Gamma)^{-1} V B on S
  out.data = gather_columns(A, sup) * u_s;
  require_finite(out.data, "forward_full");
  return out;
}

/// T = (I - V Gamma)^{-1} V. Only the S x S principal block is nonzero, so
/// Y = A T B reproduces forward_full.
inline ComplexMatrix t_matrix(const ComplexVector& v_diag, const GammaView& gamma) {
  if (gamma.size() != v_diag.size()) throw std::invalid_argument("t_matrix: shape mismatch");
  const auto n = v_diag.size();
  ComplexMatrix t = ComplexMatrix::Zero(n, n);
  const std::vector<int> sup = support_of(v_diag);
  if (sup.empty()) return t;
  const ComplexVector v_s = gather(v_diag, sup);
  auto lu = detail::support_system_lu(v_s, gamma.block(sup));
  ComplexMatrix t_ss = lu.solve(ComplexMatrix(v_s.asDiagonal()));
  for (std::size_t a = 0; a < sup.size(); ++a)
    for (std::size_t b = 0; b < sup.size(); ++b)
      t(sup[a], sup[b]) = t_ss(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  require_finite(t, "t_matrix");
  return t;
}

/// Additive complex Gaussian noise, per-entry standard deviation
/// level * ||Y||_F / sqrt(Nd*Ns); deterministic under a fixed seed.
inline MeasurementMatrix add_noise(const MeasurementMatrix& y, double level, std::uint64_t seed) {
  if (level < 0.0) throw std::invalid_argument("add_noise: level must be >= 0");
  MeasurementMatrix out;
  out.data = y.data;
  out.noise_level = level;
  out.seed = seed;
  if (level == 0.0) return out;
  const double sigma =
      level * y.data.norm() / std::sqrt(static_cast<double>(y.data.rows() * y.data.cols()));
  Rng rng(seed);
  for (Eigen::Index i = 0; i < out.data.rows(); ++i)
    for (Eigen::Index j = 0; j < out.data.cols(); ++j) out.data(i, j) += sigma * rng.complex_normal();
  return out;
}

/// Rows S of R where A (I - V Gamma)^{-1} = A (I + R); for finite order,
/// R = sum_{m=1}^{M-1} (V Gamma)^m. Shared by the IHT linearizations and the
/// numeric coherence of linearized operators.
struct CorrectionRows {
  std::vector<int> support;
  ComplexMatrix rows;  // |S| x N
};

inline CorrectionRows correction_rows(const ComplexVector& v_diag, const GammaView& gamma, int order) {
  if (order != kFullOrder && order < 1) throw std::invalid_argument("correction_rows: invalid order");
  CorrectionRows out;
  out.support = support_of(v_diag);
  if (out.support.empty() || order == 1) {
    out.support.clear();
    out.rows.resize(0, gamma.size());
    return out;
  }
  const ComplexVector v_s = gather(v_diag, out.support);
  const ComplexMatrix w_s = v_s.asDiagonal() * gamma.rows(out.support);  // (V Gamma)_S
  if (order == kFullOrder) {
    auto lu = detail::support_system_lu(v_s, gamma.block(out.support));
    out.rows = lu.solve(w_s);
    return out;
  }
  const ComplexMatrix c_ss = gather_columns(w_s, out.support);
  ComplexMatrix term = w_s;
  ComplexMatrix acc = w_s;
  for (int m = 2; m < order; ++m) {
    term = c_ss * term;
    acc += term;
  }
  out.rows = acc;
  require_finite(out.rows, "correction_rows");
  return out;
}

/// Dense linearized operator A (sum_{m=0}^{M-1} (V Gamma)^m), or
/// A (I - V Gamma)^{-1} for the full order.
inline ComplexMatrix linearized_operator(const ComplexMatrix& A, const ComplexVector& v_diag,
                                         const GammaView& gamma, int order) {
  CorrectionRows corr = correction_rows(v_diag, gamma, order);
  ComplexMatrix out = A;
  if (!corr.support.empty()) out += gather_columns(A, corr.support) * corr.rows;
  return out;
}

}  // namespace scatter
