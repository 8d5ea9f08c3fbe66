#pragma once

#include <numeric>
#include <optional>
#include <vector>

#include "scatter/forward.hpp"

namespace scatter {

struct IHTConfig {
  int s_threshold = 1;
  int born_order = 1;  // >= 1 finite truncation; kFullOrder means exact linearization
  int max_iter = 100;
  std::optional<double> tol;  // opt-in early stop on |change in Y_err|
  ComplexVector init;         // physical diagonal of V_0; empty means zero
  bool record_pre_threshold = false;
  // When set, divergence and singular iterate systems end the trace with the
  // failure recorded instead of throwing; regime sweeps use this.
  bool tolerate_divergence = false;

  void validate() const {
    if (s_threshold < 1) throw std::invalid_argument("IHTConfig: s_threshold must be >= 1");
    if (max_iter < 1) throw std::invalid_argument("IHTConfig: max_iter must be >= 1");
  }
};

struct IterationRecord {
  int iter = 0;  // 1-based
  double y_err = 0.0;
  std::optional<double> l1_error;
  std::vector<int> support;
  std::vector<Complex> values;  // physical diagonal of V on the support
};

struct ReconstructionTrace {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  int iterations_used = 0;
  ComplexVector final_v;  // physical diagonal, full length
  std::vector<ComplexVector> pre_threshold;  // physical units; filled on request
  bool diverged = false;      // only with IHTConfig::tolerate_divergence
  std::string failure;        // what ended the run early
};

/// Diagonal of a square matrix (the action of the diagonalizing operator).
inline ComplexVector extract_diagonal(const ComplexMatrix& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("extract_diagonal: matrix must be square");
  return x.diagonal();
}

/// Keeps the s largest-magnitude entries, zeroing the rest. Ties break toward
/// the lower index so results are reproducible.
inline ComplexVector hard_threshold(const ComplexVector& v, int s) {
  if (s < 0) throw std::invalid_argument("hard_threshold: s must be >= 0");
  const auto n = v.size();
  if (s >= n) return v;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto better = [&v](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(v[a]), mb = std::abs(v[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + s, idx.end(), better);
  ComplexVector out = ComplexVector::Zero(n);
  for (int a = 0; a < s; ++a) out[idx[a]] = v[idx[a]];
  return out;
}

struct NormalizedOperators {
  ComplexMatrix A_hat;  // unit-norm columns
  ComplexMatrix B_hat;  // unit-norm rows, i.e. B_hat^* has unit-norm columns
  RealVector a_col_norms;
  RealVector b_row_norms;
  RealVector col_scales;  // a_col_norms .* b_row_norms; physical v = w ./ col_scales
};

inline NormalizedOperators column_normalize(const ComplexMatrix& A, const ComplexMatrix& B) {
  if (A.cols() != B.rows()) throw std::invalid_argument("column_normalize: A.cols() != B.rows()");
  NormalizedOperators ops;
  const auto n = A.cols();
  ops.a_col_norms.resize(n);
  ops.b_row_norms.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double an = A.col(j).norm();
    if (an == 0.0)
      throw std::invalid_argument("column_normalize: zero column of A at index " + std::to_string(j));
    const double bn = B.row(j).norm();
    if (bn == 0.0)
      throw std::invalid_argument("column_normalize: zero row of B at index " + std::to_string(j));
    ops.a_col_norms[j] = an;
    ops.b_row_norms[j] = bn;
  }
  ops.A_hat = A * ops.a_col_norms.cwiseInverse().asDiagonal();
  ops.B_hat = ops.b_row_norms.cwiseInverse().asDiagonal() * B;
  ops.col_scales = ops.a_col_norms.cwiseProduct(ops.b_row_norms);
  return ops;
}

/// Relative Frobenius misfit between the data and the fully nonlinear forward
/// model at the reconstruction; returns 0 for Y = 0 by convention.
inline double data_misfit(const ComplexMatrix& Y, const ComplexVector& v_rec, const ComplexMatrix& A,
                          const ComplexMatrix& B, const GammaView& gamma) {
  const double y_norm = Y.norm();
  if (y_norm == 0.0) return 0.0;
  const MeasurementMatrix model = forward_full(A, v_rec, gamma, B);
  return (Y - model.data).norm() / y_norm;
}

/// Optional cross-run precomputation: the Gram matrix B_hat B_hat^* lets the
/// residual backprojection reuse O(N_d s N) products instead of O(N_d N_s N).
struct IhtWorkspace {
  ComplexMatrix gram_b;  // N x N
};

inline IhtWorkspace make_iht_workspace(const NormalizedOperators& ops) {
  IhtWorkspace ws;
  ws.gram_b = ops.B_hat * ops.B_hat.adjoint();
  return ws;
}

namespace detail {

// Column-wise sum of conj(lhs) .* rhs.
inline ComplexVector conj_dot_columns(const ComplexMatrix& lhs, const ComplexMatrix& rhs) {
  return (lhs.conjugate().cwiseProduct(rhs)).colwise().sum().transpose();
}

class IhtEngine {
public:
  IhtEngine(const NormalizedOperators& ops, const GammaView& gamma, const ComplexMatrix& Y,
            const IhtWorkspace* ws)
      : ops_(ops), gamma_(gamma), y_(Y), n_(ops.A_hat.cols()) {
    if (Y.rows() != ops.A_hat.rows() || Y.cols() != ops.B_hat.cols())
      throw std::invalid_argument("iht: data shape does not match operators");
    if (gamma.size() != n_) throw std::invalid_argument("iht: gamma size does not match operators");
    if (ws != nullptr && ws->gram_b.rows() == n_) {
      gram_b_ = &ws->gram_b;
    } else if (n_ <= kGramLimit) {
      owned_gram_ = ops.B_hat * ops.B_hat.adjoint();
      gram_b_ = &owned_gram_;
    }
    if (gram_b_ != nullptr) p0_ = Y * ops.B_hat.adjoint();
    y_norm_ = Y.norm();
  }

  /// One un-thresholded update z = w + D(Atilde^*(Y - Atilde W B_hat) B_hat^*)
  /// in normalized units, where Atilde is the order-M linearization at w.
  ComplexVector update_diagonal(const ComplexVector& w, int order) const {
    const std::vector<int> sup = support_of(w);
    ComplexVector v_phys = w.cwiseQuotient(ops_.col_scales.cast<Complex>());
    CorrectionRows corr = correction_rows(v_phys, gamma_, order);

    ComplexMatrix u;  // N_d x s, the support columns of Atilde W / w_S
    if (!sup.empty()) {
      u = gather_columns(ops_.A_hat, sup);
      if (!corr.support.empty()) u += gather_columns(ops_.A_hat, corr.support) * gather_columns(corr.rows, sup);
    }

    ComplexMatrix p;  // (Y - model) B_hat^*, N_d x N
    if (gram_b_ != nullptr) {
      p = p0_;
      if (!sup.empty()) {
        const ComplexVector w_s = gather(w, sup);
        p.noalias() -= u * (w_s.asDiagonal() * gather_rows(*gram_b_, sup));
      }
    } else {
      ComplexMatrix residual = y_;
      if (!sup.empty()) {
        const ComplexVector w_s = gather(w, sup);
        residual.noalias() -= u * (w_s.asDiagonal() * gather_rows(ops_.B_hat, sup));
      }
      p.noalias() = residual * ops_.B_hat.adjoint();
    }

    ComplexVector d = conj_dot_columns(ops_.A_hat, p);
    if (!corr.support.empty()) {
      const ComplexMatrix q = gather_columns(ops_.A_hat, corr.support).adjoint() * p;
      d += conj_dot_columns(corr.rows, q);
    }
    return w + d;
  }

  ReconstructionTrace run(const IHTConfig& cfg, int order, const ComplexVector* ground_truth) {
    cfg.validate();
    ReconstructionTrace trace;
    ComplexVector w;
    if (cfg.init.size() == 0) {
      w = ComplexVector::Zero(n_);
    } else {
      if (cfg.init.size() != n_) throw std::invalid_argument("iht: init has wrong length");
      w = cfg.init.cwiseProduct(ops_.col_scales.cast<Complex>());
    }
    double prev_err = -1.0;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
      ComplexVector w_next;
      IterationRecord rec;
      try {
        ComplexVector z;
        try {
          z = update_diagonal(w, order);
        } catch (const singular_operator_error& e) {
          throw singular_operator_error(
              std::string(e.what()) + " (iht iteration " + std::to_string(iter) + ")",
              e.support_size(), e.condition_estimate());
        } catch (const divergence_error&) {
          throw;
        } catch (const std::runtime_error& e) {
          // Non-finite intermediates (overflowing Born powers) surface here.
          throw divergence_error(
              std::string(e.what()) + " (iht iteration " + std::to_string(iter) + ")", iter);
        }
        if (!z.allFinite())
          throw divergence_error("iht: non-finite update at iteration " + std::to_string(iter), iter);
        w_next = hard_threshold(z, cfg.s_threshold);

        const ComplexVector v_phys = w_next.cwiseQuotient(ops_.col_scales.cast<Complex>());
        rec.iter = iter;
        rec.y_err = misfit_of(v_phys, iter);
        rec.support = support_of(w_next);
        rec.values.reserve(rec.support.size());
        for (int j : rec.support) rec.values.push_back(v_phys[j]);
        if (ground_truth != nullptr) rec.l1_error = (v_phys - *ground_truth).cwiseAbs().sum();
        if (cfg.record_pre_threshold)
          trace.pre_threshold.push_back(z.cwiseQuotient(ops_.col_scales.cast<Complex>()));
      } catch (const std::runtime_error& e) {
        if (!cfg.tolerate_divergence) throw;
        trace.diverged = true;
        trace.failure = e.what();
        break;
      }
      w = std::move(w_next);
      trace.iterations.push_back(std::move(rec));
      trace.iterations_used = iter;

      const double err = trace.iterations.back().y_err;
      if (cfg.tol && prev_err >= 0.0 && std::abs(err - prev_err) <= *cfg.tol) {
        trace.converged = true;
        break;
      }
      prev_err = err;
    }
    trace.final_v = w.cwiseQuotient(ops_.col_scales.cast<Complex>());
    return trace;
  }

private:
  double misfit_of(const ComplexVector& v_phys, int iter) const {
    if (y_norm_ == 0.0) return 0.0;
    const std::vector<int> sup = support_of(v_phys);
    if (sup.empty()) return 1.0;
    const ComplexVector v_s = gather(v_phys, sup);
    ComplexMatrix model;
    try {
      auto lu = scatter::detail::support_system_lu(v_s, gamma_.block(sup));
      // Physical slices reconstructed from the normalized operators.
      ComplexMatrix b_s = gather_rows(ops_.B_hat, sup);
      for (std::size_t a = 0; a < sup.size(); ++a)
        b_s.row(static_cast<Eigen::Index>(a)) *= ops_.b_row_norms[sup[a]];
      const ComplexMatrix u_s = lu.solve(ComplexMatrix(v_s.asDiagonal() * b_s));
      ComplexMatrix a_s = gather_columns(ops_.A_hat, sup);
      for (std::size_t a = 0; a < sup.size(); ++a)
        a_s.col(static_cast<Eigen::Index>(a)) *= ops_.a_col_norms[sup[a]];
      model.noalias() = a_s * u_s;
    } catch (const singular_operator_error& e) {
      throw singular_operator_error(std::string(e.what()) + " (misfit at iteration " + std::to_string(iter) + ")",
                                    e.support_size(), e.condition_estimate());
    }
    return (y_ - model).norm() / y_norm_;
  }

  static constexpr Eigen::Index kGramLimit = 4096;

  const NormalizedOperators& ops_;
  GammaView gamma_;
  const ComplexMatrix& y_;
  Eigen::Index n_;
  const ComplexMatrix* gram_b_ = nullptr;
  ComplexMatrix owned_gram_;
  ComplexMatrix p0_;
  double y_norm_ = 0.0;
};

}  // namespace detail

/// Matrix-form linear IHT: V_{n+1} = H_s(D(V_n + A^*(Y - A V_n B) B^*)).
inline ReconstructionTrace linear_iht(const NormalizedOperators& ops, const GammaView& gamma,
                                      const ComplexMatrix& Y, const IHTConfig& cfg,
                                      const ComplexVector* ground_truth = nullptr,
                                      const IhtWorkspace* workspace = nullptr) {
  detail::IhtEngine engine(ops, gamma, Y, workspace);
  return engine.run(cfg, 1, ground_truth);
}

/// Nonlinear IHT with order-M Born linearization Atilde_n = A sum_{m<M} (V_n Gamma)^m.
inline ReconstructionTrace nonlinear_iht(const NormalizedOperators& ops, const GammaView& gamma,
                                         const ComplexMatrix& Y, const IHTConfig& cfg,
                                         const ComplexVector* ground_truth = nullptr,
                                         const IhtWorkspace* workspace = nullptr) {
  if (cfg.born_order != kFullOrder && cfg.born_order < 1)
    throw std::invalid_argument("nonlinear_iht: born_order must be >= 1 or kFullOrder");
  detail::IhtEngine engine(ops, gamma, Y, workspace);
  return engine.run(cfg, cfg.born_order, ground_truth);
}

/// Fully nonlinear (T-matrix) IHT: Atilde_n = A (I - V_n Gamma)^{-1} through
/// the support-restricted solve.
inline ReconstructionTrace tmatrix_iht(const NormalizedOperators& ops, const GammaView& gamma,
                                       const ComplexMatrix& Y, const IHTConfig& cfg,
                                       const ComplexVector* ground_truth = nullptr,
                                       const IhtWorkspace* workspace = nullptr) {
  detail::IhtEngine engine(ops, gamma, Y, workspace);
  return engine.run(cfg, kFullOrder, ground_truth);
}

/// One un-thresholded update in normalized units; exposed for the equivalence
/// oracles against the vector-form algorithm.
inline ComplexVector iht_update_diagonal(const NormalizedOperators& ops, const GammaView& gamma,
                                         const ComplexMatrix& Y, const ComplexVector& w, int order) {
  detail::IhtEngine engine(ops, gamma, Y, nullptr);
  return engine.update_diagonal(w, order);
}

}  // namespace scatter
