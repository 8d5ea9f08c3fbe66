#pragma once

#include <limits>
#include <vector>

#include "scatter/coherence.hpp"
#include "scatter/iht.hpp"

namespace scatter {

/// Inputs for the convergence guarantees. delta/gamma are ||V Gamma||_max and
/// ||V Gamma||_1 of the true potential; delta_n/gamma_n are the per-iterate
/// analogues, either measured from a reconstruction trace or supplied as
/// worst-case constants in standalone use.
struct BoundInputs {
  double mu_a = 0.0;
  double mu_b_star = 0.0;
  int s = 1;
  double delta = 0.0;
  double gamma = 0.0;
  std::vector<double> delta_n;  // empty: use delta_n_const
  std::vector<double> gamma_n;  // empty: use gamma_n_const
  double delta_n_const = 0.0;
  double gamma_n_const = 0.0;
  double v_inf = 0.0;
  double v0_err = 0.0;
  double noise_term = 0.0;  // bound on ||Phi_{v_n}^* eps||_inf
  int iterations = 100;

  double delta_n_at(int i) const {
    if (delta_n.empty()) return delta_n_const;
    return delta_n[std::min<std::size_t>(i, delta_n.size() - 1)];
  }
  double gamma_n_at(int i) const {
    if (gamma_n.empty()) return gamma_n_const;
    return gamma_n[std::min<std::size_t>(i, gamma_n.size() - 1)];
  }
};

struct BoundTrace {
  std::vector<double> bound_l1;  // bound on ||v_n - v||_1, n = 1..iterations
  std::vector<double> rho_n;
  bool guarantee = false;  // all contraction factors < 1
  double floor_value = 0.0;
};

/// Generic coherence-based IHT estimate: rho = mu0 (3s+1),
/// e_n <= rho e_{n-1} + (3s+1) cap_n, with floor cap (3s+1)/(1-rho).
inline BoundTrace generic_bound(double mu0, int s, const std::vector<double>& error_caps,
                                double v0_err) {
  if (mu0 < 0.0) throw std::invalid_argument("generic_bound: mu0 must be >= 0");
  if (s < 1) throw std::invalid_argument("generic_bound: s must be >= 1");
  const double factor = 3.0 * s + 1.0;
  const double rho = mu0 * factor;
  BoundTrace trace;
  trace.guarantee = rho < 1.0;
  double err = v0_err;
  double cap_max = 0.0;
  for (double cap : error_caps) {
    err = rho * err + factor * cap;
    trace.bound_l1.push_back(err);
    trace.rho_n.push_back(rho);
    cap_max = std::max(cap_max, cap);
  }
  trace.floor_value = trace.guarantee ? cap_max * factor / (1.0 - rho)
                                      : std::numeric_limits<double>::infinity();
  return trace;
}

namespace detail {

inline double mu1_of_a(double delta_n, int s, double mu_a) {
  // At delta_n = 0 the second-Born linearization is A itself, so the exact
  // coherence replaces the perturbation estimate.
  if (delta_n == 0.0) return mu_a;
  return perturbation_coherence_bound(delta_n, s, mu_a).composed.value;
}

inline double second_born_rho(const BoundInputs& in, int i) {
  const double factor = 3.0 * in.s + 1.0;
  const double mu1 = mu1_of_a(in.delta_n_at(i), in.s, in.mu_a);
  return factor * (mu1 * in.mu_b_star +
                   in.s * in.delta * in.mu_a * (1.0 + in.s * in.delta_n_at(i) * in.mu_b_star));
}

}  // namespace detail

/// Second-Born (M=2) guarantee. Contraction
///   rho1_n = (3s+1) (mu1(A) mu(B*) + s delta mu(A) (1 + s delta_n mu(B*)))
/// plus the linearization-error floor
///   delta gamma (1+gamma_n) (3s+1) (1+(s-1)mu(A)) (1+(s-1)mu(B*))
///     / ((1-rho1)(1-gamma)) * ||v||_inf
/// and the noise term. When sup_n rho1_n >= 1 the geometric accumulation in
/// the floor is undefined; the trace then uses the raw per-iteration error
/// term and the guarantee flag is false.
inline BoundTrace second_born_bound(const BoundInputs& in) {
  if (!(in.gamma < 1.0)) throw std::domain_error("second_born_bound: requires gamma < 1");
  const double factor = 3.0 * in.s + 1.0;
  BoundTrace trace;
  double rho_sup = 0.0;
  for (int i = 0; i < in.iterations; ++i) rho_sup = std::max(rho_sup, detail::second_born_rho(in, i));
  trace.guarantee = rho_sup < 1.0;
  const double accumulate = trace.guarantee ? 1.0 / (1.0 - rho_sup) : 1.0;
  const double pair_factor = (1.0 + (in.s - 1.0) * in.mu_a) * (1.0 + (in.s - 1.0) * in.mu_b_star);
  double err = in.v0_err;
  double add_max = 0.0;
  for (int i = 0; i < in.iterations; ++i) {
    const double rho = detail::second_born_rho(in, i);
    const double add = in.delta * in.gamma * (1.0 + in.gamma_n_at(i)) * factor * pair_factor *
                           accumulate / (1.0 - in.gamma) * in.v_inf +
                       in.noise_term;
    err = rho * err + add;
    trace.bound_l1.push_back(err);
    trace.rho_n.push_back(rho);
    add_max = std::max(add_max, add);
  }
  trace.floor_value = trace.guarantee ? add_max / (1.0 - rho_sup)
                                      : std::numeric_limits<double>::infinity();
  return trace;
}

/// Linear IHT estimate: contraction mu(A) mu(B*) (3s+1) with the first-Born
/// model-error floor (one factor of gamma less than the second-Born floor).
inline BoundTrace linear_bound(const BoundInputs& in) {
  if (!(in.gamma < 1.0)) throw std::domain_error("linear_bound: requires gamma < 1");
  const double factor = 3.0 * in.s + 1.0;
  const double rho = in.mu_a * in.mu_b_star * factor;
  double rho1_sup = 0.0;
  for (int i = 0; i < in.iterations; ++i) rho1_sup = std::max(rho1_sup, detail::second_born_rho(in, i));
  const double accumulate = rho1_sup < 1.0 ? 1.0 / (1.0 - rho1_sup) : 1.0;
  const double pair_factor = (1.0 + (in.s - 1.0) * in.mu_a) * (1.0 + (in.s - 1.0) * in.mu_b_star);
  BoundTrace trace;
  trace.guarantee = rho < 1.0;
  double err = in.v0_err;
  double add_max = 0.0;
  for (int i = 0; i < in.iterations; ++i) {
    const double add = in.delta * (1.0 + in.gamma_n_at(i)) * factor * pair_factor * accumulate /
                           (1.0 - in.gamma) * in.v_inf +
                       in.noise_term;
    err = rho * err + add;
    trace.bound_l1.push_back(err);
    trace.rho_n.push_back(rho);
    add_max = std::max(add_max, add);
  }
  trace.floor_value = trace.guarantee ? add_max / (1.0 - rho)
                                      : std::numeric_limits<double>::infinity();
  return trace;
}

/// Fully nonlinear (T-matrix) guarantee:
///   rho_n = (3s+1) (mu(B*) + (1/(1-gamma_n))^2 (1+(s-1)mu(B*)) delta/(1-gamma))
/// with only the noise term as additive error.
inline BoundTrace full_nonlinear_bound(const BoundInputs& in) {
  if (!(in.gamma < 1.0)) throw std::domain_error("full_nonlinear_bound: requires gamma < 1");
  if (!(in.mu_b_star <= in.mu_a))
    throw std::domain_error("full_nonlinear_bound: requires mu(B*) <= mu(A)");
  for (int i = 0; i < in.iterations; ++i)
    if (!(in.gamma_n_at(i) < 1.0))
      throw std::domain_error("full_nonlinear_bound: requires gamma_n < 1 at iteration " +
                              std::to_string(i + 1));
  const double factor = 3.0 * in.s + 1.0;
  BoundTrace trace;
  double err = in.v0_err;
  double rho_sup = 0.0;
  for (int i = 0; i < in.iterations; ++i) {
    const double gn = in.gamma_n_at(i);
    const double amplifier = 1.0 / ((1.0 - gn) * (1.0 - gn));
    const double rho =
        factor * (in.mu_b_star + amplifier * (1.0 + (in.s - 1.0) * in.mu_b_star) * in.delta / (1.0 - in.gamma));
    err = rho * err + in.noise_term;
    trace.bound_l1.push_back(err);
    trace.rho_n.push_back(rho);
    rho_sup = std::max(rho_sup, rho);
  }
  trace.guarantee = rho_sup < 1.0;
  trace.floor_value = trace.guarantee ? in.noise_term / (1.0 - rho_sup)
                                      : std::numeric_limits<double>::infinity();
  return trace;
}

struct RipConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double c = 0.0;
  bool converges = false;
};

/// RIP-based convergence condition for the fully nonlinear iteration, with
/// gamma = ||Gamma V||_2 < 1/2:
///   alpha = 1 - ((1-delta_2s)((1-2g)/(1-g))^2 - 1)^2
///   beta  = 1 + ((1+delta_2s)/(1-g)^2 - 1)^2,   C = beta ||v||_inf^2
/// converging iff (2/3)(1 + 4||v||_inf^2) < alpha/beta.
inline RipConstants rip_constants(double delta_2s, double gamma, double v_inf) {
  if (delta_2s < 0.0 || delta_2s >= 1.0)
    throw std::domain_error("rip_constants: requires 0 <= delta_2s < 1");
  if (!(gamma >= 0.0 && gamma < 0.5)) throw std::domain_error("rip_constants: requires gamma < 1/2");
  RipConstants out;
  const double shrink = (1.0 - 2.0 * gamma) / (1.0 - gamma);
  const double a_inner = (1.0 - delta_2s) * shrink * shrink - 1.0;
  out.alpha = 1.0 - a_inner * a_inner;
  const double b_inner = (1.0 + delta_2s) / ((1.0 - gamma) * (1.0 - gamma)) - 1.0;
  out.beta = 1.0 + b_inner * b_inner;
  out.c = out.beta * v_inf * v_inf;
  out.converges = (2.0 / 3.0) * (1.0 + 4.0 * v_inf * v_inf) < out.alpha / out.beta;
  return out;
}

/// ||V Gamma||_max and ||V Gamma||_1 (max column abs sum) for the potential
/// diagonal v; used to assemble measured BoundInputs.
inline std::pair<double, double> potential_gamma_norms(const ComplexVector& v_diag,
                                                       const GammaView& gamma) {
  const std::vector<int> sup = support_of(v_diag);
  if (sup.empty()) return {0.0, 0.0};
  const ComplexMatrix rows = gamma.rows(sup);
  double max_entry = 0.0;
  RealVector col_sums = RealVector::Zero(rows.cols());
  for (std::size_t a = 0; a < sup.size(); ++a) {
    const double va = std::abs(v_diag[sup[a]]);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double t = va * std::abs(rows(static_cast<Eigen::Index>(a), j));
      col_sums[j] += t;
      max_entry = std::max(max_entry, t);
    }
  }
  return {max_entry, col_sums.maxCoeff()};
}

/// Supremum of the diagonal backprojection of a known noise matrix through
/// the order-M linearization at v, i.e. the noise term entering the error
/// recursions when synthetic noise is available. Standalone callers supply
/// BoundInputs::noise_term directly instead.
inline double noise_term_estimate(const ComplexMatrix& noise, const NormalizedOperators& ops,
                                  const GammaView& gamma, const ComplexVector& v_phys, int order) {
  if (noise.rows() != ops.A_hat.rows() || noise.cols() != ops.B_hat.cols())
    throw std::invalid_argument("noise_term_estimate: noise shape does not match operators");
  const ComplexMatrix lin = linearized_operator(ops.A_hat, v_phys, gamma, order);
  const ComplexMatrix p = noise * ops.B_hat.adjoint();
  return detail::conj_dot_columns(lin, p).cwiseAbs().maxCoeff();
}

struct IterateNorms {
  std::vector<double> delta_n;
  std::vector<double> gamma_n;
};

/// Per-iterate ||V_n Gamma|| norms measured from a reconstruction trace.
inline IterateNorms measure_iterate_norms(const ReconstructionTrace& trace, const GammaView& gamma) {
  IterateNorms out;
  const auto n = gamma.size();
  for (const auto& rec : trace.iterations) {
    ComplexVector v = ComplexVector::Zero(n);
    for (std::size_t a = 0; a < rec.support.size(); ++a) v[rec.support[a]] = rec.values[a];
    const auto [d, g] = potential_gamma_norms(v, gamma);
    out.delta_n.push_back(d);
    out.gamma_n.push_back(g);
  }
  return out;
}

}  // namespace scatter
