#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scatter/forward.hpp"

namespace scatter {

struct BoundEntry {
  std::string name;
  double value = 0.0;
  bool clamped = false;
};

struct CoherenceReport {
  double mu_exact = 0.0;
  std::pair<int, int> argmax_pair{-1, -1};
  std::vector<BoundEntry> bound_chain;
};

/// Exact mutual coherence max_{j!=k} |<M_j, M_k>| / (||M_j|| ||M_k||),
/// scanned in column blocks so large N never materializes a full Gram.
inline CoherenceReport mutual_coherence(const ComplexMatrix& m) {
  const Eigen::Index n = m.cols();
  if (n < 2) throw undefined_coherence_error("mutual_coherence: needs at least two columns");
  RealVector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    norms[j] = m.col(j).norm();
    if (norms[j] == 0.0)
      throw std::invalid_argument("mutual_coherence: zero column at index " + std::to_string(j));
  }
  CoherenceReport report;
  const Eigen::Index block = 384;
  for (Eigen::Index jb = 0; jb < n; jb += block) {
    const Eigen::Index bs = std::min(block, n - jb);
    const ComplexMatrix gram = m.middleCols(jb, bs).adjoint() * m.rightCols(n - jb);
    for (Eigen::Index a = 0; a < bs; ++a) {
      const Eigen::Index j = jb + a;
      for (Eigen::Index k = j + 1; k < n; ++k) {
        const double val = std::abs(gram(a, k - jb)) / (norms[j] * norms[k]);
        if (val > report.mu_exact) {
          report.mu_exact = val;
          report.argmax_pair = {static_cast<int>(j), static_cast<int>(k)};
        }
      }
    }
  }
  return report;
}

struct FactoredCoherence {
  double mu_a = 0.0;
  double mu_b_star = 0.0;
  double product = 0.0;
  std::optional<double> mu_phi_exact;  // exact coherence of the Hadamard Gram, on request
};

/// mu(A) mu(B^*), the separable upper bound on the coherence of the stacked
/// sensing matrix Phi_{(mn),j} = A_{mj} B_{jn}.
inline FactoredCoherence coherence_factored(const ComplexMatrix& A, const ComplexMatrix& B,
                                            bool verify_exact = false) {
  FactoredCoherence out;
  out.mu_a = mutual_coherence(A).mu_exact;
  out.mu_b_star = mutual_coherence(B.adjoint()).mu_exact;
  out.product = out.mu_a * out.mu_b_star;
  if (verify_exact) {
    // Phi^* Phi = (A^* A) o (B B^*)^T entrywise.
    const ComplexMatrix ga = A.adjoint() * A;
    const ComplexMatrix gb = B * B.adjoint();
    double mu = 0.0;
    for (Eigen::Index j = 0; j < ga.rows(); ++j)
      for (Eigen::Index k = j + 1; k < ga.cols(); ++k) {
        const double num = std::abs(ga(j, k) * gb(k, j));
        const double den = std::sqrt(std::abs(ga(j, j) * gb(j, j)) * std::abs(ga(k, k) * gb(k, k)));
        mu = std::max(mu, num / den);
      }
    out.mu_phi_exact = mu;
  }
  return out;
}

struct BoundValue {
  double value = 0.0;
  bool clamped = false;
};

/// Coherence of a product A H with A column-normalized:
/// mu(AH) <= (mu(H) + q mu(A)) / |1 - q mu(A)|, q = N or the per-column
/// sparsity of H; clamped at 1.
inline BoundValue product_coherence_bound(double mu_h, double mu_a, int n_or_s) {
  const double q = static_cast<double>(n_or_s);
  const double denom = 1.0 - q * mu_a;
  if (denom == 0.0) throw std::domain_error("product_coherence_bound: degenerate bound, q*mu(A) = 1");
  const double raw = (mu_h + q * mu_a) / std::abs(denom);
  if (raw > 1.0) return {1.0, true};
  return {raw, false};
}

struct PerturbationBound {
  double inner = 0.0;       // bound on mu(I + VG) with delta = ||VG||_max
  BoundValue composed;      // bound on mu(A(I + VG)), clamped at 1
};

/// mu(I+VG) <= (2 delta + (s-2) delta^2) / (1 + (s-1) delta), composed with
/// the product bound at sparsity s+1.
inline PerturbationBound perturbation_coherence_bound(double delta, int s, double mu_a) {
  if (delta < 0.0 || delta >= 1.0)
    throw std::domain_error("perturbation_coherence_bound: requires 0 <= delta < 1");
  PerturbationBound out;
  out.inner = (2.0 * delta + (s - 2.0) * delta * delta) / (1.0 + (s - 1.0) * delta);
  out.composed = product_coherence_bound(out.inner, mu_a, s + 1);
  return out;
}

/// Continuum far-field coherence |sin(kh)/(kh)| (unnormalized sinc).
inline double farfield_coherence_analytic(double kh) {
  if (kh <= 0.0) throw std::invalid_argument("farfield_coherence_analytic: kh must be > 0");
  return std::abs(std::sin(kh) / kh);
}

namespace detail {

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

}  // namespace detail

/// Closed form for the coherence of A(I + V Gamma) with a single scatterer at
/// r_*, in the continuum direction limit. Probes at distances d_j, d_l from
/// the scatterer, separated by pair_dist. Averaging e^{ik x.(r_j - r_l)} over
/// the sphere gives sinc terms; with a(d) = k^2 h^3 eta0 / d and phi = k d,
///   <f_j, f_l> = sinc(k |r_j-r_l|) + a_l e^{-i phi_l} sinc(phi_j)
///                + a_j e^{i phi_j} sinc(phi_l) + a_j a_l e^{i(phi_j-phi_l)}
///   ||f||^2    = 1 + a sin(2 phi)/phi + a^2 .
inline double single_scatterer_pair_value(double eta0, double k, double h, double d_j, double d_l,
                                          double pair_dist) {
  if (d_j <= 0.0 || d_l <= 0.0)
    throw std::domain_error("single_scatterer_pair_value: probe coincides with the scatterer");
  if (pair_dist <= 0.0 || pair_dist > d_j + d_l || pair_dist < std::abs(d_j - d_l))
    throw std::invalid_argument("single_scatterer_pair_value: infeasible probe geometry");
  const double strength = k * k * h * h * h * eta0;
  const double a_j = strength / d_j;
  const double a_l = strength / d_l;
  const double phi_j = k * d_j;
  const double phi_l = k * d_l;
  const Complex cross = detail::sinc(k * pair_dist) +
                        a_l * Complex(std::cos(phi_l), -std::sin(phi_l)) * detail::sinc(phi_j) +
                        a_j * Complex(std::cos(phi_j), std::sin(phi_j)) * detail::sinc(phi_l) +
                        a_j * a_l * Complex(std::cos(phi_j - phi_l), std::sin(phi_j - phi_l));
  const double norm_j = 1.0 + a_j * std::sin(2.0 * phi_j) / phi_j + a_j * a_j;
  const double norm_l = 1.0 + a_l * std::sin(2.0 * phi_l) / phi_l + a_l * a_l;
  return std::abs(cross) / std::sqrt(norm_j * norm_l);
}

struct ProbeFamily {
  double pair_separation = 0.0;  // |r_j - r_l|; 0 selects the grid spacing h
  double min_distance = 0.0;     // sweep start; 0 selects h
  double max_distance = 0.0;     // sweep end; 0 selects 3 wavelengths
  int samples = 4096;
};

struct SingleScattererCoherence {
  double value = 0.0;
  double argmax_distance = 0.0;
};

inline std::vector<std::pair<double, double>> single_scatterer_curve(double eta0, double k, double h,
                                                                     const ProbeFamily& family) {
  ProbeFamily fam = family;
  if (fam.pair_separation <= 0.0) fam.pair_separation = h;
  if (fam.min_distance <= 0.0) fam.min_distance = h;
  if (fam.max_distance <= 0.0) fam.max_distance = 3.0;
  if (fam.samples < 2) throw std::invalid_argument("single_scatterer_curve: needs >= 2 samples");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(fam.samples);
  for (int i = 0; i < fam.samples; ++i) {
    const double d = fam.min_distance +
                     (fam.max_distance - fam.min_distance) * i / (fam.samples - 1.0);
    curve.emplace_back(d, single_scatterer_pair_value(eta0, k, h, d, d, fam.pair_separation));
  }
  return curve;
}

/// Maximum of the closed form over the equidistant probe family
/// |r_j - r_l| = pair_separation, |r_j - r_*| = |r_l - r_*| = d. This family
/// is the numerically verified maximizer of the full expression.
inline SingleScattererCoherence single_scatterer_coherence(double eta0, double kh, double k, double h,
                                                           const ProbeFamily& family = {}) {
  if (std::abs(kh - k * h) > 1e-9 * std::max(1.0, std::abs(kh)))
    throw std::invalid_argument("single_scatterer_coherence: kh inconsistent with k and h");
  auto curve = single_scatterer_curve(eta0, k, h, family);
  SingleScattererCoherence best;
  for (const auto& [d, val] : curve) {
    if (val > best.value) {
      best.value = val;
      best.argmax_distance = d;
    }
  }
  // Golden-section refinement around the sampled maximum.
  double lo = std::max(curve.front().first, best.argmax_distance - 2.0 * (curve[1].first - curve[0].first));
  double hi = std::min(curve.back().first, best.argmax_distance + 2.0 * (curve[1].first - curve[0].first));
  const double gr = 0.6180339887498949;
  const double pair = family.pair_separation > 0.0 ? family.pair_separation : h;
  auto f = [&](double d) { return single_scatterer_pair_value(eta0, k, h, d, d, pair); };
  for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
    const double m1 = hi - gr * (hi - lo);
    const double m2 = lo + gr * (hi - lo);
    if (f(m1) < f(m2))
      lo = m1;
    else
      hi = m2;
  }
  const double d_ref = 0.5 * (lo + hi);
  const double v_ref = f(d_ref);
  if (v_ref > best.value) {
    best.value = v_ref;
    best.argmax_distance = d_ref;
  }
  return best;
}

/// Slow global validator for the maximizer family: coarse grid over
/// (d_j, d_l) with the pair separation fixed. d_min reflects the probe
/// geometry; on a voxel grid no probe sits closer than h to the scatterer.
inline double single_scatterer_global_search(double eta0, double k, double h, double pair_dist,
                                             double d_min, double d_max, int steps) {
  double best = 0.0;
  for (int i = 0; i < steps; ++i)
    for (int j = 0; j < steps; ++j) {
      const double dj = d_min + (d_max - d_min) * i / (steps - 1.0);
      const double dl = d_min + (d_max - d_min) * j / (steps - 1.0);
      if (pair_dist > dj + dl || pair_dist < std::abs(dj - dl)) continue;
      best = std::max(best, single_scatterer_pair_value(eta0, k, h, dj, dl, pair_dist));
    }
  return best;
}

/// Exact coherence of the order-M linearized operator A sum_m (V Gamma)^m
/// (or A (I - V Gamma)^{-1} at the full order).
inline CoherenceReport linearized_coherence_numeric(const ComplexMatrix& A, const ComplexVector& v_diag,
                                                    const GammaView& gamma, int order) {
  const ComplexMatrix lin = linearized_operator(A, v_diag, gamma, order);
  return mutual_coherence(lin);
}

}  // namespace scatter
