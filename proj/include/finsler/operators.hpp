#pragma once

// Pointwise differential operators of a scalar field u given by its jet at x.
//
//   ∇u          = Legendre dual of Du,   e(u) = F*^2(Du)
//   (∇^V2 u)_ij = u_ij - Γ^k_ij(x, V) u_k
//   Δ^V u       = g^{ij}(V) (∇^V2 u)_ij - u_i g^{ij}(V) d_j tau(V)
//   Δ̂u          = Δ^{∇u}u + ∇u^k ∇u^l (∇^{∇u,2} u)_kl
//   Δ̃u          = exp(e/2) Δ̂u

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "finsler/curvature.hpp"

namespace finsler {

struct FieldJet {
  Vec x;
  double u = 0.0;
  Vec du;
  Mat d2u;
  std::optional<Tensor3> d3u;
};

struct OperatorResult {
  Vec grad;
  double e = 0.0;
  Mat hess;
  double lap = 0.0;
  double exp_lap = 0.0;
  double density = 1.0;  // exp(e/2)
  double tilde_lap = 0.0;
  bool regularized = false;  // reference vector came from the shifted covector
};

inline FieldJet field_jet(const Jet& U, const Vec& x);

/// Exact jet of a closed-form field, through third derivatives.
inline FieldJet field_jet(const Expr& u, const Vec& x) {
  const int n = static_cast<int>(x.size());
  auto lay = JetLayout::get(n, 3);
  std::vector<Jet> X;
  for (int i = 0; i < n; ++i) X.push_back(Jet::variable(lay, i, x[i]));
  return field_jet(u.eval<Jet>(std::span<const Jet>(X)), x);
}

/// Unpacks an order >= 3 jet in the chart variables at x.
inline FieldJet field_jet(const Jet& U, const Vec& x) {
  const int n = static_cast<int>(x.size());
  FieldJet fj{x, U.value(), Vec(n), Mat(n, n), Tensor3(n)};
  for (int i = 0; i < n; ++i) {
    fj.du[i] = U.derivative({i});
    for (int j = 0; j < n; ++j) {
      fj.d2u(i, j) = U.derivative({i, j});
      for (int k = 0; k < n; ++k) (*fj.d3u)(i, j, k) = U.derivative({i, j, k});
    }
  }
  return fj;
}

inline constexpr double kReferenceEpsilon = 1e-12;
inline constexpr double kExpHarmonicGate = 1e-6;

inline LegendreResult nonlinear_gradient(const FieldJet& fj, const MetricSpec& spec) { return legendre_dual(spec, fj.x, fj.du); }

/// Geometric data of the reference vector V at x.
struct ReferenceData {
  Vec V;
  Mat g_inv;
  Tensor3 gamma;
  Vec dtau;  // d_i tau(x, V)
};

inline ReferenceData reference_data(const MetricSpec& spec, const Vec& x, const Vec& V) {
  if (V.norm() == 0.0) fail(ErrorCode::ZeroGradientReference, "reference vector is zero");
  auto gj = geometry_jets(spec, x, V, 3);
  auto cf = connection_frame(gj);
  ReferenceData r{V, cf.base.g_inv, cf.gamma, Vec(gj.n)};
  for (int i = 0; i < gj.n; ++i) r.dtau[i] = gj.delta(gj.tau, i).value();
  return r;
}

inline Mat covariant_hessian(const Vec& du, const Mat& d2u, const Tensor3& gamma) {
  const auto n = du.size();
  Mat h = d2u;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) h(i, j) -= gamma(static_cast<int>(k), static_cast<int>(i), static_cast<int>(j)) * du[k];
  return h;
}

inline double laplacian_with(const ReferenceData& ref, const Vec& du, const Mat& d2u) {
  Mat h = covariant_hessian(du, d2u, ref.gamma);
  return (ref.g_inv * h).trace() - du.dot(ref.g_inv * ref.dtau);
}

inline Mat finsler_hessian(const FieldJet& fj, const MetricSpec& spec) {
  if (fj.du.norm() == 0.0) fail(ErrorCode::ZeroGradientReference, "Hessian needs Du != 0");
  Vec V = nonlinear_gradient(fj, spec).grad;
  return covariant_hessian(fj.du, fj.d2u, chern_connection(spec, fj.x, V).gamma);
}

/// Δ^V u; the reference defaults to ∇u.
inline double finsler_laplacian(const FieldJet& fj, const MetricSpec& spec, const std::optional<Vec>& reference = std::nullopt) {
  Vec V;
  if (reference) {
    V = *reference;
  } else {
    if (fj.du.norm() == 0.0) fail(ErrorCode::ZeroGradientReference, "Laplacian with reference ∇u needs Du != 0");
    V = nonlinear_gradient(fj, spec).grad;
  }
  return laplacian_with(reference_data(spec, fj.x, V), fj.du, fj.d2u);
}

inline OperatorResult exp_harmonic_operator(const FieldJet& fj, const MetricSpec& spec) {
  OperatorResult r;
  auto lg = nonlinear_gradient(fj, spec);
  r.grad = lg.grad;
  r.e = lg.dual_norm * lg.dual_norm;
  Vec V = r.grad;
  if (fj.du.norm() == 0.0) {
    Vec shifted = Vec::Zero(fj.du.size());
    shifted[0] = kReferenceEpsilon;
    V = legendre_dual(spec, fj.x, shifted).grad;
    r.regularized = true;
  }
  auto ref = reference_data(spec, fj.x, V);
  r.hess = covariant_hessian(fj.du, fj.d2u, ref.gamma);
  r.lap = laplacian_with(ref, fj.du, fj.d2u);
  r.exp_lap = r.lap + r.grad.dot(r.hess * r.grad);
  r.density = std::exp(0.5 * r.e);
  r.tilde_lap = r.density * r.exp_lap;
  return r;
}

/// Principal symbol A^{ij} = g^{ij}(∇u) + ∇u^i ∇u^j of Δ̂.
inline Mat principal_symbol(const FieldJet& fj, const MetricSpec& spec) {
  auto lg = nonlinear_gradient(fj, spec);
  Vec V = lg.grad;
  if (fj.du.norm() == 0.0) {
    Vec shifted = Vec::Zero(fj.du.size());
    shifted[0] = kReferenceEpsilon;
    V = legendre_dual(spec, fj.x, shifted).grad;
  }
  return fundamental_matrix(spec, fj.x, V).inverse() + lg.grad * lg.grad.transpose();
}

namespace detail {

inline void require_exp_harmonic(const OperatorResult& op, double gate) {
  if (std::abs(op.exp_lap) > gate * (1.0 + op.e))
    fail(ErrorCode::NotExpHarmonicAt, "field is not exponentially harmonic here (|Δ̂u| = " + std::to_string(std::abs(op.exp_lap)) + ")");
}

/// Taylor jet of u around x in n variables, order 3.
inline std::vector<Jet> field_x_jets(const FieldJet& fj, Jet& U) {
  const int n = static_cast<int>(fj.x.size());
  auto lay = JetLayout::get(n, 3);
  std::vector<Jet> X, h;
  for (int i = 0; i < n; ++i) {
    X.push_back(Jet::variable(lay, i, fj.x[i]));
    h.push_back(X.back() - fj.x[i]);
  }
  U = Jet(lay, fj.u);
  for (int i = 0; i < n; ++i) {
    U += h[static_cast<std::size_t>(i)] * fj.du[i];
    for (int j = 0; j < n; ++j) {
      U += h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j)] * (0.5 * fj.d2u(i, j));
      for (int k = 0; k < n; ++k)
        U += h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(k)] * ((*fj.d3u)(i, j, k) / 6.0);
    }
  }
  return X;
}

}  // namespace detail

struct BochnerTerms {
  double lhs = 0.0;        // Δ̂^{∇u} e
  double ricci_inf = 0.0;  // Ric^∞(∇u)
  double hess_hs2 = 0.0;   // ‖∇²u‖²_{HS(∇u)}
  double de_dual2 = 0.0;   // F*^2(De)
  double residual = 0.0;
};

/// Δ̂^{∇u}e - [2 Ric^∞(∇u) + 2‖∇²u‖²_{HS(∇u)} - ½ F*^2(De)] at x.
/// A negative gate disables the exponential-harmonicity check.
inline BochnerTerms bochner_residual(const FieldJet& fj, const MetricSpec& spec, double gate = kExpHarmonicGate) {
  if (!fj.d3u) fail(ErrorCode::InvalidArgument, "Bochner residual needs third derivatives");
  if (fj.du.norm() == 0.0) fail(ErrorCode::ZeroGradientReference, "Bochner residual needs Du != 0");
  const int n = spec.dim();
  auto op = exp_harmonic_operator(fj, spec);
  if (gate >= 0.0) detail::require_exp_harmonic(op, gate);
  const Vec& V = op.grad;

  // ∇u as a jet in x: solve ½ L_y(x, Y) = Du(x) by Newton on jets.
  Jet U;
  std::vector<Jet> X = detail::field_x_jets(fj, U);
  std::vector<Jet> xi;
  for (int i = 0; i < n; ++i) xi.push_back(U.d(i));
  Jet L = metric_jet(spec, fj.x, V, 4);
  std::vector<Jet> half_Ly;
  JetMatrix gL(n, Jet());
  for (int l = 0; l < n; ++l) {
    half_Ly.push_back(L.d(n + l) * 0.5);
    for (int m = 0; m < n; ++m) gL(l, m) = L.d(n + l).d(n + m) * 0.5;
  }
  auto lay2 = JetLayout::get(n, 2);
  std::vector<Jet> Y;
  for (int i = 0; i < n; ++i) Y.push_back(Jet(lay2, V[i]));
  for (int it = 0; it < 3; ++it) {
    std::vector<Jet> subs;
    for (int i = 0; i < n; ++i) subs.push_back(X[static_cast<std::size_t>(i)].truncated(2));
    for (int i = 0; i < n; ++i) subs.push_back(Y[static_cast<std::size_t>(i)]);
    JetMatrix gm(n, Jet());
    std::vector<Jet> P;
    for (int l = 0; l < n; ++l) {
      P.push_back(compose(half_Ly[static_cast<std::size_t>(l)], subs) - xi[static_cast<std::size_t>(l)]);
      for (int m = 0; m < n; ++m) gm(l, m) = compose(gL(l, m), subs);
    }
    JetMatrix gi = invert(gm);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) Y[static_cast<std::size_t>(i)] -= gi(i, l) * P[static_cast<std::size_t>(l)];
  }
  Jet e = xi[0] * Y[0];
  for (int i = 1; i < n; ++i) e += xi[static_cast<std::size_t>(i)] * Y[static_cast<std::size_t>(i)];

  Vec de(n);
  Mat d2e(n, n);
  for (int i = 0; i < n; ++i) {
    de[i] = e.derivative({i});
    for (int j = 0; j < n; ++j) d2e(i, j) = e.derivative({i, j});
  }
  auto gj = geometry_jets(spec, fj.x, V, 4);
  auto ref = reference_data(spec, fj.x, V);
  Mat he = covariant_hessian(de, d2e, ref.gamma);
  BochnerTerms b;
  b.lhs = laplacian_with(ref, de, d2e) + V.dot(he * V);
  b.ricci_inf = riemann_curvature(gj).trace() + s_curvature(gj).S_dot;
  b.hess_hs2 = (ref.g_inv * op.hess * ref.g_inv * op.hess.transpose()).trace();
  double dn = legendre_dual(spec, fj.x, de).dual_norm;
  b.de_dual2 = dn * dn;
  b.residual = b.lhs - (2.0 * b.ricci_inf + 2.0 * b.hess_hs2 - 0.5 * b.de_dual2);
  return b;
}

struct CompositionResult {
  double lhs = 0.0;  // Δ̂^{∇u}(φ∘u)
  double rhs = 0.0;  // φ''(u) (e + e²)
  double residual = 0.0;
};

/// Δ̂^{∇u}(φ∘u) - φ''(u)(e + e²), with the composed field's jet built by the chain rule.
inline CompositionResult composition_identity(const FieldJet& fj, const std::function<double(double)>& phi1,
                                              const std::function<double(double)>& phi2, const MetricSpec& spec,
                                              double gate = kExpHarmonicGate) {
  auto op = exp_harmonic_operator(fj, spec);
  if (gate >= 0.0) detail::require_exp_harmonic(op, gate);
  const double p1 = phi1(fj.u), p2 = phi2(fj.u);
  Vec dw = p1 * fj.du;
  Mat d2w = p1 * fj.d2u + p2 * fj.du * fj.du.transpose();
  Vec V = op.grad;
  if (op.regularized) {
    Vec shifted = Vec::Zero(fj.du.size());
    shifted[0] = kReferenceEpsilon;
    V = legendre_dual(spec, fj.x, shifted).grad;
  }
  auto ref = reference_data(spec, fj.x, V);
  CompositionResult c;
  c.lhs = laplacian_with(ref, dw, d2w) + op.grad.dot(covariant_hessian(dw, d2w, ref.gamma) * op.grad);
  c.rhs = p2 * (op.e + op.e * op.e);
  c.residual = c.lhs - c.rhs;
  return c;
}

}  // namespace finsler
