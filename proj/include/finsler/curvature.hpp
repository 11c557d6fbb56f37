#pragma once

// Riemann and flag curvature of the spray, distortion, S-curvature, weighted
// and mixed weighted Ricci curvature, the non-Riemannian tensors T, U, divC,
// and the comparison function ct_c.
//
//   R^i_k = 2 d_{x^k} G^i - y^j d_{x^j} d_{y^k} G^i + 2 G^j d_{y^j} d_{y^k} G^i - N^i_j N^j_k
//   tau   = log(sqrt(det g) / sigma)
//   S     = y^i d_i tau,  S' = y^i d_i S   (d_i the horizontal partial)

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "finsler/connection.hpp"

namespace finsler {

inline Mat riemann_curvature(const GeometryJets& gj) {
  const int n = gj.n;
  Mat R = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const Jet& Gi = gj.G[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      double r = 2.0 * Gi.derivative({k});
      for (int j = 0; j < n; ++j) {
        r -= gj.y[j] * Gi.derivative({j, n + k});
        r += 2.0 * gj.G[static_cast<std::size_t>(j)].value() * Gi.derivative({n + j, n + k});
        r -= gj.N(i, j).value() * gj.N(j, k).value();
      }
      R(i, k) = r;
    }
  }
  return R;
}

inline Mat riemann_curvature(const MetricSpec& spec, const Vec& x, const Vec& y) {
  return riemann_curvature(geometry_jets(spec, x, y, 4));
}

inline double flag_curvature(const MetricSpec& spec, const Vec& x, const Vec& y, const Vec& u) {
  auto gj = geometry_jets(spec, x, y, 4);
  Mat R = riemann_curvature(gj);
  Mat g = connection_frame(gj).base.g;
  double den = y.dot(g * y) * u.dot(g * u) - std::pow(y.dot(g * u), 2);
  if (!(den > 1e-14 * y.dot(g * y) * u.dot(g * u))) fail(ErrorCode::InvalidArgument, "flag transverse edge is parallel to the flagpole");
  return (R * u).dot(g * u) / den;
}

inline double distortion(const MetricSpec& spec, const Vec& x, const Vec& y) {
  require_nonzero(y);
  Mat g = fundamental_matrix(spec, x, y);
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularMetric, "distortion: g is not positive definite");
  double sigma = spec.density(x);
  if (!(sigma > 0.0)) fail(ErrorCode::NonpositiveDensity, "measure density must be positive");
  double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * log_det - std::log(sigma);
}

/// Horizontal gradient of the distortion, (d_i tau)(x, y).
inline Vec distortion_gradient(const GeometryJets& gj) {
  Vec d(gj.n);
  for (int i = 0; i < gj.n; ++i) d[i] = gj.delta(gj.tau, i).value();
  return d;
}

struct SCurvature {
  double S = 0.0;
  double S_dot = 0.0;
  // Geodesic cross-check: S from differencing tau, S' from differencing S.
  std::optional<double> S_geodesic;
  std::optional<double> S_dot_geodesic;
};

namespace detail {

inline std::pair<double, double> s_pair(const GeometryJets& gj) {
  const int n = gj.n;
  Jet s = gj.delta(gj.tau, 0) * gj.y_var[0];
  for (int i = 1; i < n; ++i) s += gj.delta(gj.tau, i) * gj.y_var[static_cast<std::size_t>(i)];
  double sd = 0.0;
  for (int i = 0; i < n; ++i) sd += gj.y[i] * gj.delta(s, i).value();
  return {s.value(), sd};
}

}  // namespace detail

inline SCurvature s_curvature(const GeometryJets& gj) {
  auto [s, sd] = detail::s_pair(gj);
  return {s, sd, std::nullopt, std::nullopt};
}

/// S and S' by jets, plus 5-point differences along the integrated geodesic.
inline SCurvature s_curvature(const MetricSpec& spec, const Vec& x, const Vec& y, bool geodesic_check = true, double h = 1e-3) {
  SCurvature out = s_curvature(geometry_jets(spec, x, y, 4));
  if (!geodesic_check) return out;
  double tau[5], s[5];
  for (int m = -2; m <= 2; ++m) {
    Vec xx = x, vv = y;
    for (int r = 0; r < std::abs(m); ++r) detail::geodesic_rk4_step(spec, xx, vv, m > 0 ? h : -h);
    tau[m + 2] = distortion(spec, xx, vv);
    s[m + 2] = detail::s_pair(geometry_jets(spec, xx, vv, 4)).first;
  }
  out.S_geodesic = (tau[0] - 8 * tau[1] + 8 * tau[3] - tau[4]) / (12 * h);
  out.S_dot_geodesic = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * h);
  return out;
}

// ---------------------------------------------------------------------------
// Weighted Ricci curvature

/// A curvature value that may be the explicit -infinity state.
struct WeightedValue {
  enum class State { Finite, NegativeInfinity };
  State state = State::Finite;
  double value = 0.0;

  bool is_finite() const { return state == State::Finite; }
  static WeightedValue neg_infinity() { return {State::NegativeInfinity, -std::numeric_limits<double>::infinity()}; }
  std::string to_string() const { return is_finite() ? std::to_string(value) : "-inf"; }
};

/// Weight parameter k: a finite value >= n, or infinity.
struct WeightK {
  double k = std::numeric_limits<double>::infinity();
  static WeightK infinity() { return {}; }
  bool is_infinite() const { return std::isinf(k); }
};

inline constexpr double kSCurvatureZeroTol = 1e-12;

namespace detail {

inline WeightedValue apply_weight(double trace, double S, double S_dot, double F2, int n, WeightK k) {
  if (std::isnan(k.k) || k.k < n) fail(ErrorCode::InvalidK, "weight k must satisfy k >= n");
  if (k.is_infinite()) return {WeightedValue::State::Finite, trace + S_dot};
  if (k.k == n) {
    if (std::abs(S) <= kSCurvatureZeroTol) return {WeightedValue::State::Finite, trace + S_dot};
    return WeightedValue::neg_infinity();
  }
  return {WeightedValue::State::Finite, trace + S_dot - S * S / ((k.k - n) * F2)};
}

}  // namespace detail

inline WeightedValue weighted_ricci(const MetricSpec& spec, const Vec& x, const Vec& y, WeightK k) {
  auto gj = geometry_jets(spec, x, y, 4);
  auto s = s_curvature(gj);
  return detail::apply_weight(riemann_curvature(gj).trace(), s.S, s.S_dot, gj.L.value(), spec.dim(), k);
}

/// tr_W R_Y(Y) = g^{ij}(W) g_{Y,mj} R^m_i plus the weight corrections at Y.
inline WeightedValue mixed_weighted_ricci(const MetricSpec& spec, const Vec& x, const Vec& Y, const Vec& W, WeightK k) {
  require_nonzero(W);
  auto gj = geometry_jets(spec, x, Y, 4);
  Mat R = riemann_curvature(gj);
  Mat gY = connection_frame(gj).base.g;
  Mat gW_inv = fundamental_matrix(spec, x, W).inverse();
  double trace = (gW_inv * (gY * R).transpose()).trace();
  auto s = s_curvature(gj);
  return detail::apply_weight(trace, s.S, s.S_dot, gj.L.value(), spec.dim(), k);
}

// ---------------------------------------------------------------------------
// Non-Riemannian tensors

struct TTensor {
  Vec T;
  double dual_norm = 0.0;  // F*(x, T)
};

inline TTensor t_tensor(const MetricSpec& spec, const Vec& x, const Vec& Y, const Vec& W) {
  Vec T = distortion_gradient(geometry_jets(spec, x, Y, 4)) - distortion_gradient(geometry_jets(spec, x, W, 4));
  return {T, legendre_dual(spec, x, T).dual_norm};
}

struct UTensor {
  Vec U;
  double norm = 0.0;  // F(x, U), 0 when U = 0
};

/// g_y-orthonormal frame by Gram-Schmidt on the coordinate basis.
inline Mat orthonormal_frame(const Mat& g) {
  const auto n = g.rows();
  Mat e = Mat::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) e.col(i) -= e.col(j).dot(g * e.col(i)) * e.col(j);
    e.col(i) /= std::sqrt(e.col(i).dot(g * e.col(i)));
  }
  return e;
}

/// U(y, W) = sum_i (D^W_{e_i} E_i - D^Y_{e_i} E_i) at x, with {E_i} the Chern
/// transport of {e_i} with reference W and Y the horizontally parallel extension
/// of y. Derivative terms of E cancel, leaving e_i^j e_i^k (Γ(W) - Γ(y))^m_jk.
inline UTensor u_tensor(const MetricSpec& spec, const Vec& x, const Vec& y, const Vec& W, const Mat* frame = nullptr) {
  require_nonzero(y);
  require_nonzero(W);
  const int n = spec.dim();
  ConnectionFrame cy = chern_connection(spec, x, y);
  Tensor3 gw = chern_connection(spec, x, W).gamma;
  Mat e = frame ? *frame : orthonormal_frame(cy.base.g);
  Vec U = Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < n; ++m)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) U[m] += e(j, i) * e(k, i) * (gw(m, j, k) - cy.gamma(m, j, k));
  double norm = U.norm() > 0.0 ? eval_metric(spec, x, U) : 0.0;
  return {U, norm};
}

struct DivCartan {
  Mat divC;  // (j, k) -> F C^i_{jk|i}
  double hs_norm = 0.0;
};

/// Cartan tensor C^i_jk as jets over the geometry layout.
inline TensorFieldJet cartan_field(const GeometryJets& gj) {
  const int n = gj.n;
  TensorFieldJet t;
  t.upper = {true, false, false};
  std::vector<Jet> low(static_cast<std::size_t>(n * n * n));
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) low[static_cast<std::size_t>((l * n + j) * n + k)] = gj.g(l, j).d(n + k) * 0.5;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        Jet s = gj.g_inv(i, 0) * low[static_cast<std::size_t>(j * n + k)];
        for (int l = 1; l < n; ++l) s += gj.g_inv(i, l) * low[static_cast<std::size_t>((l * n + j) * n + k)];
        t.comps.push_back(s);
      }
  return t;
}

inline double hs_norm(const Mat& A, const Mat& g_inv) { return std::sqrt(std::max(0.0, (g_inv * A * g_inv * A.transpose()).trace())); }

inline DivCartan div_cartan(const MetricSpec& spec, const Vec& x, const Vec& y, const Vec& V) {
  require_nonzero(V);
  auto gj = geometry_jets(spec, x, y, 4);
  TensorValue dc = horizontal_derivative(cartan_field, gj);
  const int n = gj.n;
  const double F = std::sqrt(gj.L.value());
  Mat A = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i) A(j, k) += F * dc.at({i, j, k, i});
  return {A, hs_norm(A, fundamental_matrix(spec, x, V).inverse())};
}

/// ct_c(r): sqrt(c) cot(sqrt(c) r), 1/r, or sqrt(-c) coth(sqrt(-c) r).
inline double comparison_ct(double c, double r) {
  if (!(r > 0.0)) fail(ErrorCode::DomainError, "ct_c needs r > 0");
  if (c > 0.0 && r * std::sqrt(c) >= std::numbers::pi) fail(ErrorCode::DomainError, "ct_c needs r < pi/sqrt(c)");
  const double z = std::abs(c) * r * r;
  if (z < 1e-6) {
    // Series in c r^2 around c = 0.
    const double q = c * r * r;
    return (1.0 - q / 3.0 - q * q / 45.0) / r;
  }
  if (c > 0.0) return std::sqrt(c) / std::tan(std::sqrt(c) * r);
  return std::sqrt(-c) / std::tanh(std::sqrt(-c) * r);
}

/// C(N, alpha) = N + (alpha - 1) n - alpha.
inline double comparison_constant(double N, double alpha, int n) { return N + (alpha - 1.0) * n - alpha; }

// ---------------------------------------------------------------------------

struct CurvatureReport {
  Vec x, Y, W;
  Mat riemann;
  double ricci = 0.0;
  double s_curv = 0.0;
  double s_dot = 0.0;
  std::vector<std::pair<WeightK, WeightedValue>> wric;
  std::vector<std::pair<WeightK, WeightedValue>> mixed_wric;
  TTensor t;
  UTensor u;
  double divC_norm = 0.0;
  MisalignmentEstimate misalignment;
};

inline CurvatureReport curvature_report(const MetricSpec& spec, const Vec& x, const Vec& Y, const Vec& W,
                                        const std::vector<WeightK>& ks, int alpha_resolution = 32) {
  CurvatureReport rep;
  rep.x = x;
  rep.Y = Y;
  rep.W = W;
  auto gj = geometry_jets(spec, x, Y, 4);
  rep.riemann = riemann_curvature(gj);
  rep.ricci = rep.riemann.trace();
  auto s = s_curvature(gj);
  rep.s_curv = s.S;
  rep.s_dot = s.S_dot;
  for (const auto& k : ks) {
    rep.wric.emplace_back(k, detail::apply_weight(rep.ricci, s.S, s.S_dot, gj.L.value(), spec.dim(), k));
    rep.mixed_wric.emplace_back(k, mixed_weighted_ricci(spec, x, Y, W, k));
  }
  rep.t = t_tensor(spec, x, Y, W);
  rep.u = u_tensor(spec, x, Y, W);
  rep.divC_norm = div_cartan(spec, x, Y, W).hs_norm;
  rep.misalignment = misalignment(spec, x, alpha_resolution);
  return rep;
}

}  // namespace finsler
