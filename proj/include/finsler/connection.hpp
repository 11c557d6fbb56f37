#pragma once

// Spray, nonlinear connection, Chern connection, horizontal derivatives,
// geodesics and parallel transport.
//
// Index conventions (natural coordinates, L = F^2):
//   G^i    = 1/4 g^{il} (L_{x^k y^l} y^k - L_{x^l})
//   N^i_j  = dG^i/dy^j
//   d_j    = d/dx^j - N^m_j d/dy^m                     (horizontal lift)
//   Γ^i_jk = 1/2 g^{il} (d_j g_lk + d_k g_jl - d_l g_jk)  (Chern)

#include <cmath>
#include <functional>
#include <vector>

#include "finsler/jet.hpp"
#include "finsler/metric.hpp"

namespace finsler {

/// Jets in (x, y) of the metric quantities at one point of the slit tangent bundle.
/// Variables 0..n-1 are x, n..2n-1 are y. With order p:
///   L: p, g and g_inv: p-2, G: p-2, N: p-3, Γ: p-3, tau: p-2.
struct GeometryJets {
  int n = 0;
  int order = 0;
  Vec x, y;
  Jet L;
  JetMatrix g, g_inv;
  std::vector<Jet> G;
  JetMatrix N;
  std::vector<Jet> gamma;  // (i, j, k) -> Γ^i_jk, row-major
  Jet tau;
  std::vector<Jet> y_var;

  const Jet& Gamma(int i, int j, int k) const { return gamma[static_cast<std::size_t>((i * n + j) * n + k)]; }

  /// Horizontal partial d_i f = df/dx^i - N^m_i df/dy^m.
  Jet delta(const Jet& f, int i) const {
    Jet r = f.d(i);
    for (int m = 0; m < n; ++m) r -= N(m, i) * f.d(n + m);
    return r;
  }
};

inline GeometryJets geometry_jets(const MetricSpec& spec, const Vec& x, const Vec& y, int order = 4) {
  require_nonzero(y);
  if (order < 3) fail(ErrorCode::InvalidArgument, "geometry_jets needs order >= 3");
  const int n = spec.dim();
  GeometryJets gj;
  gj.n = n;
  gj.order = order;
  gj.x = x;
  gj.y = y;
  auto lay = JetLayout::get(2 * n, order);
  std::vector<Jet> xs;
  for (int i = 0; i < n; ++i) xs.push_back(Jet::variable(lay, i, x[i]));
  for (int i = 0; i < n; ++i) gj.y_var.push_back(Jet::variable(lay, n + i, y[i]));
  gj.L = spec.fiber_square<Jet, Jet>(std::span<const Jet>(xs), std::span<const Jet>(gj.y_var));

  std::vector<Jet> Ly;
  for (int i = 0; i < n; ++i) Ly.push_back(gj.L.d(n + i));
  gj.g = JetMatrix(n, Jet(JetLayout::get(2 * n, order - 2), 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gj.g(i, j) = Ly[static_cast<std::size_t>(i)].d(n + j) * 0.5;
  {
    Mat g0(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g0(i, j) = gj.g(i, j).value();
    require_positive_definite(g0, "geometry_jets");
  }
  Jet log_det;
  gj.g_inv = invert(gj.g, &log_det);
  gj.tau = log_det * 0.5 - spec.log_density<Jet>(std::span<const Jet>(xs)).truncated(order - 2);

  // Spray coefficients.
  std::vector<Jet> rhs;
  for (int l = 0; l < n; ++l) {
    Jet s = gj.L.d(l) * -1.0;
    for (int k = 0; k < n; ++k) s += gj.L.d(k).d(n + l) * gj.y_var[static_cast<std::size_t>(k)];
    rhs.push_back(s);
  }
  for (int i = 0; i < n; ++i) {
    Jet s = gj.g_inv(i, 0) * rhs[0];
    for (int l = 1; l < n; ++l) s += gj.g_inv(i, l) * rhs[static_cast<std::size_t>(l)];
    gj.G.push_back(s * 0.25);
  }
  gj.N = JetMatrix(n, Jet(JetLayout::get(2 * n, order - 3), 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gj.N(i, j) = gj.G[static_cast<std::size_t>(i)].d(n + j);

  // Chern connection.
  std::vector<Jet> dg(static_cast<std::size_t>(n * n * n));  // (l, k, j) -> d_j g_lk
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) dg[static_cast<std::size_t>((l * n + k) * n + j)] = gj.delta(gj.g(l, k), j);
  auto DG = [&](int l, int k, int j) -> const Jet& { return dg[static_cast<std::size_t>((l * n + k) * n + j)]; };
  gj.gamma.resize(static_cast<std::size_t>(n * n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        Jet s(JetLayout::get(2 * n, order - 3), 0.0);
        for (int l = 0; l < n; ++l) s += gj.g_inv(i, l) * (DG(l, k, j) + DG(j, l, k) - DG(j, k, l));
        gj.gamma[static_cast<std::size_t>((i * n + j) * n + k)] = s * 0.5;
      }
    }
  }
  return gj;
}

// ---------------------------------------------------------------------------

inline Vec spray_coeffs(const MetricSpec& spec, const Vec& x, const Vec& y) {
  require_nonzero(y);
  const int n = spec.dim();
  Jet L = metric_jet(spec, x, y, 2);
  Mat g(n, n);
  Vec rhs(n);
  for (int l = 0; l < n; ++l) {
    rhs[l] = -L.derivative({l});
    for (int k = 0; k < n; ++k) rhs[l] += L.derivative({k, n + l}) * y[k];
    for (int j = 0; j < n; ++j) g(l, j) = 0.5 * L.derivative({n + l, n + j});
  }
  Eigen::LDLT<Mat> ldlt(g);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) fail(ErrorCode::SingularMetric, "spray: g is not positive definite");
  return 0.25 * ldlt.solve(rhs);
}

inline Mat nonlinear_connection(const MetricSpec& spec, const Vec& x, const Vec& y) {
  auto gj = geometry_jets(spec, x, y, 3);
  Mat N(gj.n, gj.n);
  for (int i = 0; i < gj.n; ++i)
    for (int j = 0; j < gj.n; ++j) N(i, j) = gj.N(i, j).value();
  return N;
}

struct ConnectionFrame {
  PointFrame base;
  Vec G;
  Mat N;
  Tensor3 gamma;  // gamma(i, j, k) = Γ^i_jk
};

inline ConnectionFrame connection_frame(const GeometryJets& gj) {
  const int n = gj.n;
  ConnectionFrame cf;
  cf.base.x = gj.x;
  cf.base.y = gj.y;
  cf.base.g.resize(n, n);
  cf.base.g_inv.resize(n, n);
  cf.base.cartan = Tensor3(n);
  cf.G.resize(n);
  cf.N.resize(n, n);
  cf.gamma = Tensor3(n);
  for (int i = 0; i < n; ++i) {
    cf.G[i] = gj.G[static_cast<std::size_t>(i)].value();
    for (int j = 0; j < n; ++j) {
      cf.base.g(i, j) = gj.g(i, j).value();
      cf.base.g_inv(i, j) = gj.g_inv(i, j).value();
      cf.N(i, j) = gj.N(i, j).value();
      for (int k = 0; k < n; ++k) {
        cf.base.cartan(i, j, k) = 0.25 * gj.L.derivative({n + i, n + j, n + k});
        cf.gamma(i, j, k) = gj.Gamma(i, j, k).value();
      }
    }
  }
  cf.base.F = std::sqrt(gj.L.value());
  return cf;
}

inline ConnectionFrame chern_connection(const MetricSpec& spec, const Vec& x, const Vec& y) {
  return connection_frame(geometry_jets(spec, x, y, 3));
}

/// Components of a tensor field as jets over the geometry layout. Slot kinds
/// list the index positions (true = contravariant); components are row-major.
struct TensorFieldJet {
  std::vector<bool> upper;
  std::vector<Jet> comps;
};

/// Values of a tensor; the last slot of a horizontal derivative is the derivative index.
struct TensorValue {
  int n = 0;
  std::vector<bool> upper;
  std::vector<double> comps;

  double at(std::initializer_list<int> idx) const {
    std::size_t flat = 0;
    for (int i : idx) flat = flat * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
    return comps[flat];
  }
  double max_abs() const {
    double m = 0;
    for (double c : comps) m = std::max(m, std::abs(c));
    return m;
  }
};

using TensorFieldEvaluator = std::function<TensorFieldJet(const GeometryJets&)>;

/// Horizontal Chern covariant derivative T_{...|k} at (x, y).
inline TensorValue horizontal_derivative(const TensorFieldEvaluator& field, const GeometryJets& gj) {
  const int n = gj.n;
  TensorFieldJet t = field(gj);
  const int rank = static_cast<int>(t.upper.size());
  std::size_t count = 1;
  for (int r = 0; r < rank; ++r) count *= static_cast<std::size_t>(n);
  if (t.comps.size() != count) fail(ErrorCode::InvalidArgument, "tensor field has wrong component count");
  TensorValue out;
  out.n = n;
  out.upper = t.upper;
  out.upper.push_back(false);
  out.comps.assign(count * static_cast<std::size_t>(n), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(rank));
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t rem = c;
    for (int r = rank - 1; r >= 0; --r) {
      idx[static_cast<std::size_t>(r)] = static_cast<int>(rem % static_cast<std::size_t>(n));
      rem /= static_cast<std::size_t>(n);
    }
    for (int k = 0; k < n; ++k) {
      double v = gj.delta(t.comps[c], k).value();
      for (int r = 0; r < rank; ++r) {
        int stride = 1;
        for (int q = r + 1; q < rank; ++q) stride *= n;
        const int a = idx[static_cast<std::size_t>(r)];
        for (int m = 0; m < n; ++m) {
          std::size_t cm = c + static_cast<std::size_t>((m - a) * stride);
          if (t.upper[static_cast<std::size_t>(r)]) v += gj.Gamma(a, m, k).value() * t.comps[cm].value();
          else v -= gj.Gamma(m, a, k).value() * t.comps[cm].value();
        }
      }
      out.comps[c * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)] = v;
    }
  }
  return out;
}

inline TensorValue horizontal_derivative(const TensorFieldEvaluator& field, const MetricSpec& spec, const Vec& x, const Vec& y) {
  return horizontal_derivative(field, geometry_jets(spec, x, y, 4));
}

// ---------------------------------------------------------------------------
// Geodesics

struct GeodesicSample {
  double t;
  Vec x, v;
};

struct GeodesicPath {
  std::vector<GeodesicSample> samples;
  double step = 0.0;
  double drift = 0.0;  // max |F(x, v) - F(x0, v0)|

  /// Cubic Hermite interpolation of (x, v) between samples.
  std::pair<Vec, Vec> state_at(double t) const {
    const double t0 = samples.front().t;
    double s = (t - t0) / step;
    auto i = static_cast<std::size_t>(std::clamp(std::floor(s), 0.0, static_cast<double>(samples.size() - 2)));
    const auto& a = samples[i];
    const auto& b = samples[i + 1];
    const double h = b.t - a.t, u = (t - a.t) / h;
    const double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u, h01 = -2 * u * u * u + 3 * u * u,
                 h11 = u * u * u - u * u;
    const double d00 = 6 * u * u - 6 * u, d10 = 3 * u * u - 4 * u + 1, d01 = -6 * u * u + 6 * u, d11 = 3 * u * u - 2 * u;
    Vec x = h00 * a.x + h10 * h * a.v + h01 * b.x + h11 * h * b.v;
    Vec v = (d00 * a.x + d01 * b.x) / h + d10 * a.v + d11 * b.v;
    return {x, v};
  }
};

namespace detail {

inline void check_in_chart(const MetricSpec& spec, const Vec& x) {
  if (!spec.chart().contains(x)) fail(ErrorCode::LeftChart, "path left the chart box");
}

/// One classical RK4 step of x'' = -2 G(x, x'); h may be negative.
inline void geodesic_rk4_step(const MetricSpec& spec, Vec& x, Vec& v, double h) {
  auto acc = [&](const Vec& xx, const Vec& vv) {
    check_in_chart(spec, xx);
    return Vec(-2.0 * spray_coeffs(spec, xx, vv));
  };
  Vec k1x = v, k1v = acc(x, v);
  Vec k2x = v + 0.5 * h * k1v, k2v = acc(x + 0.5 * h * k1x, k2x);
  Vec k3x = v + 0.5 * h * k2v, k3v = acc(x + 0.5 * h * k2x, k3x);
  Vec k4x = v + h * k3v, k4v = acc(x + h * k3x, k4x);
  x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
  v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  check_in_chart(spec, x);
}

}  // namespace detail

inline GeodesicPath integrate_geodesic(const MetricSpec& spec, const Vec& x0, const Vec& y0, double t_max, double step = 1e-3) {
  require_nonzero(y0);
  if (!(step > 0.0)) fail(ErrorCode::InvalidArgument, "geodesic step must be positive");
  detail::check_in_chart(spec, x0);
  const auto steps = static_cast<long>(std::max(1.0, std::ceil(std::abs(t_max) / step - 1e-9)));
  const double h = t_max / static_cast<double>(steps);
  GeodesicPath path;
  path.step = std::abs(h);
  Vec x = x0, v = y0;
  const double f0 = eval_metric(spec, x0, y0);
  path.samples.push_back({0.0, x, v});
  for (long s = 1; s <= steps; ++s) {
    detail::geodesic_rk4_step(spec, x, v, h);
    path.samples.push_back({s * h, x, v});
    path.drift = std::max(path.drift, std::abs(eval_metric(spec, x, v) - f0));
  }
  return path;
}

/// Anything that supplies (x(t), x'(t)) on [t_begin, t_end].
struct CurvePath {
  double t_begin = 0.0, t_end = 0.0, step = 1e-3;
  std::function<std::pair<Vec, Vec>(double)> state;

  static CurvePath from(const GeodesicPath& g) {
    return {g.samples.front().t, g.samples.back().t, g.step, [g](double t) { return g.state_at(t); }};
  }

  /// Closed polygon traversed at unit parameter speed per edge.
  static CurvePath polygon(std::vector<Vec> vertices, int steps_per_edge) {
    const auto edges = vertices.size();
    auto state = [vertices, edges](double t) {
      auto e = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(edges - 1)));
      const Vec& a = vertices[e];
      const Vec& b = vertices[(e + 1) % edges];
      double u = t - static_cast<double>(e);
      return std::make_pair(Vec(a + u * (b - a)), Vec(b - a));
    };
    return {0.0, static_cast<double>(edges), 1.0 / steps_per_edge, state};
  }
};

enum class TransportReference { PathVelocity, FixedField };

struct TransportResult {
  std::vector<double> t;
  std::vector<Vec> v;
};

/// Solves v'^i + Γ^i_jk(x, ref) x'^j v^k = 0 along the path with RK4.
inline TransportResult parallel_transport(const MetricSpec& spec, const CurvePath& path, const Vec& v0,
                                          TransportReference reference, const Vec& field = Vec()) {
  require_nonzero(v0);
  if (reference == TransportReference::FixedField) require_nonzero(field);
  auto rhs = [&](double t, const Vec& v) {
    auto [x, xd] = path.state(t);
    detail::check_in_chart(spec, x);
    const Vec& ref = reference == TransportReference::PathVelocity ? xd : field;
    Tensor3 gam = chern_connection(spec, x, ref).gamma;
    const int n = spec.dim();
    Vec out = Vec::Zero(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) out[i] -= gam(i, j, k) * xd[j] * v[k];
    return out;
  };
  TransportResult res;
  const auto steps = static_cast<long>(std::llround((path.t_end - path.t_begin) / path.step));
  const double h = (path.t_end - path.t_begin) / static_cast<double>(steps);
  Vec v = v0;
  double t = path.t_begin;
  res.t.push_back(t);
  res.v.push_back(v);
  for (long s = 0; s < steps; ++s) {
    // Stage times are nudged inside the step so polygon corners are never sampled.
    Vec k1 = rhs(t + 1e-12 * h, v);
    Vec k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1);
    Vec k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2);
    Vec k4 = rhs(t + h - 1e-12 * h, v + h * k3);
    v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    t = path.t_begin + (s + 1) * h;
    res.t.push_back(t);
    res.v.push_back(v);
  }
  return res;
}

}  // namespace finsler
