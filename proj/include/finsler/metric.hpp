#pragma once

// Metric families, the fundamental and Cartan tensors, the Legendre transform
// and the misalignment constant.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "finsler/error.hpp"
#include "finsler/expression.hpp"
#include "finsler/jet.hpp"

namespace finsler {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Fully symmetric-or-not 3-index array, row-major (i, j, k).
struct Tensor3 {
  int n = 0;
  std::vector<double> v;

  Tensor3() = default;
  explicit Tensor3(int n_) : n(n_), v(static_cast<std::size_t>(n_ * n_ * n_), 0.0) {}
  double& operator()(int i, int j, int k) { return v[static_cast<std::size_t>((i * n + j) * n + k)]; }
  double operator()(int i, int j, int k) const { return v[static_cast<std::size_t>((i * n + j) * n + k)]; }
  double max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
};

struct Box {
  Vec lo, hi;

  bool contains(const Vec& x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }
};

enum class Family { Euclidean, Riemannian, Randers, Conformal };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Euclidean: return "euclidean";
    case Family::Riemannian: return "riemannian";
    case Family::Randers: return "randers";
    case Family::Conformal: return "conformal";
  }
  return "?";
}

struct Measure {
  enum class Kind { Lebesgue, Density };
  Kind kind = Kind::Lebesgue;
  Expr sigma;  // used when kind == Density

  static Measure lebesgue() { return {}; }
  static Measure density(Expr s) { return {Kind::Density, std::move(s)}; }
};

/// A parametric Finsler metric on a box chart together with a volume measure.
///
/// Families:
///   Euclidean   F^2 = |y|^2
///   Riemannian  F^2 = a_ij(x) y^i y^j
///   Randers     F   = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i
///   Conformal   F   = exp(phi(x)) F_base(x, y)
class MetricSpec {
 public:
  static MetricSpec euclidean(int n, Box chart) {
    MetricSpec s(Family::Euclidean, n, std::move(chart));
    s.validate();
    return s;
  }

  static MetricSpec riemannian(int n, std::vector<Expr> a, Box chart) {
    MetricSpec s(Family::Riemannian, n, std::move(chart));
    s.set_a(std::move(a));
    s.validate();
    return s;
  }

  static MetricSpec randers(int n, std::vector<Expr> a, std::vector<Expr> b, Box chart) {
    MetricSpec s(Family::Randers, n, std::move(chart));
    s.set_a(std::move(a));
    if (static_cast<int>(b.size()) != n) fail(ErrorCode::InvalidArgument, "randers: b needs n components");
    s.b_ = std::move(b);
    s.validate();
    return s;
  }

  static MetricSpec conformal(const MetricSpec& base, Expr phi) {
    MetricSpec s(Family::Conformal, base.dim_, base.chart_);
    s.base_ = std::make_shared<const MetricSpec>(base);
    s.phi_ = std::move(phi);
    s.validate();
    return s;
  }

  /// Convenience parser: a given as n*n strings (row-major), b as n strings.
  static std::vector<Expr> parse_all(const std::vector<std::string>& src, int n) {
    std::vector<Expr> out;
    for (const auto& s : src) out.push_back(Expr::parse(s, n));
    return out;
  }

  MetricSpec with_measure(Measure m) const {
    MetricSpec s = *this;
    s.measure_ = std::move(m);
    s.validate();
    return s;
  }

  Family family() const { return family_; }
  int dim() const { return dim_; }
  const Box& chart() const { return chart_; }
  const Measure& measure() const { return measure_; }
  const MetricSpec* base() const { return base_.get(); }

  /// F^2 is a quadratic form in y (Euclidean, Riemannian, conformal Riemannian).
  bool is_fiber_quadratic() const {
    switch (family_) {
      case Family::Euclidean:
      case Family::Riemannian: return true;
      case Family::Randers: return false;
      case Family::Conformal: return base_->is_fiber_quadratic();
    }
    return false;
  }

  /// Coefficients do not depend on x (Minkowski space on the chart).
  bool is_translation_invariant() const {
    auto all_const = [](const std::vector<Expr>& v) {
      return std::all_of(v.begin(), v.end(), [](const Expr& e) { return e.is_constant(); });
    };
    switch (family_) {
      case Family::Euclidean: return true;
      case Family::Riemannian: return all_const(a_);
      case Family::Randers: return all_const(a_) && all_const(b_);
      case Family::Conformal: return phi_.is_constant() && base_->is_translation_invariant();
    }
    return false;
  }

  /// F^2(x, y); coefficients are evaluated in TX, the fiber form in TY.
  template <class TX, class TY>
  TY fiber_square(std::span<const TX> x, std::span<const TY> y) const {
    using std::exp;
    using std::sqrt;
    switch (family_) {
      case Family::Euclidean: {
        TY s = y[0] * y[0];
        for (int i = 1; i < dim_; ++i) s += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        return s;
      }
      case Family::Riemannian: return quadratic<TX, TY>(x, y);
      case Family::Randers: {
        TY alpha = sqrt(quadratic<TX, TY>(x, y));
        TY beta = b_[0].eval<TX>(x) * y[0];
        for (int i = 1; i < dim_; ++i) beta += b_[static_cast<std::size_t>(i)].eval<TX>(x) * y[static_cast<std::size_t>(i)];
        TY f = alpha + beta;
        return f * f;
      }
      case Family::Conformal: {
        TX ph = phi_.eval<TX>(x);
        return base_->fiber_square<TX, TY>(x, y) * exp(ph * 2.0);
      }
    }
    fail(ErrorCode::InvalidArgument, "unknown family");
  }

  /// a_ij(x) for fiber-quadratic families (including the conformal factor).
  Mat quadratic_form(const Vec& x) const {
    const int n = dim_;
    switch (family_) {
      case Family::Euclidean: return Mat::Identity(n, n);
      case Family::Riemannian: return quadratic_form_raw(x);
      case Family::Conformal:
        if (base_->is_fiber_quadratic()) return base_->quadratic_form(x) * std::exp(2.0 * phi_(as_span(x)));
        break;
      case Family::Randers: break;
    }
    fail(ErrorCode::InvalidArgument, "quadratic_form requires a fiber-quadratic family");
  }

  /// The a_ij(x) coefficient matrix of Riemannian and Randers families.
  Mat quadratic_form_raw(const Vec& x) const {
    const int n = dim_;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = a_[static_cast<std::size_t>(i * n + j)](as_span(x));
    return a;
  }

  double density(const Vec& x) const {
    if (measure_.kind == Measure::Kind::Lebesgue) return 1.0;
    return measure_.sigma(as_span(x));
  }

  /// log sigma as a jet in the chart variables (x_jets share one layout).
  template <class T>
  T log_density(std::span<const T> x) const {
    using std::log;
    if (measure_.kind == Measure::Kind::Lebesgue) return lift(0.0, x[0]);
    T s = measure_.sigma.eval<T>(x);
    if (value_of(s) <= 0.0) fail(ErrorCode::NonpositiveDensity, "measure density must be positive");
    return log(s);
  }

  const std::vector<Expr>& a_coeffs() const { return a_; }
  const std::vector<Expr>& b_coeffs() const { return b_; }
  const Expr& phi() const { return phi_; }

  /// Deterministic sample net of the chart: 3 points per axis.
  std::vector<Vec> chart_net() const {
    std::vector<Vec> pts;
    const int per = 3;
    int total = 1;
    for (int i = 0; i < dim_; ++i) total *= per;
    for (int id = 0; id < total; ++id) {
      Vec x(dim_);
      int r = id;
      for (int i = 0; i < dim_; ++i) {
        int k = r % per;
        r /= per;
        x[i] = chart_.lo[i] + (chart_.hi[i] - chart_.lo[i]) * (0.5 + k) / per;
      }
      pts.push_back(x);
    }
    return pts;
  }

  void validate() const;

 private:
  MetricSpec(Family f, int n, Box chart) : family_(f), dim_(n), chart_(std::move(chart)) {
    if (n < 1 || n > 4) fail(ErrorCode::InvalidArgument, "dimension must be in 1..4");
    if (chart_.lo.size() != n || chart_.hi.size() != n) fail(ErrorCode::InvalidArgument, "chart box has wrong dimension");
    for (int i = 0; i < n; ++i)
      if (!(chart_.lo[i] < chart_.hi[i])) fail(ErrorCode::InvalidArgument, "degenerate chart box");
  }

  void set_a(std::vector<Expr> a) {
    if (static_cast<int>(a.size()) != dim_ * dim_) fail(ErrorCode::InvalidArgument, "a needs n*n components");
    a_ = std::move(a);
  }

  template <class TX, class TY>
  TY quadratic(std::span<const TX> x, std::span<const TY> y) const {
    const int n = dim_;
    TY s = lift(0.0, y[0]);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        TX aij = a_[static_cast<std::size_t>(i * n + j)].eval<TX>(x);
        s += (aij * y[static_cast<std::size_t>(i)]) * y[static_cast<std::size_t>(j)];
      }
    }
    return s;
  }

  Family family_;
  int dim_;
  Box chart_;
  Measure measure_;
  std::vector<Expr> a_;
  std::vector<Expr> b_;
  std::shared_ptr<const MetricSpec> base_;
  Expr phi_;
};

// ---------------------------------------------------------------------------
// Sphere sampling helpers

/// Unit Euclidean direction from n-1 hyperspherical angles.
inline Vec direction_from_angles(std::span<const double> ang, int n) {
  Vec v(n);
  if (n == 1) {
    v[0] = ang.empty() || ang[0] < 0.5 ? 1.0 : -1.0;
    return v;
  }
  double s = 1.0;
  for (int i = 0; i < n - 1; ++i) {
    v[i] = s * std::cos(ang[static_cast<std::size_t>(i)]);
    s *= std::sin(ang[static_cast<std::size_t>(i)]);
  }
  v[n - 1] = s;
  return v;
}

/// Angle grid over the unit sphere with `res` samples per angle.
inline std::vector<std::vector<double>> sphere_angle_grid(int n, int res) {
  std::vector<std::vector<double>> out;
  if (n == 1) return {{0.0}, {1.0}};
  int total = 1;
  for (int i = 0; i < n - 1; ++i) total *= res;
  for (int id = 0; id < total; ++id) {
    std::vector<double> a(static_cast<std::size_t>(n - 1));
    int r = id;
    for (int i = 0; i < n - 1; ++i) {
      int k = r % res;
      r /= res;
      if (i == n - 2) a[static_cast<std::size_t>(i)] = 2.0 * std::numbers::pi * k / res;
      else a[static_cast<std::size_t>(i)] = std::numbers::pi * (k + 0.5) / res;
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<Vec> sphere_samples(int n, int res) {
  std::vector<Vec> out;
  for (const auto& a : sphere_angle_grid(n, res)) out.push_back(direction_from_angles(a, n));
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation

inline void require_nonzero(const Vec& y) {
  if (y.size() == 0 || y.isZero(0.0)) fail(ErrorCode::ZeroFiberVector, "fiber vector must be nonzero");
}

inline double eval_metric(const MetricSpec& spec, const Vec& x, const Vec& y) {
  require_nonzero(y);
  double f2 = spec.fiber_square<double, double>(as_span(x), as_span(y));
  if (!(f2 > 0.0)) fail(ErrorCode::NotStronglyConvex, "F(x,y) is not positive");
  return std::sqrt(f2);
}

/// Jet of F^2 in the 2n variables (x^1..x^n, y^1..y^n) around (x, y).
inline Jet metric_jet(const MetricSpec& spec, const Vec& x, const Vec& y, int order = 4) {
  require_nonzero(y);
  const int n = spec.dim();
  auto lay = JetLayout::get(2 * n, order);
  std::vector<Jet> xs, ys;
  for (int i = 0; i < n; ++i) xs.push_back(Jet::variable(lay, i, x[i]));
  for (int i = 0; i < n; ++i) ys.push_back(Jet::variable(lay, n + i, y[i]));
  return spec.fiber_square<Jet, Jet>(std::span<const Jet>(xs), std::span<const Jet>(ys));
}

/// Jet of F^2(x, .) in the n fiber variables around y, x held fixed.
inline Jet fiber_jet(const MetricSpec& spec, const Vec& x, const Vec& y, int order) {
  require_nonzero(y);
  const int n = spec.dim();
  auto lay = JetLayout::get(n, order);
  std::vector<Jet> ys;
  for (int i = 0; i < n; ++i) ys.push_back(Jet::variable(lay, i, y[i]));
  return spec.fiber_square<double, Jet>(as_span(x), std::span<const Jet>(ys));
}

/// g_ij(x, y) without the Cartan tensor.
inline Mat fundamental_matrix(const MetricSpec& spec, const Vec& x, const Vec& y) {
  require_nonzero(y);
  if (spec.is_fiber_quadratic()) return spec.quadratic_form(x);
  const int n = spec.dim();
  Jet L = fiber_jet(spec, x, y, 2);
  Mat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = 0.5 * L.derivative({i, j});
  return g;
}

struct PointFrame {
  Vec x, y;
  Mat g, g_inv;
  Tensor3 cartan;
  double F = 0.0;
};

inline void require_positive_definite(const Mat& g, const char* where) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  if (es.eigenvalues().minCoeff() <= 0.0) fail(ErrorCode::SingularMetric, std::string(where) + ": g is not positive definite");
}

inline PointFrame fundamental_tensor(const MetricSpec& spec, const Vec& x, const Vec& y) {
  require_nonzero(y);
  const int n = spec.dim();
  PointFrame pf;
  pf.x = x;
  pf.y = y;
  Jet L = fiber_jet(spec, x, y, 3);
  pf.g.resize(n, n);
  pf.cartan = Tensor3(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      pf.g(i, j) = 0.5 * L.derivative({i, j});
      for (int k = 0; k < n; ++k) pf.cartan(i, j, k) = 0.25 * L.derivative({i, j, k});
    }
  }
  require_positive_definite(pf.g, "fundamental_tensor");
  pf.g_inv = pf.g.inverse();
  pf.F = std::sqrt(L.value());
  return pf;
}

/// The forward Legendre map y -> g_y(y, .) = (1/2) dF^2/dy.
inline Vec forward_legendre(const MetricSpec& spec, const Vec& x, const Vec& y) {
  if (y.isZero(0.0)) return Vec::Zero(spec.dim());
  if (spec.is_fiber_quadratic()) return spec.quadratic_form(x) * y;
  Jet L = fiber_jet(spec, x, y, 1);
  Vec xi(spec.dim());
  for (int i = 0; i < spec.dim(); ++i) xi[i] = 0.5 * L.derivative({i});
  return xi;
}

struct LegendreResult {
  Vec grad;             // the vector dual to the covector
  double dual_norm = 0;  // F*(xi) = F(grad)
};

namespace detail {

// One Newton solve of g_y(y, .) = xi; returns false if it does not converge.
inline bool legendre_newton(const MetricSpec& spec, const Vec& x, const Vec& xi, Vec& y, int max_iter = 60) {
  const int n = spec.dim();
  const double scale = xi.norm();
  auto objective = [&](const Vec& v) { return 0.5 * spec.fiber_square<double, double>(as_span(x), as_span(v)) - xi.dot(v); };
  double phi = objective(y);
  for (int it = 0; it < max_iter; ++it) {
    Jet L = fiber_jet(spec, x, y, 2);
    Vec r(n);
    Mat g(n, n);
    for (int i = 0; i < n; ++i) {
      r[i] = 0.5 * L.derivative({i}) - xi[i];
      for (int j = 0; j < n; ++j) g(i, j) = 0.5 * L.derivative({i, j});
    }
    if (r.norm() <= 1e-14 * scale) return true;
    Vec step = g.ldlt().solve(r);
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k) {
      Vec cand = y - t * step;
      if (!cand.isZero(0.0)) {
        double pc = objective(cand);
        if (pc <= phi + 1e-13 * (1.0 + std::abs(phi))) {  // tolerate roundoff near the optimum
          y = cand;
          phi = pc;
          moved = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!moved) return r.norm() <= 1e-11 * scale;
  }
  return false;
}

}  // namespace detail

/// Dual vector and dual norm of a covector. xi = 0 maps to (0, 0).
inline LegendreResult legendre_dual(const MetricSpec& spec, const Vec& x, const Vec& xi) {
  const int n = spec.dim();
  if (xi.isZero(0.0)) return {Vec::Zero(n), 0.0};
  if (spec.is_fiber_quadratic()) {
    Mat a = spec.quadratic_form(x);
    Vec v = a.ldlt().solve(xi);
    return {v, std::sqrt(std::max(0.0, xi.dot(v)))};
  }
  Vec y = fundamental_matrix(spec, x, xi).ldlt().solve(xi);
  if (!detail::legendre_newton(spec, x, xi, y)) {
    // Brute-force the dual norm sup xi(v)/F(v) on the sphere, then polish.
    double best = -1e300;
    Vec arg;
    for (const Vec& v : sphere_samples(n, n == 2 ? 4096 : 64)) {
      double r = xi.dot(v) / eval_metric(spec, x, v);
      if (r > best) {
        best = r;
        arg = v;
      }
    }
    y = arg * (best / eval_metric(spec, x, arg));
    if (!detail::legendre_newton(spec, x, xi, y)) fail(ErrorCode::LegendreNoConvergence, "fiber Newton failed after fallback");
  }
  return {y, eval_metric(spec, x, y)};
}

struct MisalignmentEstimate {
  double sampled = 1.0;  // best ratio on the sample grid (a certified lower bound)
  double value = 1.0;    // after local ascent from the best sample
};

/// sup over V, W, Y in the indicatrix of g_V(Y,Y) / g_W(Y,Y) at x.
inline MisalignmentEstimate misalignment(const MetricSpec& spec, const Vec& x, int resolution = 32) {
  if (resolution < 16) fail(ErrorCode::InvalidArgument, "misalignment needs resolution >= 16");
  const int n = spec.dim();
  if (spec.is_fiber_quadratic() || n == 1) return {1.0, 1.0};
  auto angles = sphere_angle_grid(n, resolution);
  std::vector<Vec> dirs;
  std::vector<Mat> gs;
  for (const auto& a : angles) {
    dirs.push_back(direction_from_angles(a, n));
    gs.push_back(fundamental_matrix(spec, x, dirs.back()));
  }
  double best = 1.0;
  std::size_t bv = 0, bw = 0, by = 0;
  for (std::size_t iy = 0; iy < dirs.size(); ++iy) {
    double hi = -1.0, lo = 1e300;
    std::size_t ihi = 0, ilo = 0;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      double q = dirs[iy].dot(gs[k] * dirs[iy]);
      if (q > hi) { hi = q; ihi = k; }
      if (q < lo) { lo = q; ilo = k; }
    }
    if (hi / lo > best) {
      best = hi / lo;
      bv = ihi;
      bw = ilo;
      by = iy;
    }
  }
  MisalignmentEstimate est{best, best};

  // Gradient ascent in the angle coordinates of (V, W, Y).
  const int m = n - 1;
  std::vector<double> p;
  for (auto idx : {bv, bw, by}) p.insert(p.end(), angles[idx].begin(), angles[idx].end());
  auto ratio = [&](const std::vector<double>& q) {
    Vec v = direction_from_angles(std::span<const double>(q.data(), static_cast<std::size_t>(m)), n);
    Vec w = direction_from_angles(std::span<const double>(q.data() + m, static_cast<std::size_t>(m)), n);
    Vec yy = direction_from_angles(std::span<const double>(q.data() + 2 * m, static_cast<std::size_t>(m)), n);
    return yy.dot(fundamental_matrix(spec, x, v) * yy) / yy.dot(fundamental_matrix(spec, x, w) * yy);
  };
  double f = ratio(p);
  double step = 0.5 * std::numbers::pi / resolution;
  for (int it = 0; it < 300 && step > 1e-12; ++it) {
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto q1 = p, q2 = p;
      q1[i] += 1e-6;
      q2[i] -= 1e-6;
      grad[i] = (ratio(q1) - ratio(q2)) / 2e-6;
    }
    double gn = 0.0;
    for (double gi : grad) gn += gi * gi;
    gn = std::sqrt(gn);
    if (gn < 1e-12) break;
    auto q = p;
    for (std::size_t i = 0; i < p.size(); ++i) q[i] += step * grad[i] / gn;
    double fq = ratio(q);
    if (fq > f) {
      p = q;
      f = fq;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  est.value = std::max(best, f);
  return est;
}

inline void MetricSpec::validate() const {
  const int n = dim_;
  if (family_ == Family::Conformal && !base_) fail(ErrorCode::InvalidArgument, "conformal family needs a base metric");
  for (const Vec& x : chart_net()) {
    if (measure_.kind == Measure::Kind::Density && !(density(x) > 0.0))
      fail(ErrorCode::NonpositiveDensity, "density sigma(x) must be positive on the chart");
    const MetricSpec* rs = this;
    while (rs->family_ == Family::Conformal) rs = rs->base_.get();
    if (rs->family_ == Family::Randers) {
      Mat a = rs->quadratic_form_raw(x);
      Vec b(n);
      for (int i = 0; i < n; ++i) b[i] = rs->b_[static_cast<std::size_t>(i)](as_span(x));
      Eigen::LLT<Mat> llt(a);
      if (llt.info() != Eigen::Success) fail(ErrorCode::NotStronglyConvex, "randers: a(x) is not positive definite");
      double bn2 = b.dot(llt.solve(b));
      if (!(bn2 < 1.0)) fail(ErrorCode::NotStronglyConvex, "randers: |b|_a >= 1 at a chart sample");
    }
    for (const Vec& y : sphere_samples(n, 16)) {
      double f2 = fiber_square<double, double>(as_span(x), as_span(y));
      if (!(f2 > 0.0)) fail(ErrorCode::NotStronglyConvex, "F is not positive at a chart sample");
      Mat g = fundamental_matrix(*this, x, y);
      Eigen::SelfAdjointEigenSolver<Mat> es(g);
      if (!(es.eigenvalues().minCoeff() > 0.0)) fail(ErrorCode::NotStronglyConvex, "g is not positive definite at a chart sample");
    }
  }
}

}  // namespace finsler
