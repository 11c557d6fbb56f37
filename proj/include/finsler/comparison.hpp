#pragma once

// Forward distance from a base point and probes of the Laplacian
// comparison bound for it.

#include <optional>
#include <vector>

#include "finsler/curvature.hpp"
#include "finsler/operators.hpp"

namespace finsler {

struct ShootingOptions {
  double step = 1e-3;
  int max_iter = 30;
  double tol = 1e-11;
};

/// r(x) = d(x0, x) with its first two derivatives; d3u is left empty.
struct DistanceJet {
  double r = 0.0;
  FieldJet jet;
  int shooting_iterations = 0;  // 0 for the closed form
};

namespace detail {

inline std::pair<Vec, Vec> geodesic_endpoint(const MetricSpec& spec, const Vec& x0, const Vec& v, double step) {
  auto path = integrate_geodesic(spec, x0, v, 1.0, std::min(step, 1.0 / 16));
  return {path.samples.back().x, path.samples.back().v};
}

/// Initial velocity of the geodesic from x0 reaching x at t = 1, by Newton
/// iteration with a finite-difference Jacobian.
inline Vec shoot(const MetricSpec& spec, const Vec& x0, const Vec& x, Vec v, const ShootingOptions& opt, int& iterations) {
  const int n = spec.dim();
  auto residual = [&](const Vec& w) -> std::optional<Vec> {
    try {
      return geodesic_endpoint(spec, x0, w, opt.step).first - x;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LeftChart) throw;
      return std::nullopt;
    }
  };
  auto res = residual(v);
  for (int k = 0; k < 40 && !res; ++k) res = residual(v *= 0.5);
  if (!res) fail(ErrorCode::NonSmoothDistance, "no geodesic from the base point stays in the chart");
  for (iterations = 0; iterations < opt.max_iter; ++iterations) {
    const double norm = res->norm();
    if (norm <= opt.tol * std::max(1.0, x.norm())) return v;
    Mat J(n, n);
    const double dv = 1e-6 * std::max(1.0, v.norm());
    for (int j = 0; j < n; ++j) {
      Vec vp = v, vm = v;
      vp[j] += dv;
      vm[j] -= dv;
      auto rp = residual(vp), rm = residual(vm);
      if (!rp || !rm) fail(ErrorCode::NonSmoothDistance, "geodesic shooting reached the chart boundary");
      J.col(j) = (*rp - *rm) / (2 * dv);
    }
    Vec step = J.partialPivLu().solve(*res);
    // Damped Newton: the residual must shrink at every accepted step.
    bool accepted = false;
    for (double t = 1.0; t > 1e-6 && !accepted; t *= 0.5) {
      auto r = residual(v - t * step);
      if (r && r->norm() < norm) {
        v -= t * step;
        res = r;
        accepted = true;
      }
    }
    if (!accepted) fail(ErrorCode::NonSmoothDistance, "geodesic shooting is not converging monotonically");
  }
  fail(ErrorCode::NonSmoothDistance, "geodesic shooting did not converge");
}

}  // namespace detail

/// d(x0, x) alone, without derivatives.
inline double forward_distance_value(const MetricSpec& spec, const Vec& x0, const Vec& x, const ShootingOptions& opt = {}) {
  if ((x - x0).isZero(0.0)) return 0.0;
  if (spec.is_translation_invariant()) return eval_metric(spec, x0, x - x0);
  if (!spec.chart().contains(x0) || !spec.chart().contains(x)) fail(ErrorCode::NonSmoothDistance, "distance probe outside the chart");
  int its = 0;
  return eval_metric(spec, x0, detail::shoot(spec, x0, x, x - x0, opt, its));
}

/// Closed form F(x0, x - x0) on translation-invariant charts, geodesic
/// shooting elsewhere.
inline DistanceJet forward_distance(const MetricSpec& spec, const Vec& x0, const Vec& x, const ShootingOptions& opt = {}) {
  const int n = spec.dim();
  if (!spec.chart().contains(x0) || !spec.chart().contains(x)) fail(ErrorCode::NonSmoothDistance, "distance probe outside the chart");
  if ((x - x0).norm() <= 1e-12 * std::max(1.0, x0.norm())) fail(ErrorCode::NonSmoothDistance, "distance is not smooth at the base point");
  DistanceJet out;
  if (spec.is_translation_invariant()) {
    Jet r = sqrt(fiber_jet(spec, x0, x - x0, 3));
    out.r = r.value();
    out.jet = field_jet(r, x);
    return out;
  }
  // Gradient of r is the Legendre image of the unit arrival velocity; the
  // Hessian comes from central differences of that gradient.
  auto grad_at = [&](const Vec& p, Vec guess, double& r, int& its) {
    Vec v = detail::shoot(spec, x0, p, std::move(guess), opt, its);
    auto [xe, ve] = detail::geodesic_endpoint(spec, x0, v, opt.step);
    r = eval_metric(spec, x0, v);
    return std::pair<Vec, Vec>{forward_legendre(spec, xe, ve) / eval_metric(spec, xe, ve), v};
  };
  int its = 0;
  auto [du, v] = grad_at(x, x - x0, out.r, its);
  out.shooting_iterations = its;
  out.jet = FieldJet{x, out.r, du, Mat(n, n), std::nullopt};
  const double h = 1e-4 * std::max(1.0, out.r);
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    double rp = 0, rm = 0;
    int ip = 0, im = 0;
    Vec gp = grad_at(xp, v, rp, ip).first, gm = grad_at(xm, v, rm, im).first;
    out.jet.d2u.col(j) = (gp - gm) / (2 * h);
  }
  out.jet.d2u = 0.5 * (out.jet.d2u + out.jet.d2u.transpose()).eval();
  return out;
}

struct ComparisonOptions {
  double N = 0.0;
  std::optional<double> K;      // lower bound Ric^N >= -K; sampled when absent
  std::optional<double> alpha;  // misalignment; sampled when absent
  int directions = 16;
  ShootingOptions shooting;
};

struct ComparisonRow {
  Vec x;
  double r = 0.0;
  double lap = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // lap - bound
};

struct ComparisonProbe {
  double N = 0.0, alpha = 1.0, K = 0.0, C = 0.0, l = 0.0;
  std::vector<ComparisonRow> rows;
};

/// Largest K >= 0 with Ric^N >= -K over unit directions at the given points.
inline double sampled_ricci_lower_bound(const MetricSpec& spec, const std::vector<Vec>& points, double N, int directions) {
  double K = 0.0;
  for (const Vec& x : points)
    for (const Vec& y : sphere_samples(spec.dim(), directions)) {
      Vec u = y / eval_metric(spec, x, y);
      auto w = weighted_ricci(spec, x, u, WeightK{N});
      if (!w.is_finite()) fail(ErrorCode::InvalidK, "Ric^N is unbounded below on the probe");
      K = std::max(K, -w.value);
    }
  return K;
}

/// Rows (r, Δ^∇r r, C ct_{-l}(r)) with C = C(N, alpha) and l = K / C.
inline ComparisonProbe laplacian_comparison_probe(const MetricSpec& spec, const Vec& x0, const std::vector<Vec>& samples, const ComparisonOptions& opt) {
  const int n = spec.dim();
  if (opt.N < n) fail(ErrorCode::InvalidK, "comparison needs N >= n");
  ComparisonProbe p;
  p.N = opt.N;
  std::vector<Vec> pts = samples;
  pts.push_back(x0);
  if (opt.alpha) {
    p.alpha = *opt.alpha;
  } else {
    for (const Vec& x : pts) p.alpha = std::max(p.alpha, misalignment(spec, x).value);
  }
  p.K = opt.K ? *opt.K : sampled_ricci_lower_bound(spec, pts, opt.N, opt.directions);
  p.C = comparison_constant(opt.N, p.alpha, n);
  if (!(p.C > 0.0)) fail(ErrorCode::InvalidK, "comparison constant C(N, alpha) must be positive");
  p.l = p.K / p.C;
  for (const Vec& x : samples) {
    auto d = forward_distance(spec, x0, x, opt.shooting);
    ComparisonRow row{x, d.r, finsler_laplacian(d.jet, spec), p.C * comparison_ct(-p.l, d.r), 0.0};
    row.margin = row.lap - row.bound;
    p.rows.push_back(row);
  }
  return p;
}

}  // namespace finsler
