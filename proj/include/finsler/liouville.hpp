#pragma once

// Gradient-estimate harness on expanding balls: the H-function, the
// empirical estimate constant, and center energies of Dirichlet solves.

#include <cmath>
#include <vector>

#include "finsler/comparison.hpp"
#include "finsler/solver.hpp"

namespace finsler {

/// H = (a^2 - r^2)^2 e(u) / (b^2 - u^2) on the grid nodes inside B_a(x0),
/// with e(u) = F*(du)^2 and zero outside the ball.
struct HField {
  std::vector<double> H;
  std::vector<char> in_ball;
  std::size_t argmax = 0;
  double max = 0.0;
  double sup_u2 = 0.0;
};

inline constexpr ShootingOptions kBallShooting{.step = 1.0 / 32, .tol = 1e-10};

inline double energy_density(const ScalarField& f, const MetricSpec& spec, const Vec& x) {
  double F = nonlinear_gradient(reconstruct_jet(f, x), spec).dual_norm;
  return F * F;
}

inline HField h_function(const ScalarField& f, const MetricSpec& spec, const Vec& x0, double a, double b, int threads = 1) {
  if (!(a > 0.0)) fail(ErrorCode::InvalidArgument, "ball radius must be positive");
  const GridDomain& d = f.domain;
  HField h;
  h.H.assign(d.size(), 0.0);
  h.in_ball.assign(d.size(), 0);
  std::vector<double> r(d.size());
  detail::parallel_for(d.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) r[i] = forward_distance_value(spec, x0, d.point(i), kBallShooting);
  });
  for (std::size_t i = 0; i < d.size(); ++i)
    if (r[i] < a) {
      h.in_ball[i] = 1;
      h.sup_u2 = std::max(h.sup_u2, f.values[i] * f.values[i]);
    }
  if (!(b * b > h.sup_u2)) fail(ErrorCode::BoundTooSmall, "b^2 must exceed sup u^2 on the ball");
  detail::parallel_for(d.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (!h.in_ball[i]) continue;
      const double w = a * a - r[i] * r[i];
      h.H[i] = w * w * energy_density(f, spec, d.point(i)) / (b * b - f.values[i] * f.values[i]);
    }
  });
  for (std::size_t i = 0; i < d.size(); ++i)
    if (h.H[i] > h.max) {
      h.max = h.H[i];
      h.argmax = i;
    }
  return h;
}

inline double estimate_scale(double a) { return std::pow(a, 3.5) + a * a + 1.0; }

struct GradientEstimate {
  HField h;
  double scale = 0.0;        // a^3.5 + a^2 + 1
  double C = 0.0;            // supplied constant
  double empirical_C = 0.0;  // smallest constant for which the estimate holds
  bool pass = false;
  double margin = 0.0;  // C * scale - max H
};

inline GradientEstimate gradient_estimate_check(const ScalarField& f, const MetricSpec& spec, const Vec& x0, double a, double b, double C,
                                                int threads = 1) {
  GradientEstimate g;
  g.h = h_function(f, spec, x0, a, b, threads);
  g.scale = estimate_scale(a);
  g.C = C;
  g.empirical_C = g.h.max / g.scale;
  g.margin = C * g.scale - g.h.max;
  g.pass = g.margin >= 0.0;
  return g;
}

/// b^2 = 2 M^2 (1 + 4 a^2) + 1 for boundary data bounded by M.
inline double liouville_bound(double a, double M) { return std::sqrt(2.0 * M * M * (1.0 + 4.0 * a * a) + 1.0); }

struct CurvatureHypothesis {
  bool violated = false;
  double min_mixed_ricci = std::numeric_limits<double>::infinity();
  double K0 = 0.0;  // largest sampled norm of T, U and divC
  std::size_t samples = 0;
};

/// Samples mixed Ric^∞(Y, W) >= 0 at the given points over pairs of unit directions.
inline CurvatureHypothesis check_curvature_hypothesis(const MetricSpec& spec, const std::vector<Vec>& points, int directions = 8) {
  CurvatureHypothesis c;
  auto dirs = sphere_samples(spec.dim(), directions);
  for (const Vec& x : points)
    for (const Vec& Y0 : dirs)
      for (const Vec& W0 : dirs) {
        Vec Y = Y0 / eval_metric(spec, x, Y0), W = W0 / eval_metric(spec, x, W0);
        auto m = mixed_weighted_ricci(spec, x, Y, W, WeightK::infinity());
        c.min_mixed_ricci = std::min(c.min_mixed_ricci, m.value);
        c.K0 = std::max({c.K0, t_tensor(spec, x, Y, W).dual_norm, u_tensor(spec, x, Y, W).norm, div_cartan(spec, x, Y, W).hs_norm});
        ++c.samples;
      }
  c.violated = c.min_mixed_ricci < -1e-9;
  return c;
}

struct LiouvilleConfig {
  int resolution = 128;
  SolverConfig solver{.tol = 1e-15};  // effectively stops at the rounding floor
  double C = 1.0;
  int curvature_directions = 8;
};

struct LiouvilleRecord {
  double a = 0.0;
  double b = 0.0;
  double h_max = 0.0;
  Vec argmax;
  double center_energy = 0.0;
  double empirical_C = 0.0;
  double bound = 0.0;  // C (a^3.5 + a^2 + 1)
  bool estimate_holds = false;
  SolveMetadata solve;
};

struct LiouvilleResult {
  std::vector<LiouvilleRecord> records;
  CurvatureHypothesis hypothesis;
};

/// Least-squares slope of log e(x0) against log a over the last `count`
/// records; -inf once a center energy vanishes.
inline double decay_slope(const std::vector<LiouvilleRecord>& records, std::size_t count = 3) {
  if (records.size() < count || count < 2) fail(ErrorCode::InvalidArgument, "not enough records for a slope");
  for (std::size_t i = records.size() - count; i < records.size(); ++i)
    if (records[i].center_energy == 0.0) return -std::numeric_limits<double>::infinity();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = records.size() - count; i < records.size(); ++i) {
    double lx = std::log(records[i].a), ly = std::log(records[i].center_energy);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(count);
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

/// Dirichlet solves on the boxes x0 + [-a, a]^n with data M cos(angle about x0).
inline LiouvilleResult liouville_experiment(const MetricSpec& spec, const Vec& x0, const std::vector<double>& radii, double M,
                                            const LiouvilleConfig& cfg = {}) {
  const int n = spec.dim();
  if (radii.empty()) fail(ErrorCode::InvalidArgument, "radii must be nonempty");
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] > radii[i - 1]))) fail(ErrorCode::InvalidArgument, "radii must be positive and increasing");
  if (!(M >= 0.0)) fail(ErrorCode::InvalidArgument, "boundary oscillation must be nonnegative");
  const double amax = radii.back();
  for (int i = 0; i < n; ++i)
    if (x0[i] - amax < spec.chart().lo[i] || x0[i] + amax > spec.chart().hi[i]) fail(ErrorCode::LeftChart, "largest Liouville box leaves the chart");

  LiouvilleResult out;
  std::vector<Vec> pts = {x0};
  for (const Vec& p : spec.chart_net()) {
    bool inside = true;
    for (int i = 0; i < n; ++i) inside = inside && std::abs(p[i] - x0[i]) <= amax;
    if (inside) pts.push_back(p);
  }
  out.hypothesis = check_curvature_hypothesis(spec, pts, cfg.curvature_directions);

  BoundaryData data = [&](const Vec& x) {
    Vec z = x - x0;
    return n == 1 ? M * (z[0] > 0 ? 1.0 : -1.0) : M * z[0] / z.norm();
  };
  for (double a : radii) {
    Box bx{x0 - Vec::Constant(n, a), x0 + Vec::Constant(n, a)};
    GridDomain dom(bx, cfg.resolution);
    ScalarField u = solve_dirichlet(dom, spec, data, cfg.solver);
    LiouvilleRecord rec;
    rec.a = a;
    rec.b = liouville_bound(a, M);
    auto est = gradient_estimate_check(u, spec, x0, a, rec.b, cfg.C, cfg.solver.threads);
    rec.h_max = est.h.max;
    rec.argmax = dom.point(est.h.argmax);
    rec.center_energy = energy_density(u, spec, x0);
    rec.empirical_C = est.empirical_C;
    rec.bound = cfg.C * est.scale;
    rec.estimate_holds = est.pass;
    rec.solve = u.meta;
    out.records.push_back(rec);
  }
  return out;
}

}  // namespace finsler
