#pragma once

// Invariant suite run against a configured metric at seeded random
// sphere-bundle samples. Each check reports the worst sampled value.

#include <random>
#include <string>
#include <vector>

#include "finsler/config.hpp"

namespace finsler {

struct InvariantCheck {
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  bool pass = false;
};

namespace detail {

class Sampler {
 public:
  Sampler(const MetricSpec& spec, std::uint64_t seed) : spec_(spec), gen_(seed) {}

  Vec point() {
    const Box& b = spec_.chart();
    Vec x(spec_.dim());
    for (int i = 0; i < spec_.dim(); ++i) {
      const double inset = 0.05 * (b.hi[i] - b.lo[i]);
      x[i] = std::uniform_real_distribution<double>(b.lo[i] + inset, b.hi[i] - inset)(gen_);
    }
    return x;
  }

  Vec direction() {
    std::normal_distribution<double> nd;
    Vec v(spec_.dim());
    do {
      for (int i = 0; i < spec_.dim(); ++i) v[i] = nd(gen_);
    } while (v.norm() < 1e-3);
    return v / v.norm();
  }

 private:
  const MetricSpec& spec_;
  std::mt19937_64 gen_;
};

}  // namespace detail

inline std::vector<InvariantCheck> run_invariants(const MetricSpec& spec, const ValidateSection& opt, std::uint64_t seed) {
  const int n = spec.dim();
  detail::Sampler rng(spec, seed);
  double cartan = 0, legendre = 0, euler = 0, spray_curv = 0, symmetry = 0, compat = 0, mixed = 0, antisym = 0, sdual = 0, monotone = 0,
         alpha_low = 0, flag = 0;
  auto metric_field = [](const GeometryJets& gj) {
    TensorFieldJet t;
    t.upper = {false, false};
    for (int i = 0; i < gj.n; ++i)
      for (int j = 0; j < gj.n; ++j) t.comps.push_back(gj.g(i, j));
    return t;
  };
  for (int s = 0; s < opt.samples; ++s) {
    Vec x = rng.point(), y = rng.direction(), w = rng.direction();
    auto frame = fundamental_tensor(spec, x, y);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double c = 0;
        for (int k = 0; k < n; ++k) c += frame.cartan(i, j, k) * y[k];
        cartan = std::max(cartan, std::abs(c));
      }
    Vec xi = frame.g * w;
    auto dual = legendre_dual(spec, x, xi);
    legendre = std::max(legendre, (forward_legendre(spec, x, dual.grad) - xi).norm() / xi.norm());

    auto gj = geometry_jets(spec, x, y, 4);
    auto cf = connection_frame(gj);
    euler = std::max(euler, (cf.N * y - 2.0 * cf.G).norm() / std::max(1.0, cf.G.norm()));
    Mat R = riemann_curvature(gj);
    spray_curv = std::max(spray_curv, (R * y).norm());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) symmetry = std::max(symmetry, std::abs(cf.gamma(i, j, k) - cf.gamma(i, k, j)));
    compat = std::max(compat, horizontal_derivative(metric_field, gj).max_abs());

    auto plain = weighted_ricci(spec, x, y, WeightK::infinity());
    auto mix = mixed_weighted_ricci(spec, x, y, y, WeightK::infinity());
    mixed = std::max(mixed, std::abs(plain.value - mix.value) / std::max(1.0, std::abs(plain.value)));
    antisym = std::max({antisym, (t_tensor(spec, x, y, w).T + t_tensor(spec, x, w, y).T).norm(), t_tensor(spec, x, y, y).T.norm()});

    try {
      auto sc = s_curvature(spec, x, y, true);
      if (sc.S_geodesic) sdual = std::max(sdual, std::abs(sc.S - *sc.S_geodesic) / std::max(1.0, std::abs(sc.S)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LeftChart) throw;
    }
    double prev = -std::numeric_limits<double>::infinity();
    for (WeightK k : {WeightK{n + 1.0}, WeightK{n + 2.0}, WeightK{n + 8.0}, WeightK::infinity()}) {
      double v = weighted_ricci(spec, x, y, k).value;
      monotone = std::max(monotone, prev - v);
      prev = v;
    }
    alpha_low = std::max(alpha_low, 1.0 - misalignment(spec, x).value);
    if (opt.flag_curvature && n >= 2) {
      Vec u = rng.direction();
      if (std::abs(u.dot(y)) < 0.99) flag = std::max(flag, std::abs(flag_curvature(spec, x, y, u) - *opt.flag_curvature));
    }
  }
  std::vector<InvariantCheck> out = {
      {"cartan_annihilation", cartan, 1e-10},
      {"legendre_involution", legendre, 1e-9},
      {"spray_euler_identity", euler, 1e-9},
      {"spray_curvature_annihilates_y", spray_curv, 1e-7},
      {"chern_symmetry", symmetry, 1e-10},
      {"chern_metric_compatibility", compat, 1e-8},
      {"mixed_ricci_reduces_to_plain", mixed, 1e-9},
      {"t_antisymmetry", antisym, 1e-10},
      {"s_curvature_dual_method", sdual, 1e-5},
      {"weighted_ricci_monotone_in_k", std::max(0.0, monotone), 1e-10},
      {"misalignment_at_least_one", std::max(0.0, alpha_low), 0.0},
  };
  if (opt.flag_curvature && n >= 2) out.push_back({"flag_curvature_constant", flag, opt.tol});

  if (n <= 3) {
    // Small Dirichlet solve: maximum principle and energy monotonicity.
    Box b = spec.chart();
    const Vec mid = 0.5 * (b.lo + b.hi), half = 0.25 * (b.hi - b.lo);
    GridDomain dom({mid - half, mid + half}, 17);
    auto data = [&](const Vec& p) { return (p[0] - mid[0]) / half[0]; };
    ScalarField u = solve_dirichlet(dom, spec, data);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, excess = 0, rise = 0;
    for (std::size_t i = 0; i < dom.size(); ++i)
      if (dom.is_boundary(i)) {
        lo = std::min(lo, u.values[i]);
        hi = std::max(hi, u.values[i]);
      }
    for (double v : u.values) excess = std::max({excess, lo - v, v - hi});
    for (std::size_t i = 1; i < u.meta.energy_history.size(); ++i)
      rise = std::max(rise, (u.meta.energy_history[i] - u.meta.energy_history[i - 1]) / std::abs(u.meta.energy_history[i - 1]));
    out.push_back({"solver_converged", u.meta.status == SolveStatus::Converged ? 0.0 : 1.0, 0.0});
    out.push_back({"solver_maximum_principle", excess, 1e-8});
    out.push_back({"solver_energy_nonincreasing", std::max(0.0, rise), kEnergyRounding});
  }
  for (auto& c : out) c.pass = c.value <= c.tol;
  return out;
}

}  // namespace finsler
