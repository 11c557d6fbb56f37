#pragma once

// Dirichlet problem for exponentially harmonic functions on box grids.
//
// The exponential energy is discretized with continuous piecewise linear
// elements on the Kuhn triangulation of the grid (n! simplices per cell) and
// one-point centroid quadrature:
//   E_h(u) = sum_T |T| sigma(c_T) exp(F*^2(c_T, Du_T) / 2).
// Its exact gradient and Hessian in the nodal values drive a damped Newton
// iteration started from the harmonic extension of the boundary data.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include <Eigen/Sparse>

#include "finsler/grid.hpp"

namespace finsler {

using SparseMat = Eigen::SparseMatrix<double>;

struct SolverConfig {
  double tol = 1e-10;  // max over interior nodes of |dE/du_i| / m_i
  int max_iter = 100;
  double armijo = 1e-4;
  int max_backtracks = 60;
  int threads = 1;
};

namespace detail {

/// Pairwise sum; fixed association order for reproducible totals.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t, std::size_t)>& body) {
  threads = std::max(1, threads);
  if (threads == 1 || count < 1024) {
    body(0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (count + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
  for (int t = 0; t < threads; ++t) {
    std::size_t b = static_cast<std::size_t>(t) * chunk, e = std::min(count, b + chunk);
    if (b < e) pool.emplace_back(body, b, e);
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

class DiscreteEnergy {
 public:
  DiscreteEnergy(const GridDomain& domain, const MetricSpec& spec, int threads = 1)
      : domain_(domain), spec_(spec), threads_(threads), n_(domain.dim()) {
    if (spec.dim() != n_) fail(ErrorCode::InvalidArgument, "grid and metric dimensions differ");
    for (int a = 0; a < n_; ++a) h_[static_cast<std::size_t>(a)] = domain.spacing(a);
    double vol = 1;
    for (int a = 0; a < n_; ++a) vol *= h_[static_cast<std::size_t>(a)] / (a + 1);
    const int cells_per_axis = domain.resolution() - 1;
    std::size_t cells = 1;
    for (int a = 0; a < n_; ++a) cells *= static_cast<std::size_t>(cells_per_axis);
    std::vector<int> perm(static_cast<std::size_t>(n_));
    mass_.assign(domain.size(), 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
      std::vector<int> corner(static_cast<std::size_t>(n_));
      std::size_t rem = c;
      for (int a = 0; a < n_; ++a) {
        corner[static_cast<std::size_t>(a)] = static_cast<int>(rem % static_cast<std::size_t>(cells_per_axis));
        rem /= static_cast<std::size_t>(cells_per_axis);
      }
      std::iota(perm.begin(), perm.end(), 0);
      do {
        Simplex s;
        std::vector<int> m = corner;
        s.nodes[0] = domain.index(m);
        Vec centroid = domain.point(s.nodes[0]);
        for (int k = 0; k < n_; ++k) {
          s.axes[static_cast<std::size_t>(k)] = perm[static_cast<std::size_t>(k)];
          m[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]++;
          s.nodes[static_cast<std::size_t>(k + 1)] = domain.index(m);
          centroid += domain.point(s.nodes[static_cast<std::size_t>(k + 1)]);
        }
        s.centroid = centroid / (n_ + 1);
        s.weight = vol * spec.density(s.centroid);
        if (spec.is_fiber_quadratic()) s.a_inv = spec.quadratic_form(s.centroid).inverse();
        for (int k = 0; k <= n_; ++k) mass_[s.nodes[static_cast<std::size_t>(k)]] += vol / (n_ + 1);
        simplices_.push_back(std::move(s));
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }

  const GridDomain& domain() const { return domain_; }
  const MetricSpec& spec() const { return spec_; }
  /// Lumped (unweighted) nodal volumes.
  const std::vector<double>& mass() const { return mass_; }

  double energy(const std::vector<double>& u) const {
    std::vector<double> contrib(simplices_.size());
    detail::parallel_for(simplices_.size(), threads_, [&](std::size_t b, std::size_t e) {
      for (std::size_t t = b; t < e; ++t) {
        auto st = local_state(simplices_[t], u);
        contrib[t] = simplices_[t].weight * std::exp(0.5 * st.f2);
      }
    });
    return detail::pairwise_sum(contrib.data(), contrib.size());
  }

  /// Energy and its gradient in all nodal values; `magnitude` receives the
  /// sum of absolute simplex contributions to each gradient entry.
  double energy_and_gradient(const std::vector<double>& u, std::vector<double>& grad, std::vector<double>* magnitude = nullptr) const {
    std::vector<double> contrib(simplices_.size());
    std::vector<std::array<double, 4>> local(simplices_.size());
    detail::parallel_for(simplices_.size(), threads_, [&](std::size_t b, std::size_t e) {
      for (std::size_t t = b; t < e; ++t) {
        const Simplex& s = simplices_[t];
        auto st = local_state(s, u);
        const double w = s.weight * std::exp(0.5 * st.f2);
        contrib[t] = w;
        local[t].fill(0.0);
        for (int k = 0; k < n_; ++k) {
          const int a = s.axes[static_cast<std::size_t>(k)];
          const double dxi = w * st.grad[a] / h_[static_cast<std::size_t>(a)];
          local[t][static_cast<std::size_t>(k + 1)] += dxi;
          local[t][static_cast<std::size_t>(k)] -= dxi;
        }
      }
    });
    grad.assign(u.size(), 0.0);
    if (magnitude) magnitude->assign(u.size(), 0.0);
    for (std::size_t t = 0; t < simplices_.size(); ++t) {
      for (int k = 0; k <= n_; ++k) {
        grad[simplices_[t].nodes[static_cast<std::size_t>(k)]] += local[t][static_cast<std::size_t>(k)];
        if (magnitude) (*magnitude)[simplices_[t].nodes[static_cast<std::size_t>(k)]] += std::abs(local[t][static_cast<std::size_t>(k)]);
      }
    }
    return detail::pairwise_sum(contrib.data(), contrib.size());
  }

  /// Hessian restricted to the unknowns (unknown[i] >= 0 numbers node i).
  SparseMat hessian(const std::vector<double>& u, const std::vector<int>& unknown, int count) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(simplices_.size() * static_cast<std::size_t>((n_ + 1) * (n_ + 1)));
    for (const Simplex& s : simplices_) {
      auto st = local_state(s, u);
      Mat gi;
      if (s.a_inv.size()) {
        gi = s.a_inv;
      } else {
        Vec ref = st.grad;
        if (ref.norm() == 0.0) {
          Vec shifted = Vec::Zero(n_);
          shifted[0] = kReferenceEpsilon;
          ref = legendre_dual(spec_, s.centroid, shifted).grad;
        }
        gi = fundamental_matrix(spec_, s.centroid, ref).inverse();
      }
      Mat Hxi = s.weight * std::exp(0.5 * st.f2) * (st.grad * st.grad.transpose() + gi);
      Mat B = Mat::Zero(n_, n_ + 1);
      for (int k = 0; k < n_; ++k) {
        const int a = s.axes[static_cast<std::size_t>(k)];
        B(a, k + 1) += 1.0 / h_[static_cast<std::size_t>(a)];
        B(a, k) -= 1.0 / h_[static_cast<std::size_t>(a)];
      }
      Mat local = B.transpose() * Hxi * B;
      for (int p = 0; p <= n_; ++p) {
        int ip = unknown[s.nodes[static_cast<std::size_t>(p)]];
        if (ip < 0) continue;
        for (int q = 0; q <= n_; ++q) {
          int iq = unknown[s.nodes[static_cast<std::size_t>(q)]];
          if (iq >= 0) trip.emplace_back(ip, iq, local(p, q));
        }
      }
    }
    SparseMat H(count, count);
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }

 private:
  struct Simplex {
    std::array<std::size_t, 4> nodes{};
    std::array<int, 3> axes{};
    Vec centroid;
    double weight = 0.0;
    Mat a_inv;
  };
  struct LocalState {
    Vec grad;  // ∇ at the centroid
    double f2 = 0.0;
  };

  LocalState local_state(const Simplex& s, const std::vector<double>& u) const {
    Vec xi(n_);
    for (int k = 0; k < n_; ++k) {
      const int a = s.axes[static_cast<std::size_t>(k)];
      xi[a] = (u[s.nodes[static_cast<std::size_t>(k + 1)]] - u[s.nodes[static_cast<std::size_t>(k)]]) / h_[static_cast<std::size_t>(a)];
    }
    if (s.a_inv.size()) {
      Vec g = s.a_inv * xi;
      return {g, xi.dot(g)};
    }
    auto lg = legendre_dual(spec_, s.centroid, xi);
    return {lg.grad, lg.dual_norm * lg.dual_norm};
  }

  GridDomain domain_;
  MetricSpec spec_;
  int threads_;
  int n_;
  std::array<double, 3> h_{};
  std::vector<Simplex> simplices_;
  std::vector<double> mass_;
};

inline double exp_energy(const ScalarField& f, const MetricSpec& spec) { return DiscreteEnergy(f.domain, spec).energy(f.values); }

using BoundaryData = std::function<double(const Vec&)>;

namespace detail {

inline std::vector<int> number_unknowns(const GridDomain& d, int& count) {
  std::vector<int> unknown(d.size(), -1);
  count = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!d.is_boundary(i)) unknown[i] = count++;
  return unknown;
}

}  // namespace detail

/// Discrete harmonic extension (Euclidean Dirichlet energy; the 5-point
/// Laplacian in two dimensions).
inline ScalarField harmonic_extension(const GridDomain& domain, const BoundaryData& boundary) {
  ScalarField f(domain);
  for (std::size_t i = 0; i < domain.size(); ++i)
    if (domain.is_boundary(i)) f.values[i] = boundary(domain.point(i));
  int count = 0;
  auto unknown = detail::number_unknowns(domain, count);
  const int n = domain.dim();
  std::vector<Eigen::Triplet<double>> trip;
  Vec rhs = Vec::Zero(count);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (unknown[i] < 0) continue;
    auto m = domain.multi(i);
    double diag = 0;
    for (int a = 0; a < n; ++a) {
      const double w = 1.0 / (domain.spacing(a) * domain.spacing(a));
      for (int s : {-1, 1}) {
        auto nb = m;
        nb[static_cast<std::size_t>(a)] += s;
        std::size_t j = domain.index(nb);
        diag += w;
        if (unknown[j] >= 0) trip.emplace_back(unknown[i], unknown[j], -w);
        else rhs[unknown[i]] += w * f.values[j];
      }
    }
    trip.emplace_back(unknown[i], unknown[i], diag);
  }
  SparseMat K(count, count);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SparseMat> ldlt(K);
  Vec sol = ldlt.solve(rhs);
  for (std::size_t i = 0; i < domain.size(); ++i)
    if (unknown[i] >= 0) f.values[i] = sol[unknown[i]];
  f.meta.status = SolveStatus::Converged;
  return f;
}

/// Max over interior nodes of |dE/du_i| / m_i.
inline double scaled_residual(const std::vector<double>& grad, const DiscreteEnergy& E) {
  double r = 0;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!E.domain().is_boundary(i)) r = std::max(r, std::abs(grad[i]) / E.mass()[i]);
  return r;
}

/// Every interior entry is below tol * m_i or at the rounding level of its assembly.
inline bool residual_converged(const std::vector<double>& grad, const std::vector<double>& magnitude, const DiscreteEnergy& E, double tol) {
  constexpr double kRoundoff = 1024 * std::numeric_limits<double>::epsilon();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (E.domain().is_boundary(i)) continue;
    if (std::abs(grad[i]) > std::max(tol * E.mass()[i], kRoundoff * magnitude[i])) return false;
  }
  return true;
}

/// Relative rounding level of a pairwise-summed energy of positive terms.
inline constexpr double kEnergyRounding = 64 * std::numeric_limits<double>::epsilon();

inline ScalarField solve_dirichlet(const GridDomain& domain, const MetricSpec& spec, const BoundaryData& boundary,
                                   const SolverConfig& cfg = {}) {
  if (!(cfg.tol > 0.0) || cfg.max_iter < 1) fail(ErrorCode::InvalidArgument, "solver tolerance and iteration limit must be positive");
  ScalarField f = harmonic_extension(domain, boundary);
  f.meta = {};
  DiscreteEnergy E(domain, spec, cfg.threads);
  int count = 0;
  auto unknown = detail::number_unknowns(domain, count);
  std::vector<double> grad, mag, trial, gtrial, mtrial;
  double energy = E.energy_and_gradient(f.values, grad, &mag);
  double res = scaled_residual(grad, E);
  bool done = residual_converged(grad, mag, E, cfg.tol);
  f.meta.energy_history.push_back(energy);
  Eigen::SimplicialLDLT<SparseMat> ldlt;
  int it = 0;
  for (; it < cfg.max_iter && !done; ++it) {
    Vec g(count);
    for (std::size_t i = 0; i < domain.size(); ++i)
      if (unknown[i] >= 0) g[unknown[i]] = grad[i];
    Vec d;
    SparseMat H = E.hessian(f.values, unknown, count);
    ldlt.compute(H);
    if (ldlt.info() == Eigen::Success) d = -ldlt.solve(g);
    if (d.size() == 0 || !d.allFinite() || !(g.dot(d) < 0.0)) {
      d.resize(count);
      for (std::size_t i = 0; i < domain.size(); ++i)
        if (unknown[i] >= 0) d[unknown[i]] = -grad[i] / E.mass()[i];
    }
    const double slope = g.dot(d);
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt, alpha *= 0.5) {
      trial = f.values;
      for (std::size_t i = 0; i < domain.size(); ++i)
        if (unknown[i] >= 0) trial[i] += alpha * d[unknown[i]];
      double et = E.energy_and_gradient(trial, gtrial, &mtrial);
      // Near the minimizer energy differences drop below the rounding error of
      // the energy itself; there a step is accepted when it reduces the residual.
      if (!(et <= energy + kEnergyRounding * std::abs(energy))) continue;
      double rt = scaled_residual(gtrial, E);
      if (et <= energy + cfg.armijo * alpha * slope || rt < res) {
        f.values.swap(trial);
        grad.swap(gtrial);
        mag.swap(mtrial);
        energy = et;
        res = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      f.meta.status = SolveStatus::LineSearchStall;
      break;
    }
    f.meta.energy_history.push_back(energy);
    done = residual_converged(grad, mag, E, cfg.tol);
  }
  f.meta.iterations = it;
  f.meta.energy = energy;
  f.meta.residual = res;
  if (f.meta.status != SolveStatus::LineSearchStall) f.meta.status = done ? SolveStatus::Converged : SolveStatus::MaxIterationsExceeded;
  return f;
}

/// Like solve_dirichlet, but a non-converged status is raised as an error.
inline ScalarField solve_dirichlet_strict(const GridDomain& domain, const MetricSpec& spec, const BoundaryData& boundary,
                                          const SolverConfig& cfg = {}) {
  ScalarField f = solve_dirichlet(domain, spec, boundary, cfg);
  if (f.meta.status == SolveStatus::MaxIterationsExceeded) fail(ErrorCode::MaxIterationsExceeded, "solver hit the iteration limit");
  if (f.meta.status == SolveStatus::LineSearchStall) fail(ErrorCode::LineSearchStall, "line search could not decrease the energy");
  return f;
}

// ---------------------------------------------------------------------------

struct FirstVariation {
  double numeric = 0.0;        // centered difference of E_h(u + t v)
  double analytic = 0.0;       // sum_T |T| sigma V(u) Dv(∇u)
  double weak_residual = 0.0;  // analytic + ∫ Δ̃u v dμ with Δ̃u from reconstructed jets
};

inline FirstVariation first_variation(const ScalarField& u, const ScalarField& v, const MetricSpec& spec, double t_step = 1e-4,
                                      int collar = 2) {
  const GridDomain& d = u.domain;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.in_collar(i, collar) && v.values[i] != 0.0) fail(ErrorCode::SupportViolation, "variation must vanish on the boundary collar");
  DiscreteEnergy E(d, spec);
  FirstVariation fv;
  std::vector<double> up = u.values, um = u.values, grad;
  for (std::size_t i = 0; i < d.size(); ++i) {
    up[i] += t_step * v.values[i];
    um[i] -= t_step * v.values[i];
  }
  fv.numeric = (E.energy(up) - E.energy(um)) / (2 * t_step);
  E.energy_and_gradient(u.values, grad);
  std::vector<double> terms(d.size(), 0.0), weak(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (v.values[i] == 0.0) continue;
    terms[i] = grad[i] * v.values[i];
    Vec x = d.point(i);
    auto op = exp_harmonic_operator(reconstruct_jet(u, x), spec);
    weak[i] = E.mass()[i] * spec.density(x) * op.tilde_lap * v.values[i];
  }
  fv.analytic = detail::pairwise_sum(terms.data(), terms.size());
  fv.weak_residual = fv.analytic + detail::pairwise_sum(weak.data(), weak.size());
  return fv;
}

}  // namespace finsler
