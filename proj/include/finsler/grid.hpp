#pragma once

// Structured nodal grids on box charts, scalar fields on them, and
// derivative reconstruction by local quartic least squares.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "finsler/operators.hpp"

namespace finsler {

class GridDomain {
 public:
  GridDomain(Box bounds, int resolution) : bounds_(std::move(bounds)), res_(resolution) {
    if (res_ < 9) fail(ErrorCode::InvalidArgument, "grid resolution must be at least 9 nodes per axis");
    const auto n = bounds_.lo.size();
    if (n < 1 || n > 3) fail(ErrorCode::InvalidArgument, "grids support dimensions 1 to 3");
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
      if (!(bounds_.hi[i] > bounds_.lo[i])) fail(ErrorCode::InvalidArgument, "degenerate grid bounds");
    count_ = 1;
    for (std::size_t i = 0; i < n; ++i) count_ *= static_cast<std::size_t>(res_);
  }

  const Box& bounds() const { return bounds_; }
  int resolution() const { return res_; }
  int dim() const { return static_cast<int>(bounds_.lo.size()); }
  std::size_t size() const { return count_; }
  double spacing(int axis) const { return (bounds_.hi[axis] - bounds_.lo[axis]) / (res_ - 1); }

  /// Axis 0 varies fastest.
  std::size_t index(const std::vector<int>& m) const {
    std::size_t idx = 0;
    for (int a = dim() - 1; a >= 0; --a) idx = idx * static_cast<std::size_t>(res_) + static_cast<std::size_t>(m[static_cast<std::size_t>(a)]);
    return idx;
  }
  std::vector<int> multi(std::size_t idx) const {
    std::vector<int> m(static_cast<std::size_t>(dim()));
    for (int a = 0; a < dim(); ++a) {
      m[static_cast<std::size_t>(a)] = static_cast<int>(idx % static_cast<std::size_t>(res_));
      idx /= static_cast<std::size_t>(res_);
    }
    return m;
  }
  double coord(int axis, int i) const { return i == res_ - 1 ? bounds_.hi[axis] : bounds_.lo[axis] + i * spacing(axis); }
  Vec point(std::size_t idx) const {
    auto m = multi(idx);
    Vec x(dim());
    for (int a = 0; a < dim(); ++a) x[a] = coord(a, m[static_cast<std::size_t>(a)]);
    return x;
  }
  bool is_boundary(std::size_t idx) const {
    for (int c : multi(idx))
      if (c == 0 || c == res_ - 1) return true;
    return false;
  }
  /// Nodes within `layers` of the boundary.
  bool in_collar(std::size_t idx, int layers) const {
    for (int c : multi(idx))
      if (c < layers || c > res_ - 1 - layers) return true;
    return false;
  }

 private:
  Box bounds_;
  int res_;
  std::size_t count_ = 0;
};

enum class SolveStatus { Converged, MaxIterationsExceeded, LineSearchStall, NotSolved };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case SolveStatus::LineSearchStall: return "LineSearchStall";
    case SolveStatus::NotSolved: return "NotSolved";
  }
  return "?";
}

struct SolveMetadata {
  std::string spec_hash;
  int iterations = 0;
  double energy = 0.0;
  double residual = 0.0;
  SolveStatus status = SolveStatus::NotSolved;
  std::vector<double> energy_history;
};

struct ScalarField {
  GridDomain domain;
  std::vector<double> values;
  SolveMetadata meta;

  explicit ScalarField(GridDomain d) : domain(std::move(d)), values(domain.size(), 0.0) {}
  ScalarField(GridDomain d, const std::function<double(const Vec&)>& f) : ScalarField(std::move(d)) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = f(domain.point(i));
  }
};

// ---------------------------------------------------------------------------
// Least-squares reconstruction

namespace detail {

inline std::vector<std::vector<int>> monomials_upto(int n, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == n - 1) {
      for (int d = 0; d <= left; ++d) {
        e[static_cast<std::size_t>(axis)] = d;
        out.push_back(e);
      }
      return;
    }
    for (int d = 0; d <= left; ++d) {
      e[static_cast<std::size_t>(axis)] = d;
      rec(axis + 1, left - d);
    }
  };
  rec(0, degree);
  return out;
}

inline double factorial(int k) {
  double f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace detail

/// Quartic least-squares fit on a stencil of 5 nodes per axis (7 in one
/// dimension) around the node nearest to x, shifted inward near the boundary.
/// Returns u and its first three derivatives at x.
inline FieldJet reconstruct_jet(const ScalarField& f, const Vec& x) {
  const GridDomain& d = f.domain;
  const int n = d.dim();
  const int width = n == 1 ? 7 : 5;
  std::vector<int> start(static_cast<std::size_t>(n));
  Vec h(n);
  for (int a = 0; a < n; ++a) {
    h[a] = d.spacing(a);
    int near = static_cast<int>(std::lround((x[a] - d.bounds().lo[a]) / h[a]));
    start[static_cast<std::size_t>(a)] = std::clamp(near - width / 2, 0, d.resolution() - width);
  }
  static const auto mons1 = detail::monomials_upto(1, 4), mons2 = detail::monomials_upto(2, 4), mons3 = detail::monomials_upto(3, 4);
  const auto& mons = n == 1 ? mons1 : n == 2 ? mons2 : mons3;
  std::size_t pts = 1;
  for (int a = 0; a < n; ++a) pts *= static_cast<std::size_t>(width);
  Mat A(static_cast<Eigen::Index>(pts), static_cast<Eigen::Index>(mons.size()));
  Vec b(static_cast<Eigen::Index>(pts));
  std::vector<int> off(static_cast<std::size_t>(n), 0), node(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < pts; ++p) {
    std::size_t rem = p;
    for (int a = 0; a < n; ++a) {
      off[static_cast<std::size_t>(a)] = static_cast<int>(rem % static_cast<std::size_t>(width));
      rem /= static_cast<std::size_t>(width);
      node[static_cast<std::size_t>(a)] = start[static_cast<std::size_t>(a)] + off[static_cast<std::size_t>(a)];
    }
    Vec s(n);
    for (int a = 0; a < n; ++a) s[a] = (d.coord(a, node[static_cast<std::size_t>(a)]) - x[a]) / h[a];
    for (std::size_t m = 0; m < mons.size(); ++m) {
      double v = 1;
      for (int a = 0; a < n; ++a) v *= std::pow(s[a], mons[m][static_cast<std::size_t>(a)]);
      A(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m)) = v;
    }
    b[static_cast<Eigen::Index>(p)] = f.values[d.index(node)];
  }
  // Fitting about the stencil mean keeps constant fields exact.
  const double mean = b.mean();
  b.array() -= mean;
  Vec c = A.colPivHouseholderQr().solve(b);
  c[0] += mean;
  auto coef = [&](std::vector<int> e) {
    for (std::size_t m = 0; m < mons.size(); ++m)
      if (mons[m] == e) {
        double scale = 1;
        for (int a = 0; a < n; ++a) scale *= detail::factorial(e[static_cast<std::size_t>(a)]) / std::pow(h[a], e[static_cast<std::size_t>(a)]);
        return c[static_cast<Eigen::Index>(m)] * scale;
      }
    return 0.0;
  };
  FieldJet fj{x, c[0], Vec(n), Mat(n, n), Tensor3(n)};
  for (int i = 0; i < n; ++i) {
    std::vector<int> e(static_cast<std::size_t>(n), 0);
    e[static_cast<std::size_t>(i)]++;
    fj.du[i] = coef(e);
    for (int j = 0; j < n; ++j) {
      auto e2 = e;
      e2[static_cast<std::size_t>(j)]++;
      fj.d2u(i, j) = coef(e2);
      for (int k = 0; k < n; ++k) {
        auto e3 = e2;
        e3[static_cast<std::size_t>(k)]++;
        (*fj.d3u)(i, j, k) = coef(e3);
      }
    }
  }
  return fj;
}

}  // namespace finsler
