#pragma once

// Truncated multivariate Taylor polynomials ("jets") for forward-mode
// differentiation to a fixed total order.
//
// A Jet stores Taylor coefficients c_m, so that f(z0 + dz) = sum_m c_m dz^m.
// Monomials are ordered by total degree and, inside one degree, in a fixed
// lexicographic order that does not depend on the truncation order. A jet of
// order p is therefore a prefix of the same function's jet of order q > p.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "finsler/error.hpp"

namespace finsler {

class JetLayout {
 public:
  struct MulTerm {
    std::uint32_t a, b, c;
  };
  struct DerivTerm {
    std::uint32_t src, dst;
    double factor;
  };

  static std::shared_ptr<const JetLayout> get(int nvars, int order) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const JetLayout>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{nvars, order}];
    if (!slot) slot = std::shared_ptr<const JetLayout>(new JetLayout(nvars, order));
    return slot;
  }

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  std::size_t size() const { return degree_.size(); }
  int degree(std::size_t m) const { return degree_[m]; }
  std::size_t degree_begin(int d) const { return degree_begin_[static_cast<std::size_t>(d)]; }

  std::span<const std::uint8_t> exponents(std::size_t m) const {
    return {exps_.data() + m * static_cast<std::size_t>(nvars_), static_cast<std::size_t>(nvars_)};
  }

  /// Index of the monomial with the given exponents, or -1 if its degree exceeds order().
  std::ptrdiff_t index_of(std::span<const int> e) const {
    int deg = 0;
    std::size_t code = 0;
    for (int a = nvars_ - 1; a >= 0; --a) {
      if (e[static_cast<std::size_t>(a)] < 0) return -1;
      deg += e[static_cast<std::size_t>(a)];
      if (deg > order_) return -1;
      code = code * static_cast<std::size_t>(order_ + 1) + static_cast<std::size_t>(e[static_cast<std::size_t>(a)]);
    }
    return lookup_[code];
  }

  const std::vector<MulTerm>& mul_table() const { return mul_; }
  const std::vector<DerivTerm>& derivative_table(int var) const { return deriv_[static_cast<std::size_t>(var)]; }

 private:
  JetLayout(int nvars, int order) : nvars_(nvars), order_(order) {
    if (nvars < 1 || nvars > 8 || order < 0 || order > 8)
      fail(ErrorCode::InvalidArgument, "jet layout supports 1..8 variables and order 0..8");
    std::vector<int> cur(static_cast<std::size_t>(nvars), 0);
    for (int d = 0; d <= order; ++d) {
      degree_begin_.push_back(degree_.size());
      generate(cur, 0, d, d);
    }
    degree_begin_.push_back(degree_.size());

    std::size_t table = 1;
    for (int a = 0; a < nvars; ++a) table *= static_cast<std::size_t>(order + 1);
    lookup_.assign(table, -1);
    std::vector<int> e(static_cast<std::size_t>(nvars));
    for (std::size_t m = 0; m < size(); ++m) {
      std::size_t code = 0;
      for (int a = nvars - 1; a >= 0; --a)
        code = code * static_cast<std::size_t>(order + 1) + exps_[m * static_cast<std::size_t>(nvars) + static_cast<std::size_t>(a)];
      lookup_[code] = static_cast<std::ptrdiff_t>(m);
    }

    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = 0; j < size(); ++j) {
        if (degree_[i] + degree_[j] > order) break;  // graded order: later j only larger
        for (int a = 0; a < nvars; ++a) e[static_cast<std::size_t>(a)] = exponents(i)[static_cast<std::size_t>(a)] + exponents(j)[static_cast<std::size_t>(a)];
        mul_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                        static_cast<std::uint32_t>(index_of(e))});
      }
    }

    deriv_.resize(static_cast<std::size_t>(nvars));
    for (int a = 0; a < nvars; ++a) {
      for (std::size_t m = 0; m < size(); ++m) {
        auto ex = exponents(m);
        if (ex[static_cast<std::size_t>(a)] == 0) continue;
        for (int b = 0; b < nvars; ++b) e[static_cast<std::size_t>(b)] = ex[static_cast<std::size_t>(b)];
        e[static_cast<std::size_t>(a)] -= 1;
        deriv_[static_cast<std::size_t>(a)].push_back(
            {static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(index_of(e)), static_cast<double>(ex[static_cast<std::size_t>(a)])});
      }
    }
  }

  void generate(std::vector<int>& cur, int var, int remaining, int deg) {
    if (var == nvars_ - 1) {
      cur[static_cast<std::size_t>(var)] = remaining;
      for (int v : cur) exps_.push_back(static_cast<std::uint8_t>(v));
      degree_.push_back(deg);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      cur[static_cast<std::size_t>(var)] = k;
      generate(cur, var + 1, remaining - k, deg);
    }
  }

  int nvars_;
  int order_;
  std::vector<std::uint8_t> exps_;
  std::vector<int> degree_;
  std::vector<std::size_t> degree_begin_;
  std::vector<std::ptrdiff_t> lookup_;
  std::vector<MulTerm> mul_;
  std::vector<std::vector<DerivTerm>> deriv_;
};

using LayoutPtr = std::shared_ptr<const JetLayout>;

class Jet {
 public:
  Jet() = default;
  Jet(LayoutPtr layout, double value) : layout_(std::move(layout)), c_(layout_->size(), 0.0) { c_[0] = value; }

  static Jet variable(const LayoutPtr& layout, int var, double value) {
    Jet j(layout, value);
    if (layout->order() >= 1) j.c_[1 + static_cast<std::size_t>(var)] = 1.0;
    return j;
  }

  const LayoutPtr& layout_ptr() const { return layout_; }
  const JetLayout& layout() const { return *layout_; }
  int order() const { return layout_->order(); }
  int nvars() const { return layout_->nvars(); }
  bool empty() const { return !layout_; }

  double value() const { return c_[0]; }
  std::span<const double> coeffs() const { return c_; }
  double coeff(std::size_t m) const { return c_[m]; }
  double& coeff(std::size_t m) { return c_[m]; }

  /// Partial derivative with respect to the listed variables (repeats allowed).
  double derivative(std::span<const int> vars) const {
    std::vector<int> e(static_cast<std::size_t>(nvars()), 0);
    for (int v : vars) e[static_cast<std::size_t>(v)] += 1;
    auto idx = layout_->index_of(e);
    if (idx < 0) fail(ErrorCode::InvalidArgument, "derivative order exceeds jet order");
    double f = 1.0;
    for (int k : e)
      for (int t = 2; t <= k; ++t) f *= t;
    return c_[static_cast<std::size_t>(idx)] * f;
  }
  double derivative(std::initializer_list<int> vars) const {
    return derivative(std::span<const int>(vars.begin(), vars.size()));
  }

  /// d/dz_var; the result has order() - 1.
  Jet d(int var) const {
    if (order() == 0) fail(ErrorCode::InvalidArgument, "cannot differentiate an order-0 jet");
    Jet r(JetLayout::get(nvars(), order() - 1), 0.0);
    for (const auto& t : layout_->derivative_table(var)) r.c_[t.dst] += t.factor * c_[t.src];
    return r;
  }

  Jet truncated(int order) const {
    if (order >= this->order()) return *this;
    Jet r(JetLayout::get(nvars(), order), 0.0);
    std::copy(c_.begin(), c_.begin() + static_cast<std::ptrdiff_t>(r.c_.size()), r.c_.begin());
    return r;
  }

  /// Same function with the constant term removed.
  Jet shift() const {
    Jet r = *this;
    r.c_[0] = 0.0;
    return r;
  }

  Jet& operator+=(const Jet& o) { return combine(o, 1.0); }
  Jet& operator-=(const Jet& o) { return combine(o, -1.0); }
  Jet& operator+=(double s) { c_[0] += s; return *this; }
  Jet& operator-=(double s) { c_[0] -= s; return *this; }
  Jet& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  Jet& operator/=(double s) { return *this *= (1.0 / s); }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    if (a.order() != b.order()) {
      int p = std::min(a.order(), b.order());
      return a.truncated(p) * b.truncated(p);
    }
    Jet r(a.layout_, 0.0);
    const double* x = a.c_.data();
    const double* y = b.c_.data();
    double* z = r.c_.data();
    for (const auto& t : a.layout_->mul_table()) z[t.c] += x[t.a] * y[t.b];
    return r;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a -= s; }
  friend Jet operator-(double s, const Jet& a) { Jet r = -a; return r += s; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(Jet a, double s) { return a /= s; }
  friend Jet operator-(Jet a) { return a *= -1.0; }

 private:
  Jet& combine(const Jet& o, double sign) {
    if (o.order() < order()) *this = truncated(o.order());
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] += sign * o.c_[m];
    return *this;
  }

  LayoutPtr layout_;
  std::vector<double> c_;
};

/// f(a) for a univariate f given its derivatives f^(k)(a0), k = 0..order.
inline Jet compose_univariate(const Jet& a, std::span<const double> derivs) {
  const int p = a.order();
  Jet h = a.shift();
  Jet r(a.layout_ptr(), derivs[0]);
  Jet hk(a.layout_ptr(), 1.0);
  double fact = 1.0;
  for (int k = 1; k <= p; ++k) {
    hk = hk * h;
    fact *= k;
    Jet term = hk;
    term *= derivs[static_cast<std::size_t>(k)] / fact;
    r += term;
  }
  return r;
}

inline Jet exp(const Jet& a) {
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1, std::exp(a.value()));
  return compose_univariate(a, d);
}

inline Jet pow(const Jet& a, double s) {
  const double a0 = a.value();
  if (a0 <= 0.0 && s != std::floor(s)) fail(ErrorCode::DomainError, "non-integer power of a nonpositive jet");
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  double coef = 1.0;
  for (int k = 0; k <= a.order(); ++k) {
    d[static_cast<std::size_t>(k)] = coef * std::pow(a0, s - k);
    coef *= (s - k);
  }
  return compose_univariate(a, d);
}

inline Jet sqrt(const Jet& a) { return pow(a, 0.5); }
inline Jet reciprocal(const Jet& a) {
  if (a.value() == 0.0) fail(ErrorCode::DomainError, "division by a jet with zero value");
  return pow(a, -1.0);
}
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
inline Jet operator/(double s, const Jet& b) { return reciprocal(b) * s; }

inline Jet log(const Jet& a) {
  const double a0 = a.value();
  if (a0 <= 0.0) fail(ErrorCode::DomainError, "log of a nonpositive jet");
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  d[0] = std::log(a0);
  double fk = 1.0;  // (k-1)!
  for (int k = 1; k <= a.order(); ++k) {
    if (k > 1) fk *= (k - 1);
    d[static_cast<std::size_t>(k)] = ((k % 2) ? 1.0 : -1.0) * fk / std::pow(a0, k);
  }
  return compose_univariate(a, d);
}

inline Jet sin(const Jet& a) {
  const double s = std::sin(a.value()), c = std::cos(a.value());
  const double cyc[4] = {s, c, -s, -c};
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  for (int k = 0; k <= a.order(); ++k) d[static_cast<std::size_t>(k)] = cyc[k % 4];
  return compose_univariate(a, d);
}

inline Jet cos(const Jet& a) {
  const double s = std::sin(a.value()), c = std::cos(a.value());
  const double cyc[4] = {c, -s, -c, s};
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  for (int k = 0; k <= a.order(); ++k) d[static_cast<std::size_t>(k)] = cyc[k % 4];
  return compose_univariate(a, d);
}

inline Jet sinh(const Jet& a) {
  const double s = std::sinh(a.value()), c = std::cosh(a.value());
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  for (int k = 0; k <= a.order(); ++k) d[static_cast<std::size_t>(k)] = (k % 2) ? c : s;
  return compose_univariate(a, d);
}

inline Jet cosh(const Jet& a) {
  const double s = std::sinh(a.value()), c = std::cosh(a.value());
  std::vector<double> d(static_cast<std::size_t>(a.order()) + 1);
  for (int k = 0; k <= a.order(); ++k) d[static_cast<std::size_t>(k)] = (k % 2) ? s : c;
  return compose_univariate(a, d);
}

inline Jet atan(const Jet& a) {
  // atan' = 1/(1+a^2): build it as a jet and integrate along the shift.
  const int p = a.order();
  if (p == 0) return Jet(a.layout_ptr(), std::atan(a.value()));
  auto uni = JetLayout::get(1, p);
  Jet t = Jet::variable(uni, 0, a.value());
  Jet dt = reciprocal(1.0 + t * t);
  std::vector<double> d(static_cast<std::size_t>(p) + 1);
  d[0] = std::atan(a.value());
  for (int k = 1; k <= p; ++k) {
    std::vector<int> v(static_cast<std::size_t>(k - 1), 0);
    d[static_cast<std::size_t>(k)] = dt.derivative(v);
  }
  return compose_univariate(a, d);
}

inline Jet ipow(const Jet& a, int k) {
  if (k < 0) return reciprocal(ipow(a, -k));
  Jet r(a.layout_ptr(), 1.0);
  for (int i = 0; i < k; ++i) r = r * a;
  return r;
}

/// Substitutes z_a -> subs[a] (jets over another layout with zero constant terms)
/// into the polynomial f. The result lives on the substitutes' layout.
inline Jet compose(const Jet& f, std::span<const Jet> subs) {
  const auto& lay = f.layout();
  if (static_cast<int>(subs.size()) != lay.nvars()) fail(ErrorCode::InvalidArgument, "compose: arity mismatch");
  const LayoutPtr& out = subs[0].layout_ptr();
  const int p = std::min(f.order(), out->order());
  std::vector<std::vector<Jet>> powers(subs.size());
  for (std::size_t a = 0; a < subs.size(); ++a) {
    Jet s = subs[a].shift().truncated(p);
    powers[a].push_back(Jet(s.layout_ptr(), 1.0));
    for (int k = 1; k <= p; ++k) powers[a].push_back(powers[a].back() * s);
  }
  const LayoutPtr& ol = powers[0][0].layout_ptr();
  Jet r(ol, 0.0);
  for (std::size_t m = 0; m < lay.degree_begin(p + 1); ++m) {
    const double c = f.coeff(m);
    if (c == 0.0) continue;
    auto e = lay.exponents(m);
    Jet term(ol, c);
    bool first = true;
    for (std::size_t a = 0; a < subs.size(); ++a) {
      if (e[a] == 0) continue;
      if (first) {
        term = powers[a][e[a]] * c;
        first = false;
      } else {
        term = term * powers[a][e[a]];
      }
    }
    r += term;
  }
  return r;
}

// Scalar helpers so that templated formulas work for double and Jet alike.
inline double value_of(double v) { return v; }
inline double value_of(const Jet& j) { return j.value(); }
inline double lift(double c, double) { return c; }
inline Jet lift(double c, const Jet& proto) { return Jet(proto.layout_ptr(), c); }
inline double ipow(double a, int k) {
  double r = 1.0;
  for (int i = 0; i < (k < 0 ? -k : k); ++i) r *= a;
  return k < 0 ? 1.0 / r : r;
}

/// Dense n x n matrix of jets, row-major.
struct JetMatrix {
  int n = 0;
  std::vector<Jet> e;

  JetMatrix() = default;
  JetMatrix(int n_, const Jet& fill) : n(n_), e(static_cast<std::size_t>(n_ * n_), fill) {}
  Jet& operator()(int i, int j) { return e[static_cast<std::size_t>(i * n + j)]; }
  const Jet& operator()(int i, int j) const { return e[static_cast<std::size_t>(i * n + j)]; }
};

/// Inverse and log-determinant of a jet matrix whose value part is positive definite
/// (elimination without pivoting).
inline JetMatrix invert(const JetMatrix& m, Jet* log_det = nullptr) {
  const int n = m.n;
  JetMatrix a = m;
  Jet zero(m.e[0].layout_ptr(), 0.0);
  JetMatrix inv(n, zero);
  for (int i = 0; i < n; ++i) inv(i, i) = Jet(m.e[0].layout_ptr(), 1.0);
  Jet ld = zero;
  for (int col = 0; col < n; ++col) {
    if (std::abs(a(col, col).value()) < 1e-300) fail(ErrorCode::SingularMetric, "singular jet matrix");
    if (log_det) {
      if (a(col, col).value() <= 0.0) fail(ErrorCode::SingularMetric, "matrix is not positive definite");
      ld += log(a(col, col));
    }
    Jet rp = reciprocal(a(col, col));
    for (int c = 0; c < n; ++c) {
      a(col, c) = a(col, c) * rp;
      inv(col, c) = inv(col, c) * rp;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      Jet f = a(r, col);
      for (int c = 0; c < n; ++c) {
        a(r, c) -= f * a(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  if (log_det) *log_det = ld;
  return inv;
}

}  // namespace finsler
