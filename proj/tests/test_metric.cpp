#include <catch2/catch_amalgamated.hpp>

#include "finsler/metric.hpp"
#include "test_support.hpp"

using namespace finsler;
using namespace finsler::testing;
using Catch::Approx;

TEST_CASE("expression parser", "[metric][expr]") {
  Vec x(2);
  x << 0.5, -2.0;
  CHECK(Expr::parse("x1^2 + 3*x2", 2)(as_span(x)) == Approx(-5.75));
  CHECK(Expr::parse("-x2^2", 2)(as_span(x)) == Approx(-4.0));
  CHECK(Expr::parse("exp(x1)*cos(pi*x2) / (1 + x1)", 2)(as_span(x)) == Approx(std::exp(0.5) / 1.5));
  CHECK(Expr::parse("2^-1", 2).is_constant());
  CHECK_THROWS_AS(Expr::parse("x3", 2), Error);
  CHECK_THROWS_AS(Expr::parse("foo(x1)", 2), Error);
  CHECK_THROWS_AS(Expr::parse("(x1", 2), Error);
}

TEST_CASE("jet arithmetic matches closed-form derivatives", "[metric][jet]") {
  auto lay = JetLayout::get(2, 4);
  Jet a = Jet::variable(lay, 0, 0.3), b = Jet::variable(lay, 1, 1.7);
  Jet f = exp(a * b) / sqrt(b) + log(b) * sin(a);
  auto fn = [](const Vec& z) { return std::exp(z[0] * z[1]) / std::sqrt(z[1]) + std::log(z[1]) * std::sin(z[0]); };
  Vec z(2);
  z << 0.3, 1.7;
  for (std::vector<int> d : {std::vector<int>{0}, {1}, {0, 1}, {1, 1}, {0, 0, 1}}) {
    double fd = central_fd(fn, z, d, d.size() == 3 ? 1e-3 : 1e-4);
    CHECK(f.derivative(d) == Approx(fd).epsilon(1e-5).margin(1e-6));
  }
  Jet t = atan(a * 2.0);
  CHECK(t.derivative({0}) == Approx(2.0 / (1 + 0.36)));
  // (atan 2x)''' = (192 x^2 - 16) / (1 + 4x^2)^3
  CHECK(t.derivative({0, 0, 0}) == Approx((192 * 0.09 - 16) / std::pow(1.36, 3)).epsilon(1e-13));
}

TEST_CASE("eval_metric examples", "[metric]") {
  Vec x = Vec::Zero(2), y(2);
  y << 3, 4;
  CHECK(eval_metric(flat_chart(), x, y) == Approx(5.0).epsilon(1e-15));
  auto r = randers_constant();
  y << 1, 0;
  CHECK(eval_metric(r, x, y) == Approx(1.5));
  y << -1, 0;
  CHECK(eval_metric(r, x, y) == Approx(0.5));
  CHECK_THROWS_AS(eval_metric(r, x, Vec::Zero(2)), Error);
}

TEST_CASE("Randers with |b| >= 1 is rejected", "[metric]") {
  try {
    randers_constant(1.2);
    FAIL("expected NotStronglyConvex");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotStronglyConvex);
  }
}

TEST_CASE("homogeneity of F and g", "[metric][property]") {
  Rng rng;
  for (const auto& spec : {randers_varying(), sphere_chart(), flat_chart()}) {
    for (int k = 0; k < 100; ++k) {
      Vec x = rng.point_in(spec.chart()), y = rng.vec(2, -2, 2);
      double lam = rng.uniform(0.1, 5.0);
      CHECK(eval_metric(spec, x, lam * y) == Approx(lam * eval_metric(spec, x, y)).epsilon(1e-12));
      Mat g1 = fundamental_tensor(spec, x, y).g, g2 = fundamental_tensor(spec, x, lam * y).g;
      CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("metric_jet vs finite differences of F^2", "[metric][jet][oracle]") {
  Rng rng;
  for (const auto& spec : {randers_varying(), randers_constant(), sphere_chart()}) {
    Vec x = rng.point_in(spec.chart(), 0.5), y = rng.direction(2);
    Jet L = metric_jet(spec, x, y, 4);
    auto f2 = [&](const Vec& z) {
      return spec.fiber_square<double, double>(std::span<const double>(z.data(), 2), std::span<const double>(z.data() + 2, 2));
    };
    Vec z(4);
    z << x, y;
    const auto& lay = L.layout();
    for (std::size_t m = 1; m < lay.degree_begin(4); ++m) {
      std::vector<int> dirs;
      auto e = lay.exponents(m);
      for (int a = 0; a < 4; ++a)
        for (int t = 0; t < e[static_cast<std::size_t>(a)]; ++t) dirs.push_back(a);
      double h = dirs.size() == 3 ? 1e-3 : 1e-4;
      double fd = central_fd(f2, z, dirs, h);
      double jet = L.derivative(dirs);
      INFO("monomial " << m << " family " << to_string(spec.family()));
      CHECK(std::abs(jet - fd) <= 1e-5 * std::max(1.0, std::abs(jet)));
    }
  }
}

TEST_CASE("metric_jet structure for quadratic fibers", "[metric][jet]") {
  Vec x(2), y(2);
  x << 0.2, -0.1;
  y << 0.7, 1.3;
  Jet L = metric_jet(flat_chart(), x, y);
  CHECK(L.derivative({2, 2}) == 2.0);
  CHECK(L.derivative({2, 3}) == 0.0);
  CHECK(L.derivative({2, 3, 3}) == 0.0);
  Jet Ls = metric_jet(sphere_chart(), x, y);
  for (std::vector<int> d : {std::vector<int>{2, 2, 2}, {2, 3, 3}, {2, 2, 3, 3}, {3, 3, 3, 3}}) CHECK(Ls.derivative(d) == 0.0);
}

TEST_CASE("fundamental and Cartan tensors", "[metric]") {
  Rng rng;
  SECTION("Riemannian: g = a and C = 0") {
    auto spec = sphere_chart();
    Vec x(2), y(2);
    x << 0.3, 0.4;
    y << 1.0, -2.0;
    auto pf = fundamental_tensor(spec, x, y);
    double f = 4.0 / std::pow(1 + 0.25, 2);
    CHECK(pf.g(0, 0) == Approx(f));
    CHECK(pf.g(0, 1) == 0.0);
    CHECK(pf.cartan.max_abs() == 0.0);
    CHECK((pf.g * pf.g_inv - Mat::Identity(2, 2)).norm() < 1e-10);
  }
  SECTION("Randers closed form") {
    auto spec = randers_constant();
    Vec x = Vec::Zero(2), y(2), b(2);
    y << 1, 0;
    b << 0.5, 0;
    auto pf = fundamental_tensor(spec, x, y);
    Mat ref = randers_g_closed_form(Mat::Identity(2, 2), b, y);
    CHECK((pf.g - ref).cwiseAbs().maxCoeff() < 1e-12);
    // Cartan from finite differences of the closed-form g.
    for (int k = 0; k < 2; ++k) {
      Vec yp = y, ym = y;
      yp[k] += 1e-5;
      ym[k] -= 1e-5;
      Mat dg = (randers_g_closed_form(Mat::Identity(2, 2), b, yp) - randers_g_closed_form(Mat::Identity(2, 2), b, ym)) / 2e-5;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(pf.cartan(i, j, k) == Approx(0.5 * dg(i, j)).margin(1e-8));
    }
  }
  SECTION("Cartan annihilates y") {
    auto spec = randers_varying();
    for (int t = 0; t < 100; ++t) {
      Vec x = rng.point_in(spec.chart()), y = rng.vec(2, -1, 1);
      auto pf = fundamental_tensor(spec, x, y);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double s = 0;
          for (int k = 0; k < 2; ++k) s += pf.cartan(i, j, k) * y[k];
          CHECK(std::abs(s) < 1e-10);
        }
    }
  }
}

TEST_CASE("legendre_dual", "[metric][legendre]") {
  Vec x = Vec::Zero(2), xi(2);
  xi << 3, 4;
  auto e = legendre_dual(flat_chart(), x, xi);
  CHECK(e.grad[0] == Approx(3));
  CHECK(e.grad[1] == Approx(4));
  CHECK(e.dual_norm == Approx(5));
  auto z = legendre_dual(randers_constant(), x, Vec::Zero(2));
  CHECK(z.grad.isZero(0.0));
  CHECK(z.dual_norm == 0.0);

  SECTION("Randers dual norm vs brute force over 1e5 sphere samples") {
    auto spec = randers_constant();
    xi << 1, 0;
    auto r = legendre_dual(spec, x, xi);
    double best = 0;
    for (int k = 0; k < 100000; ++k) {
      double t = 2 * std::numbers::pi * k / 100000;
      Vec v(2);
      v << std::cos(t), std::sin(t);
      best = std::max(best, xi.dot(v) / eval_metric(spec, x, v));
    }
    CHECK(r.dual_norm == Approx(best).margin(1e-4));
    // F* for Randers with a = I, b = (1/2, 0) at xi = (1, 0) is 1/(1+1/2).
    CHECK(r.dual_norm == Approx(2.0 / 3.0).epsilon(1e-12));
  }

  SECTION("involution at random covectors") {
    Rng rng;
    auto spec = randers_varying();
    for (int k = 0; k < 100; ++k) {
      Vec xx = rng.point_in(spec.chart()), c = rng.vec(2, -3, 3);
      auto r = legendre_dual(spec, xx, c);
      Vec back = forward_legendre(spec, xx, r.grad);
      CHECK((back - c).norm() <= 1e-9 * c.norm());
      CHECK(c.dot(r.grad) == Approx(r.dual_norm * r.dual_norm).epsilon(1e-9));
    }
  }
}

TEST_CASE("misalignment", "[metric][misalignment]") {
  Vec x = Vec::Zero(2);
  CHECK(misalignment(flat_chart(), x).value == 1.0);
  CHECK(misalignment(sphere_chart(), x).value == 1.0);
  CHECK_THROWS_AS(misalignment(flat_chart(), x, 8), Error);

  SECTION("Randers against a dense 10^6-triple oracle") {
    auto spec = randers_constant();
    const int res = 100;
    std::vector<Vec> dirs;
    std::vector<Mat> gs;
    for (int k = 0; k < res; ++k) {
      double t = 2 * std::numbers::pi * k / res;
      Vec v(2);
      v << std::cos(t), std::sin(t);
      dirs.push_back(v);
      Vec b(2);
      b << 0.5, 0;
      gs.push_back(randers_g_closed_form(Mat::Identity(2, 2), b, v));
    }
    double oracle = 0;
    for (int iv = 0; iv < res; ++iv)
      for (int iw = 0; iw < res; ++iw)
        for (int iy = 0; iy < res; ++iy)
          oracle = std::max(oracle, dirs[iy].dot(gs[iv] * dirs[iy]) / dirs[iy].dot(gs[iw] * dirs[iy]));
    auto est = misalignment(spec, x, 32);
    INFO("oracle " << oracle << " library " << est.value);
    CHECK(est.value >= 1.0);
    CHECK(std::abs(est.value - oracle) <= 0.01 * oracle);
    CHECK(est.value <= oracle * (1 + 1e-6));
    CHECK(est.sampled <= est.value);
  }
}
