#include <catch2/catch_amalgamated.hpp>

#include "finsler/connection.hpp"
#include "test_support.hpp"

using namespace finsler;
using namespace finsler::testing;
using Catch::Approx;

namespace {

double max_diff(const Tensor3& a, const Tensor3& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace

TEST_CASE("flat connection vanishes", "[connection]") {
  Rng rng;
  auto spec = flat_chart(3);
  Vec x = rng.point_in(spec.chart()), y = rng.direction(3);
  auto cf = chern_connection(spec, x, y);
  CHECK(cf.G.isZero(0.0));
  CHECK(cf.N.isZero(0.0));
  CHECK(cf.gamma.max_abs() == 0.0);
}

TEST_CASE("spray of Riemannian charts vs finite-difference Christoffel symbols", "[connection][oracle]") {
  Rng rng;
  for (const auto& spec : {sphere_chart(), hyperbolic_chart(), sphere_chart(3)}) {
    const int n = spec.dim();
    for (int t = 0; t < 20; ++t) {
      Vec x = rng.point_in(spec.chart()), y = rng.vec(n, -2, 2);
      Tensor3 gam = fd_christoffel(spec, x);
      Vec G = spray_coeffs(spec, x, y);
      Mat N = nonlinear_connection(spec, x, y);
      for (int i = 0; i < n; ++i) {
        double ref = 0;
        for (int j = 0; j < n; ++j) {
          double nref = 0;
          for (int k = 0; k < n; ++k) {
            ref += 0.5 * gam(i, j, k) * y[j] * y[k];
            nref += gam(i, j, k) * y[k];
          }
          CHECK(N(i, j) == Approx(nref).margin(1e-6));
        }
        CHECK(G[i] == Approx(ref).epsilon(1e-6).margin(1e-6));
      }
      CHECK(max_diff(chern_connection(spec, x, y).gamma, gam) < 1e-6);
    }
  }
}

TEST_CASE("spray homogeneity and Euler identity", "[connection][property]") {
  Rng rng;
  auto spec = randers_varying();
  for (int t = 0; t < 50; ++t) {
    Vec x = rng.point_in(spec.chart()), y = rng.vec(2, -1, 1);
    Vec G = spray_coeffs(spec, x, y);
    CHECK((spray_coeffs(spec, x, 2.0 * y) - 4.0 * G).norm() <= 1e-10 * std::max(1.0, G.norm()));
    Mat N = nonlinear_connection(spec, x, y);
    CHECK((N * y - 2.0 * G).norm() <= 1e-9 * std::max(1.0, G.norm()));
  }
}

TEST_CASE("round-sphere chart Christoffel symbols in closed form", "[connection][oracle]") {
  Rng rng;
  auto spec = sphere_chart();
  for (int t = 0; t < 20; ++t) {
    Vec x = rng.point_in(spec.chart()), y = rng.direction(2);
    // a = exp(2f) I with f = log 2 - log(1 + |x|^2).
    Vec df = -2.0 * x / (1 + x.squaredNorm());
    auto cf = chern_connection(spec, x, y);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          double ref = (i == j) * df[k] + (i == k) * df[j] - (j == k) * df[i];
          CHECK(cf.gamma(i, j, k) == Approx(ref).margin(1e-8));
        }
  }
}

TEST_CASE("Chern connection invariants on a Randers metric", "[connection][property]") {
  Rng rng;
  auto spec = randers_varying();
  auto metric_field = [](const GeometryJets& gj) {
    TensorFieldJet t;
    t.upper = {false, false};
    for (int i = 0; i < gj.n; ++i)
      for (int j = 0; j < gj.n; ++j) t.comps.push_back(gj.g(i, j));
    return t;
  };
  auto f2_field = [](const GeometryJets& gj) { return TensorFieldJet{{}, {gj.L}}; };
  for (int t = 0; t < 100; ++t) {
    Vec x = rng.point_in(spec.chart()), y = rng.vec(2, -1, 1);
    auto gj = geometry_jets(spec, x, y, 4);
    auto cf = connection_frame(gj);
    for (int i = 0; i < 2; ++i) {
      double spray = 0;
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          CHECK(std::abs(cf.gamma(i, j, k) - cf.gamma(i, k, j)) < 1e-10);
          spray += 0.5 * cf.gamma(i, j, k) * y[j] * y[k];
        }
      CHECK(spray == Approx(cf.G[i]).epsilon(1e-9).margin(1e-12));
    }
    CHECK(horizontal_derivative(metric_field, gj).max_abs() < 1e-8);
    CHECK(horizontal_derivative(f2_field, gj).max_abs() < 1e-8);
  }
}

TEST_CASE("horizontal derivative of a fiber-independent scalar is its gradient", "[connection]") {
  auto spec = randers_varying();
  Vec x(2), y(2);
  x << 0.3, -0.2;
  y << 0.4, 0.9;
  auto u = [](const GeometryJets& gj) {
    auto lay = JetLayout::get(2 * gj.n, gj.order);
    Jet a = Jet::variable(lay, 0, gj.x[0]), b = Jet::variable(lay, 1, gj.x[1]);
    return TensorFieldJet{{}, {sin(a) * exp(b)}};
  };
  auto d = horizontal_derivative(u, spec, x, y);
  CHECK(d.at({0}) == Approx(std::cos(0.3) * std::exp(-0.2)).epsilon(1e-14));
  CHECK(d.at({1}) == Approx(std::sin(0.3) * std::exp(-0.2)).epsilon(1e-14));
}

TEST_CASE("Riemannian Chern connection is fiber independent", "[connection]") {
  auto spec = hyperbolic_chart();
  Vec x(2);
  x << 0.1, 0.25;
  Tensor3 ref = chern_connection(spec, x, sphere_samples(2, 1).front()).gamma;
  for (const Vec& y : sphere_samples(2, 20)) CHECK(max_diff(chern_connection(spec, x, y).gamma, ref) < 1e-9);
}

TEST_CASE("geodesics", "[connection][geodesic]") {
  SECTION("Euclidean lines") {
    auto spec = flat_chart();
    Vec x0(2), y0(2);
    x0 << -1, 0.5;
    y0 << 0.7, -0.3;
    auto p = integrate_geodesic(spec, x0, y0, 2.0);
    for (const auto& s : p.samples) CHECK((s.x - (x0 + s.t * y0)).norm() < 1e-12);
  }
  SECTION("sphere chart: equator has period 2 pi") {
    auto spec = sphere_chart();
    Vec x0(2), y0(2);
    x0 << 1, 0;
    y0 << 0, 1;
    auto p = integrate_geodesic(spec, x0, y0, 2 * std::numbers::pi);
    CHECK((p.samples.back().x - x0).norm() < 1e-4);
    for (const auto& s : p.samples) CHECK(std::abs(s.x.norm() - 1.0) < 1e-6);
    CHECK(p.drift < 1e-6);
  }
  SECTION("sphere chart: meridian through the origin") {
    auto spec = sphere_chart();
    Vec x0 = Vec::Zero(2), y0(2);
    y0 << 0.5, 0;
    auto p = integrate_geodesic(spec, x0, y0, 1.5);
    for (const auto& s : p.samples) {
      CHECK(s.x[0] == Approx(std::tan(s.t / 2)).epsilon(1e-8));
      CHECK(s.x[1] == 0.0);
    }
  }
  SECTION("Randers: conservation and irreversibility") {
    auto spec = randers_varying();
    Vec x0 = Vec::Zero(2), y0(2);
    y0 << 0.5, 0.3;
    auto fwd = integrate_geodesic(spec, x0, y0, 1.0);
    CHECK(fwd.drift < 1e-6 * eval_metric(spec, x0, y0));
    auto back = integrate_geodesic(spec, fwd.samples.back().x, -fwd.samples.back().v, 1.0);
    INFO("reversal mismatch " << (back.samples.back().x - x0).norm());
    CHECK((back.samples.back().x - x0).norm() > 1e-3);
  }
  SECTION("leaving the chart is an error") {
    auto spec = flat_chart();
    Vec x0 = Vec::Zero(2), y0(2);
    y0 << 1, 0;
    try {
      integrate_geodesic(spec, x0, y0, 3.0);
      FAIL("expected LeftChart");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::LeftChart);
    }
    CHECK_THROWS_AS(integrate_geodesic(spec, x0, Vec::Zero(2), 1.0), Error);
  }
  SECTION("Hermite interpolation between samples") {
    auto spec = sphere_chart();
    Vec x0(2), y0(2);
    x0 << 1, 0;
    y0 << 0, 1;
    auto p = integrate_geodesic(spec, x0, y0, 1.0, 0.01);
    auto [x, v] = p.state_at(0.555);
    CHECK(x[0] == Approx(std::cos(0.555)).epsilon(1e-8));
    CHECK(v[1] == Approx(std::cos(0.555)).epsilon(1e-6));
  }
}

TEST_CASE("parallel transport", "[connection][transport]") {
  SECTION("Euclidean: constant") {
    auto spec = flat_chart();
    Vec x0 = Vec::Zero(2), y0(2), v0(2);
    y0 << 1, 0.5;
    v0 << -0.3, 2;
    auto path = CurvePath::from(integrate_geodesic(spec, x0, y0, 1.0));
    auto tr = parallel_transport(spec, path, v0, TransportReference::PathVelocity);
    CHECK((tr.v.back() - v0).norm() < 1e-14);
  }
  SECTION("sphere chart: holonomy of a small square equals enclosed curvature") {
    auto spec = sphere_chart();
    const double eps = 1e-2;
    Vec c(2);
    c << 0.3, 0.2;
    std::vector<Vec> corners;
    for (auto [dx, dy] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}) {
      Vec v(2);
      v << c[0] + 0.5 * eps * dx, c[1] + 0.5 * eps * dy;
      corners.push_back(v);
    }
    auto path = CurvePath::polygon(corners, 100);
    Vec v0(2);
    v0 << 1, 0;
    auto tr = parallel_transport(spec, path, v0, TransportReference::PathVelocity);
    const Vec& v1 = tr.v.back();
    double angle = std::atan2(v1[1], v1[0]);
    double area = spec.quadratic_form(c)(0, 0) * eps * eps;  // K = 1
    INFO("angle " << angle << " area " << area);
    CHECK(std::abs(angle) == Approx(area).epsilon(1e-3));
  }
  SECTION("norm conservation along geodesics") {
    auto spec = randers_varying();
    Vec x0(2), y0(2), v0(2);
    x0 << -0.2, 0.1;
    y0 << 0.6, 0.2;
    v0 << 0.1, 1.0;
    auto path = CurvePath::from(integrate_geodesic(spec, x0, y0, 1.0));
    auto tr = parallel_transport(spec, path, v0, TransportReference::PathVelocity);
    double drift = 0;
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      auto [x, xd] = path.state(tr.t[i]);
      Mat g = fundamental_matrix(spec, x, xd);
      Mat g0 = fundamental_matrix(spec, x0, y0);
      drift = std::max(drift, std::abs(tr.v[i].dot(g * tr.v[i]) - v0.dot(g0 * v0)));
    }
    CHECK(drift < 1e-6);
  }
}
