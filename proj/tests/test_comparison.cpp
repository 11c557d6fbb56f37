#include <catch2/catch_amalgamated.hpp>

#include "finsler/comparison.hpp"
#include "test_support.hpp"

using namespace finsler;
using namespace finsler::testing;
using Catch::Approx;

namespace {

Vec pt(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("forward distance in closed form", "[comparison]") {
  Rng rng;
  for (int n : {2, 3}) {
    auto spec = flat_chart(n);
    Vec x0 = Vec::Zero(n);
    for (int t = 0; t < 20; ++t) {
      Vec x = rng.point_in(spec.chart());
      auto d = forward_distance(spec, x0, x);
      CHECK(d.r == Approx(x.norm()).epsilon(1e-14));
      CHECK((d.jet.du - x / x.norm()).norm() < 1e-14);
      CHECK(finsler_laplacian(d.jet, spec) == Approx((n - 1) / d.r).epsilon(1e-8));
    }
  }
  SECTION("constant Randers: straight-line forward distance is not symmetric") {
    auto spec = randers_constant();
    Vec a = pt(-0.5, 0.2), b = pt(0.7, -0.1);
    CHECK(forward_distance(spec, a, b).r == Approx(eval_metric(spec, a, b - a)));
    CHECK(forward_distance(spec, a, b).r != Approx(forward_distance(spec, b, a).r));
  }
}

TEST_CASE("forward distance by geodesic shooting", "[comparison]") {
  SECTION("flat metric written with x-dependent coefficients") {
    auto spec = MetricSpec::riemannian(2, MetricSpec::parse_all({"1 + 0*x1", "0", "0", "1"}, 2), box(2, -2.0, 2.0));
    REQUIRE_FALSE(spec.is_translation_invariant());
    Vec x0 = pt(-0.3, 0.1), x = pt(0.8, 0.9);
    auto d = forward_distance(spec, x0, x);
    CHECK(d.r == Approx((x - x0).norm()).epsilon(1e-10));
    CHECK(finsler_laplacian(d.jet, spec) == Approx(1.0 / d.r).epsilon(1e-6));
  }
  SECTION("sphere chart: r = 2 atan|x| and the Laplacian is cot r") {
    auto spec = sphere_chart();
    for (Vec x : {pt(0.4, 0.3), pt(-0.2, 0.9), pt(1.0, -0.6)}) {
      auto d = forward_distance(spec, Vec::Zero(2), x);
      CHECK(d.r == Approx(2 * std::atan(x.norm())).epsilon(1e-9));
      CHECK(finsler_laplacian(d.jet, spec) == Approx(1.0 / std::tan(d.r)).epsilon(1e-5));
    }
  }
  SECTION("the base point and points off the chart are rejected") {
    auto spec = flat_chart();
    for (Vec x : {pt(0, 0), pt(3, 0)}) {
      try {
        forward_distance(spec, Vec::Zero(2), x);
        FAIL("expected NonSmoothDistance");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonSmoothDistance);
      }
    }
  }
}

TEST_CASE("Laplacian comparison probes", "[comparison]") {
  Rng rng;
  SECTION("Euclidean: equality at N = n, strict below for N > n") {
    for (int n : {2, 3}) {
      auto spec = flat_chart(n);
      std::vector<Vec> xs;
      for (int t = 0; t < 10; ++t) xs.push_back(rng.point_in(spec.chart()));
      for (double N : {double(n), n + 1.0, n + 2.5}) {
        auto p = laplacian_comparison_probe(spec, Vec::Zero(n), xs, {N});
        CHECK(p.K == 0.0);
        CHECK(p.alpha == 1.0);
        CHECK(p.C == Approx(N - 1));
        for (const auto& row : p.rows) {
          CHECK(row.lap == Approx((n - 1) / row.r).epsilon(1e-8));
          CHECK(row.margin <= 1e-12 * row.bound);
          if (N == n) CHECK(row.margin == Approx(0.0).margin(1e-12));
        }
      }
    }
  }
  SECTION("sphere chart: Ric^N = 1 and the bound is cot") {
    auto spec = sphere_chart();
    auto p = laplacian_comparison_probe(spec, Vec::Zero(2), {pt(0.3, 0.2), pt(-0.5, 0.4)}, {2.0});
    CHECK(p.K == 0.0);
    for (const auto& row : p.rows) CHECK(row.margin < 1e-6);
  }
  SECTION("constant Randers: finite margins, deterministic") {
    auto spec = randers_constant(0.3);
    std::vector<Vec> xs = {pt(0.5, 0.5), pt(-1, 0.3), pt(0.2, -1.4)};
    auto p1 = laplacian_comparison_probe(spec, Vec::Zero(2), xs, {3.0});
    auto p2 = laplacian_comparison_probe(spec, Vec::Zero(2), xs, {3.0});
    CHECK(p1.alpha > 1.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(std::isfinite(p1.rows[i].margin));
      CHECK(p1.rows[i].margin == p2.rows[i].margin);
    }
  }
  SECTION("N below the dimension is rejected") {
    CHECK_THROWS_AS(laplacian_comparison_probe(flat_chart(3), Vec::Zero(3), {Vec::Ones(3)}, {2.0}), Error);
  }
}
