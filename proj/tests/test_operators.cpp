#include <catch2/catch_amalgamated.hpp>

#include "finsler/operators.hpp"
#include "test_support.hpp"

using namespace finsler;
using namespace finsler::testing;
using Catch::Approx;

namespace {

FieldJet jet_of(const std::string& u, const Vec& x) { return field_jet(Expr::parse(u, static_cast<int>(x.size())), x); }

Vec pt(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("nonlinear gradient", "[operators]") {
  auto g = nonlinear_gradient(jet_of("x1 + 2*x2", pt(0.1, 0.2)), flat_chart());
  CHECK(g.grad[0] == Approx(1.0));
  CHECK(g.grad[1] == Approx(2.0));
  CHECK(g.dual_norm * g.dual_norm == Approx(5.0));
  auto z = nonlinear_gradient(jet_of("3", pt(0.1, 0.2)), flat_chart());
  CHECK(z.grad.isZero(0.0));
  CHECK(z.dual_norm == 0.0);

  Rng rng;
  auto spec = randers_varying();
  for (int t = 0; t < 100; ++t) {
    FieldJet fj{rng.point_in(spec.chart()), 0.0, rng.vec(2, -2, 2), Mat::Zero(2, 2), std::nullopt};
    auto r = nonlinear_gradient(fj, spec);
    CHECK(fj.du.dot(r.grad) == Approx(r.dual_norm * r.dual_norm).epsilon(1e-9));
  }
}

TEST_CASE("Finsler Hessian", "[operators]") {
  auto fj = jet_of("x1^3*x2 - x2^2", pt(0.4, -0.3));
  CHECK((finsler_hessian(fj, flat_chart()) - fj.d2u).norm() == 0.0);
  CHECK_THROWS_AS(finsler_hessian(jet_of("1", pt(0, 0)), flat_chart()), Error);

  SECTION("sphere chart, u = x1, against a finite-difference covariant Hessian") {
    auto spec = sphere_chart();
    Vec x = pt(0.3, 0.5);
    auto h = finsler_hessian(jet_of("x1", x), spec);
    Tensor3 gam = fd_christoffel(spec, x);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(h(i, j) == Approx(-gam(0, i, j)).margin(1e-6));
  }
  SECTION("symmetric on a Randers metric") {
    Rng rng;
    auto spec = randers_varying();
    for (int t = 0; t < 50; ++t) {
      Vec x = rng.point_in(spec.chart());
      auto hh = finsler_hessian(jet_of("sin(x1)*x2 + x1^2", x), spec);
      CHECK(std::abs(hh(0, 1) - hh(1, 0)) < 1e-12);
    }
  }
}

TEST_CASE("Finsler Laplacian", "[operators]") {
  Vec x = pt(0.3, -0.6);
  CHECK(finsler_laplacian(jet_of("(x1^2 + x2^2)/2", x), flat_chart()) == Approx(2.0));
  Vec x3(3);
  x3 << 0.1, 0.2, -0.4;
  CHECK(finsler_laplacian(jet_of("(x1^2 + x2^2 + x3^2)/2", x3), flat_chart(3)) == Approx(3.0));

  SECTION("Gaussian density gives the drift Laplacian") {
    auto spec = flat_chart().with_measure(Measure::density(Expr::parse("exp(-(x1^2+x2^2)/2)", 2)));
    auto fj = jet_of("x1^2*x2 + x2^3", x);
    double flat = fj.d2u.trace();
    CHECK(finsler_laplacian(fj, spec) == Approx(flat - x.dot(fj.du)).epsilon(1e-12));
  }
  SECTION("round sphere eigenfunction") {
    auto spec = sphere_chart();
    Rng rng;
    for (int t = 0; t < 20; ++t) {
      Vec xx = rng.point_in(spec.chart());
      auto fj = jet_of("2*x1/(1 + x1^2 + x2^2)", xx);
      if (fj.du.norm() < 1e-3) continue;
      CHECK(finsler_laplacian(fj, spec) == Approx(-2.0 * fj.u).margin(1e-4));
    }
  }
  SECTION("Riemannian reduction to the weighted Laplace-Beltrami operator") {
    // Sphere chart with Lebesgue measure: (1/sigma) d_i(sigma g^{ij} u_j) with sigma = 1, g = lambda I.
    auto spec = sphere_chart(2, false);
    Rng rng;
    for (int t = 0; t < 20; ++t) {
      Vec xx = rng.point_in(spec.chart());
      auto fj = jet_of("x1*x2^2 + cos(x1)", xx);
      double lam = 4 / std::pow(1 + xx.squaredNorm(), 2);
      Vec dlam = -4.0 * lam * xx / (1 + xx.squaredNorm());
      double ref = fj.d2u.trace() / lam - dlam.dot(fj.du) / (lam * lam);
      CHECK(finsler_laplacian(fj, spec) == Approx(ref).epsilon(1e-6));
    }
  }
  SECTION("explicit reference vector") {
    Vec V = pt(1, 1);
    CHECK(finsler_laplacian(jet_of("x1*x2", x), randers_constant(), V) == Approx(2.0 * fundamental_matrix(randers_constant(), x, V).inverse()(0, 1)));
  }
}

TEST_CASE("exponentially harmonic operator", "[operators]") {
  Vec x = pt(0.7, -0.4);
  auto aff = exp_harmonic_operator(jet_of("2*x1 - x2 + 1", x), flat_chart());
  CHECK(aff.exp_lap == 0.0);
  CHECK(aff.tilde_lap == 0.0);

  auto c = exp_harmonic_operator(jet_of("4", x), randers_varying());
  CHECK(c.exp_lap == 0.0);
  CHECK(c.e == 0.0);
  CHECK(c.regularized);

  auto h = exp_harmonic_operator(jet_of("x1^2 - x2^2", x), flat_chart());
  CHECK(std::abs(h.lap) < 1e-14);
  // (Du)^2(∇²u) = (2x, -2y) diag(2, -2) (2x, -2y) = 8 (x^2 - y^2)
  CHECK(h.exp_lap == Approx(8 * (0.49 - 0.16)));

  Rng rng;
  auto spec = randers_varying();
  for (int t = 0; t < 50; ++t) {
    Vec xx = rng.point_in(spec.chart());
    auto fj = jet_of("x1^2*x2 + exp(x2)/3", xx);
    auto r = exp_harmonic_operator(fj, spec);
    CHECK(fj.du.dot(r.grad) == Approx(r.e).epsilon(1e-9));
    CHECK(r.tilde_lap == Approx(std::exp(r.e / 2) * (r.lap + r.grad.dot(r.hess * r.grad))).epsilon(1e-9));
    Eigen::SelfAdjointEigenSolver<Mat> es(principal_symbol(fj, spec));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("Bochner residual on exact exponentially harmonic fields", "[operators][bochner]") {
  Rng rng;
  const std::string theta = "atan(x2/x1)";
  SECTION("flat plane") {
    auto spec = MetricSpec::euclidean(2, box(2, 1.0, 2.0));
    for (int t = 0; t < 20; ++t) {
      auto b = bochner_residual(jet_of(theta, rng.point_in(spec.chart())), spec);
      CHECK(std::abs(b.residual) < 1e-10);
      CHECK(b.hess_hs2 > 0.0);
    }
  }
  SECTION("sphere and hyperbolic charts") {
    for (const auto& spec : {sphere_chart(), hyperbolic_chart()}) {
      for (int t = 0; t < 20; ++t) {
        Vec x = rng.point_in(spec.chart());
        x[0] = 0.1 + std::abs(x[0]);
        auto b = bochner_residual(jet_of(theta, x), spec);
        INFO("lhs " << b.lhs << " ric " << b.ricci_inf);
        CHECK(std::abs(b.residual) < 1e-10);
        CHECK(std::abs(b.ricci_inf) > 0.0);
      }
    }
  }
  SECTION("affine fields") {
    CHECK(std::abs(bochner_residual(jet_of("x1 - 3*x2", pt(0.2, 0.1)), randers_constant()).residual) < 1e-12);
    Vec x1(1);
    x1 << 0.3;
    CHECK(std::abs(bochner_residual(jet_of("2*x1 + 1", x1), flat_chart(1)).residual) < 1e-12);
  }
  SECTION("non exponentially harmonic input is rejected") {
    try {
      bochner_residual(jet_of("x1^2 - x2^2", pt(0.5, 0.2)), flat_chart());
      FAIL("expected NotExpHarmonicAt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotExpHarmonicAt);
    }
    CHECK_NOTHROW(bochner_residual(jet_of("x1^2 - x2^2", pt(0.5, 0.2)), flat_chart(), -1.0));
  }
}

TEST_CASE("composition identity", "[operators][composition]") {
  Rng rng;
  using Fn = std::function<double(double)>;
  struct Phi {
    Fn d1, d2;
  };
  std::vector<Phi> phis = {{[](double s) { return 2 * s; }, [](double) { return 2.0; }},
                           {[](double s) { return std::exp(s); }, [](double s) { return std::exp(s); }},
                           {[](double s) { return 3 * s * s; }, [](double s) { return 6 * s; }}};
  auto flat = MetricSpec::euclidean(2, box(2, 1.0, 2.0));
  for (const auto& phi : phis) {
    for (int t = 0; t < 50; ++t) {
      auto c = composition_identity(jet_of("atan(x2/x1)", rng.point_in(flat.chart())), phi.d1, phi.d2, flat);
      CHECK(std::abs(c.residual) <= 1e-8);
    }
  }
  auto ident = composition_identity(jet_of("atan(x2/x1)", pt(1.2, 1.7)), [](double) { return 1.0; }, [](double) { return 0.0; }, flat);
  CHECK(std::abs(ident.residual) < 1e-12);
  auto sq = composition_identity(jet_of("x1", pt(0.3, 0.3)), phis[0].d1, phis[0].d2, flat_chart());
  CHECK(sq.lhs == Approx(4.0));
  CHECK(sq.rhs == Approx(4.0));
  auto cst = composition_identity(jet_of("2", pt(0.3, 0.3)), phis[0].d1, phis[0].d2, flat_chart());
  CHECK(cst.lhs == 0.0);
  CHECK(cst.rhs == 0.0);
}
