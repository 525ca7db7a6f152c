#include <algorithm>
#include <cmath>

#include "support.hpp"

using namespace mmrisk;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Positive root of p a^2 + (p mu - lambda - q) a - q mu = 0 (model A).
double phi_closed(double q) {
  const double b = 2.0 - 1.0 - q;
  return (-b + std::sqrt(b * b + 8.0 * q)) / 2.0;
}

double w_closed(double x) { return x < 0 ? 0.0 : 2.0 - std::exp(-x); }

}  // namespace

TEST_CASE("matrix exponent") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  CHECK(matrix_exponent(a, 0.0)(0, 0) == 0.0);
  CHECK(matrix_exponent(b, 0.0) == b.q_matrix);
  CHECK_THAT(matrix_exponent(a, 1.0)(0, 0), WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THROWS_AS(matrix_exponent(a, -2.5), DomainError);
}

TEST_CASE("perron triple") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  const SpectralData s0 = perron_triple(b, 0.0);
  CHECK_THAT(s0.k, WithinAbs(0.0, 1e-14));
  CHECK(s0.h.isApprox(Vector::Ones(2), 1e-12));
  CHECK(s0.v.isApprox(RowVector{{0.5, 0.5}}, 1e-12));
  CHECK_THAT(perron_triple(a, 1.0).k, WithinAbs(2.0 / 3.0, 1e-14));
  CHECK(perron_eigenvalue(b, 0.5) > 0);
}

TEST_CASE("adjustment coefficient") {
  CHECK_THAT(adjustment_coefficient(testing::model_a()), WithinAbs(1.0, 1e-10));
  CHECK_THAT(adjustment_coefficient(single_state_model(2.0, 2.0, ClaimLaw::exponential(2.0))), WithinAbs(1.0, 1e-10));
  const RegimeModel b = testing::model_b();
  const double g = adjustment_coefficient(b);
  CHECK(std::abs(perron_eigenvalue(b, -g)) < 1e-12);
  CHECK_THROWS_WITH(adjustment_coefficient(single_state_model(1.0, 0.5, ClaimLaw::pareto(2.5, 1.0))),
                    ContainsSubstring("no Cram"));
}

TEST_CASE("exponential tilting") {
  const TiltedModel t = tilt_model(testing::model_a(), 1.0);
  CHECK_THAT(t.model.arrival_rates(0), WithinAbs(2.0, 1e-12));
  CHECK_THAT(t.model.state_claim(0).mean(), WithinAbs(1.0, 1e-12));
  CHECK_THAT(drift_report(t.model).stationary, WithinAbs(-1.0, 1e-12));
  CHECK(t.model.q_matrix(0, 0) == 0.0);

  for (const RegimeModel& m : {testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    const double g = adjustment_coefficient(m);
    const TiltedModel tm = tilt_model(m, g);
    CHECK(drift_report(tm.model).stationary < 0);
    CHECK(tm.model.q_matrix.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    // The original exponent is finite only right of -0.8 (slowest claim rate).
    for (double al = std::max(-0.2, g - 0.75); al <= g + 0.3; al += 0.1)
      CHECK_THAT(perron_eigenvalue(tm.model, al), WithinAbs(perron_eigenvalue(m, al - g), 1e-8));
  }
  CHECK_THROWS_AS(tilt_model(single_state_model(1.0, 0.5, ClaimLaw::pareto(2.5, 1.0)), 0.1), DomainError);
}

TEST_CASE("exponent derivatives") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  CHECK_THAT(k_prime(a, 0.0), WithinAbs(0.5, 1e-12));
  const auto [d1, d2] = k_derivatives(a, -1.0);
  CHECK_THAT(d1, WithinAbs(-1.0, 1e-10));
  CHECK_THAT(d2, WithinAbs(4.0, 1e-6));
  CHECK_THAT(k_prime(b, 0.0), WithinAbs(0.5, 1e-12));
  const RegimeModel s = testing::model_file("switching_claims.yaml");
  CHECK_THAT(k_prime(s, 0.0), WithinAbs(drift_report(s).stationary, 1e-8));
}

TEST_CASE("exponent is convex") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    const double lo = -0.95 * m.min_abscissa(), hi = 3.0;
    const int pts = 50;
    const double h = (hi - lo) / (pts - 1);
    std::vector<double> k(pts);
    for (int j = 0; j < pts; ++j) k[j] = perron_eigenvalue(m, lo + j * h);
    for (int j = 1; j + 1 < pts; ++j) CHECK(k[j + 1] - 2 * k[j] + k[j - 1] >= -1e-12);
  }
}

TEST_CASE("first passage roots") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  const auto r0 = exponent_roots(a, 0.0);
  REQUIRE(r0.size() == 1);
  CHECK(std::abs(r0[0].lambda) < 1e-12);
  const auto r1 = exponent_roots(a, 0.5);
  REQUIRE(r1.size() == 1);
  CHECK_THAT(r1[0].lambda.real(), WithinAbs(phi_closed(0.5), 1e-12));
  CHECK_THAT(phi_of_q(a, 0.5), WithinAbs(phi_closed(0.5), 1e-12));
  const auto rb = exponent_roots(b, 1.0);
  REQUIRE(rb.size() == 2);
  for (const auto& r : rb) {
    CHECK(r.lambda.real() > 0);
    CHECK(r.residual < 1e-9);
  }
}

TEST_CASE("exponent roots give martingales") {
  const RegimeModel b = testing::model_b();
  const double q = 1.0;
  for (const auto& r : exponent_roots(b, q)) {
    for (int i = 0; i < 2; ++i) {
      const Estimate e = mc_terminal(b, 0.0, i, 1.0, 100000, 11 + i, [&](int j, double x) {
        return (std::exp(r.lambda * x - q) * r.h(j)).real();
      });
      INFO("root " << r.lambda << " start " << i << " mc " << e.value << " se " << e.se);
      CHECK(testing::z_score(e, r.h(i).real()) < 4);
    }
  }
}

TEST_CASE("G and R matrices") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  CHECK(std::abs(g_matrix(a, 0.0)(0, 0)) < 1e-12);
  CHECK(std::abs(r_matrix(a, 0.0)(0, 0)) < 1e-12);
  CHECK_THAT(g_matrix(a, 0.5)(0, 0), WithinAbs(-phi_closed(0.5), 1e-12));
  CHECK_THAT(r_matrix(a, 0.5)(0, 0), WithinAbs(-phi_closed(0.5), 1e-12));

  const ScaleEngine eng(b, 1.0);
  const Matrix g = eng.G(), r = eng.R();
  Eigen::EigenSolver<Matrix> eg(g), er(r);
  std::vector<double> sg, sr;
  for (int k = 0; k < 2; ++k) {
    sg.push_back(eg.eigenvalues()(k).real());
    sr.push_back(er.eigenvalues()(k).real());
  }
  std::sort(sg.begin(), sg.end());
  std::sort(sr.begin(), sr.end());
  CHECK_THAT(sg[0], WithinAbs(sr[0], 1e-10));
  CHECK_THAT(sg[1], WithinAbs(sr[1], 1e-10));

  const double x = 1.5;
  const Matrix eg_x = eng.exp_G(x);
  CHECK(eg_x.rowwise().sum().maxCoeff() < 1.0);
  for (int i = 0; i < 2; ++i) {
    const auto est = mc_first_passage(b, 1.0, x, i, kInf, 100000, 21 + i);
    for (int j = 0; j < 2; ++j) {
      INFO("G check " << i << j << " exact " << eg_x(i, j) << " mc " << est[j].value << " se " << est[j].se);
      CHECK(testing::z_score(est[j], eg_x(i, j)) < 3);
    }
  }
}

TEST_CASE("W matrix") {
  const RegimeModel a = testing::model_a();
  for (double x : {0.0, 0.3, 1.0, 4.0, 12.0}) CHECK_THAT(w_matrix(a, 0.0, x)(0, 0), WithinRel(w_closed(x), 1e-12));
  CHECK(w_matrix(a, 0.0, -0.5)(0, 0) == 0.0);
  for (const RegimeModel& m : {testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    const Matrix w0 = w_matrix(m, 0.3, 0.0);
    CHECK((w0 - Matrix(m.premiums.cwiseInverse().asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(w_matrix(m, 0.3, -1.0).isZero());
  }
}

TEST_CASE("W spectral and inversion routes agree") {
  const RegimeModel s = testing::model_file("switching_claims.yaml");
  for (double q : {0.0, 0.4}) {
    const ScaleEngine eng(s, q);
    for (double x : {0.1, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const Matrix ws = eng.W(x), wi = w_matrix_inversion(s, q, x);
      const double scale = ws.cwiseAbs().maxCoeff();
      INFO("q " << q << " x " << x);
      CHECK((ws - wi).cwiseAbs().maxCoeff() < 1e-6 * scale);
    }
  }
}

TEST_CASE("Laplace transform of W") {
  const RegimeModel b = testing::model_b();
  // Grid integral on [0, 6] plus the spectral tail; the tail term continues
  // the transform analytically left of the growing roots.
  for (auto [al, q] : {std::pair{1.0, 0.0}, std::pair{2.0, 0.5}, std::pair{0.5, 1.0}}) {
    const ScaleEngine eng(b, q);
    const Matrix head =
        numeric::integrate([&](double x) -> Matrix { return std::exp(-al * x) * eng.W(x); }, 0.0, 6.0, 1e-14, 1e-12).value;
    const Matrix direct = head + eng.laplace_tail(al, 6.0);
    const Matrix inv = (matrix_exponent(b, al) - q * Matrix::Identity(2, 2)).inverse();
    INFO("alpha " << al << " q " << q);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK_THAT(direct(i, j), WithinRel(inv(i, j), 1e-8));
  }
  // Right of every root the plain integral converges.
  for (auto [gap, q] : {std::pair{1.0, 0.0}, std::pair{0.5, 1.0}}) {
    double top = 0.0;
    for (const auto& r : exponent_roots(b, q)) top = std::max(top, r.lambda.real());
    const double al = top + gap;
    const ScaleEngine eng(b, q);
    const Matrix direct =
        numeric::integrate([&](double x) -> Matrix { return std::exp(-al * x) * eng.W(x); }, 0.0, 80.0 / gap, 1e-14, 1e-12)
            .value;
    const Matrix inv = (matrix_exponent(b, al) - q * Matrix::Identity(2, 2)).inverse();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK_THAT(direct(i, j), WithinRel(inv(i, j), 1e-8));
  }
}

TEST_CASE("Z matrix") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  CHECK(z_matrix(b, 1.0, 0.0).isIdentity(1e-14));
  for (double x : {0.5, 3.0}) CHECK_THAT(z_matrix(a, 0.0, x)(0, 0), WithinAbs(1.0, 1e-12));

  // Trapezoid refinement of I - ∫ W (Q - q I) at two resolutions.
  const double q = 1.0, x = 1.0;
  const ScaleEngine eng(b, q);
  auto trapezoid = [&](int panels) {
    Matrix s = 0.5 * (eng.W(0.0) + eng.W(x));
    for (int k = 1; k < panels; ++k) s += eng.W(x * k / panels);
    return Matrix(s * (x / panels));
  };
  const Matrix t1 = trapezoid(2000), t2 = trapezoid(4000);
  const Matrix integral = t2 + (t2 - t1) / 3.0;
  const Matrix oracle = Matrix::Identity(2, 2) - integral * (b.q_matrix - q * Matrix::Identity(2, 2));
  CHECK((eng.Z(x) - oracle).cwiseAbs().maxCoeff() < 1e-6);
  const Matrix quad = z_matrix_quadrature(b, q, x, 0.0, [&](double y) { return eng.W(y); });
  CHECK((eng.Z(x) - quad).cwiseAbs().maxCoeff() < 1e-9);
  const Matrix quad_a = z_matrix_quadrature(b, q, x, 0.7, [&](double y) { return eng.W(y); });
  CHECK((eng.Z(x, 0.7) - quad_a).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("C infinity and survival") {
  const RegimeModel a = testing::model_a();
  const ScaleEngine ea(a, 0.0);
  CHECK_THAT(ea.c_infinity()(0, 0), WithinAbs(0.5, 1e-10));
  CHECK_THAT(ea.survival_direct(0.0)(0), WithinAbs(0.5, 1e-10));
  for (const RegimeModel& m : {testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    // W C_inf 1 cancels growing modes, so it is only usable at moderate x.
    const ScaleEngine e(m, 0.0);
    for (double x : {0.0, 1.0, 2.0, 5.0}) CHECK((e.survival_direct(x) - survival(m, x)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("potential density") {
  const RegimeModel a = testing::model_a();
  CHECK_THAT(potential_density(a, 0.0, 1.0, 2.0)(0, 0), WithinAbs(2.0 - std::exp(-1.0), 1e-12));
  CHECK(std::abs(potential_density(a, 0.0, 1.0, 0.0)(0, 0)) < 1e-12);

  for (const RegimeModel& m : {testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    const ScaleEngine e(m, 0.1);
    double worst = 0.0;
    for (int ix = 0; ix < 50; ++ix)
      for (int iz = 0; iz < 50; ++iz) worst = std::min(worst, e.potential_density(0.2 * ix, 0.2 * iz).minCoeff());
    CHECK(worst > -1e-10);
  }

  // Discounted occupation of [0, b] against simulation.
  const RegimeModel b = testing::model_b();
  const double q = 0.5, x = 1.0, top = 3.0;
  const ScaleEngine eng(b, q);
  auto u = [&](double z) -> Matrix { return eng.potential_density(x, z); };
  const Matrix occ = numeric::integrate(u, 0.0, x, 1e-12).value + numeric::integrate(u, x, top, 1e-12).value;
  for (int i = 0; i < 2; ++i) {
    const auto est = mc_occupation(b, q, x, i, top, 100000, 31 + i);
    for (int j = 0; j < 2; ++j) {
      INFO("occupation " << i << j << " exact " << occ(i, j) << " mc " << est[j].value << " se " << est[j].se);
      CHECK(testing::z_score(est[j], occ(i, j)) < 4);
    }
  }
}

TEST_CASE("two-sided exit") {
  const RegimeModel a = testing::model_a(), b = testing::model_b();
  CHECK(exit_upward(b, 0.2, 2.0, 2.0).isIdentity());
  CHECK(exit_downward(b, 0.2, 2.0, 2.0, 0.3).isZero());
  CHECK_THAT(exit_upward(a, 0.0, 1.0, 2.0)(0, 0), WithinAbs(w_closed(1.0) / w_closed(2.0), 1e-12));
  CHECK_THAT(exit_upward(a, 0.0, 1.0, 2.0)(0, 0), WithinAbs(0.875289, 1e-6));

  const ScaleEngine eb(b, 0.2);
  CHECK((eb.exit_downward(1.0, 40.0, 0.0) - eb.discounted_ruin(1.0)).cwiseAbs().maxCoeff() < 1e-10);

  const Matrix up = eb.exit_upward(1.0, 3.0);
  for (int i = 0; i < 2; ++i) {
    const auto est = mc_exit(b, 0.2, 1.0, 3.0, i, 0.0, 100000, 41 + i);
    for (int j = 0; j < 2; ++j) {
      INFO("upward " << i << j << " exact " << up(i, j) << " mc " << est.upward[j].value << " se " << est.upward[j].se);
      CHECK(testing::z_score(est.upward[j], up(i, j)) < 3);
    }
  }
  const double down = exit_downward(a, 0.3, 1.0, 4.0, 0.5)(0, 0);
  const auto est = mc_exit(a, 0.3, 1.0, 4.0, 0, 0.5, 100000, 51);
  INFO("downward exact " << down << " mc " << est.downward[0].value << " se " << est.downward[0].se);
  CHECK(testing::z_score(est.downward[0], down) < 3);
}

TEST_CASE("scale martingale is constant in time") {
  const RegimeModel b = testing::model_b();
  const double q = 0.1, x = 1.0, top = 3.0;
  const ScaleEngine eng(b, q);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double start = eng.W(x)(i, j);
      for (double t : {0.5, 1.0, 2.0}) {
        const Estimate e = mc_stopped_functional(b, q, x, i, top, t, 100000, 61 + 10 * i + j,
                                                 [&](int phase, double level) { return eng.W(level)(phase, j); });
        INFO("W_" << i << j << " t " << t << " start " << start << " mc " << e.value << " se " << e.se);
        CHECK(testing::z_score(e, start) < 4);
      }
    }
}

TEST_CASE("scale set grid") {
  const RegimeModel b = testing::model_b();
  const ScaleSet s = build_scale_set(b, 0.2, 0.05, 2.0);
  REQUIRE(s.grid.size() == 41);
  CHECK(s.grid.back() == Catch::Approx(2.0));
  CHECK((s.w[10] - w_matrix(b, 0.2, 0.5)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((s.z[10] - z_matrix(b, 0.2, 0.5)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((s.g - g_matrix(b, 0.2)).cwiseAbs().maxCoeff() < 1e-14);
}
