#include <algorithm>
#include <cmath>

#include "support.hpp"

using namespace mmrisk;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Gauss-Legendre integral of e^{-theta zeta} P(tau_z^+ <= zeta) over zeta,
// split where the passage law jumps (z / p for each premium).
Matrix windowed_transform(const RegimeModel& m, double z, double theta) {
  const int n = m.n_states();
  std::vector<double> br;
  for (int i = 0; i < n; ++i) br.push_back(z / m.premiums(i));
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  br.push_back(br.back() + 40.0 / theta);
  const auto rule = numeric::gauss_legendre(16);
  Matrix total = Matrix::Zero(n, n);
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const int panels = k + 2 == br.size() ? 12 : 2;
    const double h = (br[k + 1] - br[k]) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = br[k] + p * h;
      for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
        const double zeta = lo + 0.5 * h * (rule.nodes[g] + 1.0);
        total += 0.5 * h * rule.weights[g] * std::exp(-theta * zeta) * upcross_cdf(m, z, zeta);
      }
    }
  }
  return total;
}

double cap_for(const RegimeModel& m) { return 40.0 / adjustment_coefficient(m); }

}  // namespace

TEST_CASE("up-crossing law at the edges of its support") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    const int n = m.n_states();
    CHECK(upcross_cdf(m, 0.0, 1.0).isIdentity(0.0));
    const double p_max = m.premiums.maxCoeff();
    CHECK(upcross_cdf(m, 1.01 * p_max * 0.7, 0.7).isZero(0.0));
    const UpcrossResult r = upcross_cdf(m, {0.2, 0.5, 1.0, 1.5}, 1.0);
    CHECK(r.method == "laplace-inversion");
    CHECK(r.inversion_change < 1e-6);
    for (std::size_t k = 0; k < r.z.size(); ++k) {
      CHECK(r.value[k].minCoeff() >= 0.0);
      CHECK(r.value[k].rowwise().sum().maxCoeff() <= 1.0 + 1e-9);
      if (k > 0) CHECK((r.value[k - 1] - r.value[k]).rowwise().sum().minCoeff() >= -1e-9);
    }
    Matrix prev = Matrix::Zero(n, n);
    for (double zeta : {0.6, 1.0, 2.0, 5.0}) {
      const Matrix cur = upcross_cdf(m, 0.5, zeta);
      CHECK((cur - prev).minCoeff() >= -1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("up-crossing law against simulation") {
  for (auto [m, z] : {std::pair{testing::model_a(), 0.5}, std::pair{testing::model_b(), 0.8}}) {
    const Matrix exact = upcross_cdf(m, z, 1.0);
    for (int i = 0; i < m.n_states(); ++i) {
      const auto est = mc_first_passage(m, 0.0, z, i, 1.0, 100000, 11 + i);
      for (int j = 0; j < m.n_states(); ++j) {
        INFO("z " << z << " i " << i << " j " << j << " exact " << exact(i, j) << " mc " << est[j].value);
        CHECK(testing::z_score(est[j], exact(i, j)) < 4);
      }
    }
  }
}

TEST_CASE("up-crossing law transforms to the passage exponential") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    for (double theta : {0.5, 2.0}) {
      const ScaleEngine eng(m, theta);
      for (double z : {0.4, 1.0}) {
        const Matrix lhs = windowed_transform(m, z, theta);
        const Matrix rhs = eng.exp_G(z) / theta;
        INFO("theta " << theta << " z " << z);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
}

TEST_CASE("Parisian ruin reduces to classical ruin") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    for (double x : {0.0, 1.0, 4.0}) {
      const Vector classical = ruin_probability(m, x);
      CHECK((parisian_ruin(m, 0.0, x) - classical).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((parisian_ruin(m, 1e-5, x) - classical).cwiseAbs().maxCoeff() < 1e-4);
    }
  }
}

TEST_CASE("Parisian ruin is monotone") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    Vector prev_zeta = ruin_probability(m, 1.0);
    for (double zeta : {0.25, 0.5, 1.0, 2.0}) {
      const ParisianSolver solver(m, zeta);
      INFO("zeta " << zeta);
      CHECK(solver.spectral_radius() < 1.0);
      CHECK(solver.quadrature_error() < 1e-8);
      CHECK(solver.upcross_inversion_change() < 1e-6);
      const Vector at1 = solver.ruin(1.0);
      CHECK((prev_zeta - at1).minCoeff() >= -1e-10);
      prev_zeta = at1;
      Vector prev_x = solver.ruin(0.0);
      CHECK(prev_x.maxCoeff() <= 1.0);
      for (double x = 0.5; x <= 8.0; x += 0.5) {
        const Vector cur = solver.ruin(x);
        CHECK((prev_x - cur).minCoeff() >= -1e-10);
        CHECK(cur.minCoeff() >= 0.0);
        prev_x = cur;
      }
      const Vector s = solver.level_zero_survival();
      CHECK((s - survival(m, 0.0)).minCoeff() >= -1e-12);
      CHECK(s.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("Parisian ruin against simulation") {
  int seed = 101;
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    for (auto [x, zeta] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}}) {
      const Vector exact = parisian_ruin(m, zeta, x);
      for (int i = 0; i < m.n_states(); ++i) {
        const Estimate e = mc_parisian(m, x, i, zeta, cap_for(m), 100000, seed++);
        INFO("x " << x << " zeta " << zeta << " i " << i << " exact " << exact(i) << " mc " << e.value << " se " << e.se);
        CHECK(testing::z_score(e, exact(i)) < 3.5);
      }
    }
  }
}

TEST_CASE("Parisian Cramer constant") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    const double g = adjustment_coefficient(m);
    const Vector classical = cramer_constant(m).tail_fit;
    double prev = classical(0);
    for (double zeta : {0.5, 1.0, 2.0}) {
      const ParisianCramer c = parisian_cramer(m, zeta);
      INFO("zeta " << zeta << " value " << c.value);
      CHECK(c.change < 0.02);
      CHECK(c.value > 0.0);
      CHECK(c.value < prev);
      prev = c.value;
      const double x = 3.0 * c.x0;
      const Vector tail = parisian_ruin(m, zeta, x) * std::exp(g * x);
      CHECK_THAT(tail(0), WithinRel(c.value, 1e-3));
    }
  }
  // Single exponential model keeps the ratio to the classical constant.
  const RegimeModel a = testing::model_a();
  const double ratio = parisian_cramer(a, 1.0).value / 0.5;
  for (double x : {5.0, 10.0}) CHECK_THAT(parisian_ruin(a, 1.0, x)(0) / ruin_probability(a, x)(0), WithinRel(ratio, 1e-3));
}

TEST_CASE("heavy-tailed Parisian asymptote") {
  const RegimeModel p = testing::model_file("pareto.yaml");
  for (double zeta : {0.5, 2.0})
    for (double x : {20.0, 80.0}) CHECK(parisian_subexp(p, x, zeta) == subexp_asymptote(p, x));
  const double asym = parisian_subexp(p, 50.0, 1.0)(0);
  const Estimate e = mc_parisian(p, 50.0, 0, 1.0, 1200.0, 20000, 5);
  INFO("mc " << e.value << " se " << e.se << " asymptote " << asym);
  CHECK(e.value / asym > 0.7);
  CHECK(e.value / asym < 1.3);
}
