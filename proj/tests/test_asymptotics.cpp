#include <cmath>

#include "support.hpp"

using namespace mmrisk;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Model A in the ruin-time scale: khat(a) = -a + a / (2 - a).
double khat_a(double a) { return -a + a / (2.0 - a); }

RegimeModel two_state_pareto() {
  RegimeModel m = testing::model_b();
  m.premiums = Vector{{1.5, 1.0}};
  m.state_claims = {ClaimLaw::pareto(2.5, 1.0), ClaimLaw::pareto(2.5, 1.0)};
  return m;
}

}  // namespace

TEST_CASE("Cramer constant, single state") {
  const McOptions mc{100000, 3};
  const CramerData d = cramer_constant(testing::model_a(), &mc);
  CHECK_THAT(d.gamma, WithinAbs(1.0, 1e-10));
  CHECK_THAT(d.tail_fit(0), WithinAbs(0.5, 1e-8));
  CHECK_THAT(d.remark, WithinAbs(0.5, 1e-10));
  REQUIRE(d.tilted.size() == 1);
  INFO("tilted " << d.tilted[0].value << " se " << d.tilted[0].se);
  CHECK(testing::z_score(d.tilted[0], 0.5) < 3);
}

TEST_CASE("Cramer constant, both estimators agree") {
  const McOptions mc{100000, 5};
  for (const RegimeModel& m : {testing::model_b(), testing::model_file("switching_claims.yaml")}) {
    const CramerData d = cramer_constant(m, &mc);
    for (int i = 0; i < m.n_states(); ++i) {
      INFO("state " << i << " fit " << d.tail_fit(i) << " tilted " << d.tilted[i].value << " se " << d.tilted[i].se);
      CHECK(d.tail_fit(i) > 0);
      CHECK(d.tail_fit_change(i) < 1e-6 * d.tail_fit(i));
      CHECK(testing::z_score(d.tilted[i], d.tail_fit(i)) < 3);
    }
  }
}

TEST_CASE("ruin curve decays at the adjustment rate") {
  for (const RegimeModel& m : {testing::model_a(), testing::model_b()}) {
    const double g = adjustment_coefficient(m);
    const ScaleEngine eng(m, 0.0);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (double x = 10.0; x <= 30.0; x += 0.5, ++n) {
      const double y = std::log(eng.ruin_probability_unclamped(x)(0));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK_THAT(slope, WithinRel(-g, 0.01));
    // Further out the subdominant modes are gone and the local slope is exact.
    const double local = std::log(eng.ruin_probability_unclamped(60.5)(0) / eng.ruin_probability_unclamped(59.5)(0));
    CHECK_THAT(local, WithinRel(-g, 1e-6));
  }
}

TEST_CASE("Segerdahl data") {
  const SegerdahlData a = segerdahl_data(testing::model_a());
  CHECK_THAT(a.m, WithinAbs(1.0, 1e-8));
  CHECK_THAT(a.c2, WithinAbs(4.0, 1e-6));
  CHECK_THAT(a.y(30.0, 35.0), WithinAbs(5.0 / (2.0 * std::sqrt(30.0)), 1e-6));

  const RegimeModel b = testing::model_b();
  const SegerdahlData sb = segerdahl_data(b);
  const auto [d1, d2] = k_derivatives(b, -sb.gamma);
  CHECK_THAT(sb.m, WithinAbs(-d1, 1e-12));
  CHECK_THAT(sb.c2, WithinAbs(d2, 1e-12));
  CHECK(sb.m > 0);
  CHECK(sb.c2 > 0);
}

TEST_CASE("Segerdahl approximation") {
  const RegimeModel a = testing::model_a();
  const SegerdahlData s = segerdahl_data(a);
  const double cramer = 0.5 * std::exp(-30.0);
  CHECK_THAT(segerdahl(s, 30.0, kInf).value(0), WithinRel(cramer, 1e-8));
  CHECK_THAT(segerdahl(s, 30.0, 30.0).value(0), WithinRel(0.5 * cramer, 1e-8));
  CHECK(segerdahl(s, 30.0, 30.0).y == 0.0);
  double prev = 0.0;
  for (double t = 5.0; t <= 80.0; t += 2.5) {
    const double v = segerdahl(s, 30.0, t).value(0);
    CHECK(v >= prev);
    CHECK(v <= cramer * (1 + 1e-12));
    prev = v;
  }
  CHECK_THROWS_AS(segerdahl(s, 0.0, 1.0), DomainError);
}

TEST_CASE("Hoglund rate function") {
  const RegimeModel a = testing::model_a();
  const Hoglund h(a);
  CHECK_THAT(h.threshold(), WithinAbs(1.0, 1e-10));
  // Closed form at v = 2: khat'(G) = 2 gives G = 2 - sqrt(2/3).
  const double g2 = 2.0 - std::sqrt(2.0 / 3.0);
  CHECK_THAT(h.maximizer(2.0), WithinAbs(g2, 1e-10));
  CHECK_THAT(h.rate(2.0), WithinAbs(2.0 * g2 - khat_a(g2), 1e-10));
  CHECK_THAT(h.rate(2.0), WithinAbs(2.1010205, 1e-7));
  for (double v : {0.7, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    INFO("v " << v);
    CHECK_THAT(h.rate(v), WithinAbs(h.rate_grid(v), 1e-6));
    CHECK_THAT(h.khat_prime(h.maximizer(v)), WithinAbs(v, 1e-8));
    CHECK(h.rate(v) > 0);
  }
  // Convex and positive on the admissible speeds; its zero sits at khat'(0) = -0.5.
  double prev_rate = h.rate(0.2), prev_step = -kInf;
  for (double v = 0.4; v <= 5.0; v += 0.2) {
    const double r = h.rate(v);
    CHECK(r > 0);
    CHECK(r - prev_rate >= prev_step - 1e-9);
    prev_step = r - prev_rate;
    prev_rate = r;
  }
  // khat'(G) = 0.5 gives (2 - G)^2 = 4/3.
  const double g_half = 2.0 - 2.0 / std::sqrt(3.0);
  CHECK_THAT(h.rate(0.5), WithinAbs(0.5 * g_half - khat_a(g_half), 1e-10));

  const RegimeModel b = testing::model_b();
  const Hoglund hb(b);
  for (double v : {1.0, 2.0, 4.0}) CHECK_THAT(hb.rate(v), WithinAbs(hb.rate_grid(v), 1e-6));
}

TEST_CASE("Hoglund regimes") {
  const RegimeModel a = testing::model_a();
  const HoglundValue below = hoglund(a, 20.0, 40.0);
  CHECK(below.regime == "cramer");
  CHECK_THAT(below.value(0), WithinRel(0.5 * std::exp(-20.0), 1e-8));
  const HoglundValue above = hoglund(a, 40.0, 20.0);
  CHECK(above.regime == "large-deviation");
  const Hoglund h(a);
  CHECK_THAT(above.value(0), WithinRel(h.prefactor_closed(2.0) / std::sqrt(20.0) * std::exp(-h.rate(2.0) * 20.0), 1e-12));
}

TEST_CASE("Hoglund single-state rate and prefactor against tilted simulation") {
  const RegimeModel a = testing::model_a();
  const Hoglund h(a);
  const double v = 2.0, t = 20.0;
  const auto est = h.prefactor_mc(v * t, t, 0, McOptions{100000, 7});
  INFO("empirical rate " << est.empirical_rate << " vs " << h.rate(v));
  CHECK(std::abs(est.empirical_rate / h.rate(v) - 1.0) < 0.10);
  INFO("prefactor " << est.prefactor.value << " +- " << est.prefactor.se << " closed " << h.prefactor_closed(v));
  CHECK(std::abs(est.prefactor.value / h.prefactor_closed(v) - 1.0) < 0.25);
}

TEST_CASE("subexponential constants") {
  const RegimeModel p = testing::model_file("pareto.yaml");
  const SubexpData s = subexp_data(p);
  CHECK_THAT(s.c(0), WithinRel(1.0, 1e-3));
  CHECK_THAT(s.c_s, WithinRel(1.0, 1e-3));
  CHECK_THAT(s.a_bar, WithinAbs(1.0 / 3.0, 1e-12));
  double prev = kInf;
  for (double x = 0.0; x <= 200.0; x += 10.0) {
    const double v = s.asymptote(x);
    CHECK(v < prev);
    prev = v;
  }

  const RegimeModel two = two_state_pareto();
  const SubexpData s2 = subexp_data(two);
  CHECK_THAT(s2.c(0), WithinRel(s2.c(1), 1e-3));
  const Vector asym = subexp_asymptote(two, 40.0);
  CHECK(asym(0) == asym(1));

  CHECK_THROWS_AS(subexp_data(testing::model_a()), DomainError);
}

TEST_CASE("subexponential asymptote against the compound geometric") {
  const RegimeModel p = testing::model_file("pareto.yaml");
  // Asymptote 2 (1 + x)^{-3/2} equals 1e-3 here.
  const double x = std::pow(2000.0, 2.0 / 3.0) - 1.0;
  CHECK_THAT(subexp_asymptote(p, x)(0), WithinRel(1e-3, 1e-3));
  const PKResult pk = pollaczek_khintchine(p, {x}, 0.005);
  const double ruin = 1.0 - 0.5 * (pk.lower[0] + pk.upper[0]);
  const double ratio = ruin / subexp_asymptote(p, x)(0);
  INFO("ruin " << ruin << " ratio " << ratio);
  CHECK(ratio >= 0.8);
  CHECK(ratio <= 1.25);
}

TEST_CASE("finite horizon dispatcher") {
  const RegimeModel a = testing::model_a();
  const FiniteRuin inf = finite_time_ruin(a, 2.0, kInf);
  CHECK(inf.method == "infinite-horizon");
  CHECK_THAT(inf.value(0), WithinRel(0.5 * std::exp(-2.0), 1e-9));

  const FiniteRuin zero = finite_time_ruin(a, 0.0, 3.0, FiniteMethod::automatic, McOptions{20000, 1});
  CHECK(zero.method.rfind("mc", 0) == 0);
  CHECK(zero.value(0) > 0.0);
  CHECK(zero.value(0) < 1.0);

  const FiniteRuin mid = finite_time_ruin(a, 30.0, 30.0);
  CHECK(mid.method == "segerdahl");
  CHECK_THAT(mid.value(0), WithinRel(0.25 * std::exp(-30.0), 1e-8));

  const FiniteRuin fast = finite_time_ruin(a, 40.0, 10.0);
  CHECK(fast.method == "hoglund-large-deviation");

  const FiniteRuin slow = finite_time_ruin(a, 2.0, 20.0, FiniteMethod::automatic, McOptions{20000, 1});
  CHECK(slow.method.rfind("mc", 0) == 0);
}

TEST_CASE("Segerdahl near the typical ruin speed against the exact value") {
  // Exact finite-time ruin for exponential claims at x = 40, t = 40 / v.
  const RegimeModel a = testing::model_a();
  for (auto [v, exact] : {std::pair{1.03, 1.013402112e-18}, std::pair{1.06, 9.366650186e-19}, std::pair{1.09, 8.635588042e-19}})
    CHECK_THAT(segerdahl(a, 40.0, 40.0 / v).value(0), WithinRel(exact, 0.05));
}

TEST_CASE("Hoglund and Segerdahl near the typical ruin speed", "[corridor]") {
  const RegimeModel a = testing::model_a();
  const double x = 40.0;
  for (double v : {1.03, 1.06, 1.09}) {
    const double t = x / v;
    const double sg = segerdahl(a, x, t).value(0);
    const double hg = hoglund(a, x, t).value(0);
    INFO("v " << v << " segerdahl " << sg << " hoglund " << hg);
    CHECK(std::abs(hg / sg - 1.0) < 0.2);
  }
}

TEST_CASE("heavy tails have no Cramer root") {
  CHECK_THROWS_WITH(cramer_constant(testing::model_file("pareto.yaml")), ContainsSubstring("no Cram"));
}
