#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "ruin.hpp"
#include "scale.hpp"
#include "simulate.hpp"
#include "spectral.hpp"

namespace mmrisk {

struct McOptions {
  long n = 100000;
  std::uint64_t seed = 1;
};

// Aitken extrapolation of three equally spaced values of a geometrically
// converging sequence; falls back to the last value when the differences do
// not shrink.
inline double aitken(double a0, double a1, double a2) {
  const double d1 = a1 - a0, d2 = a2 - a1;
  const double den = d2 - d1;
  if (std::abs(d2) >= std::abs(d1) || std::abs(den) < 1e-300) return a2;
  return a2 - d2 * d2 / den;
}

struct CramerData {
  double gamma = 0.0;
  Vector tail_fit;              // C_i from e^{gamma x} phi_i(x) extrapolated
  Vector tail_fit_change;       // |fit(2 x0) - fit(x0)| per state
  double x0 = 0.0;
  std::vector<Estimate> tilted; // importance-sampled C_i
  double mc_level = 0.0;        // starting surplus of the tilted runs
  double remark = kNaN;         // k'(0) / (-k'(-gamma)), single-state closed form
};

// Two estimators of the Cramér constants: the exact ruin curve scaled by
// e^{gamma x}, and the tilted expectation of e^{gamma X_tau} h_i / h_{J_tau}.
inline CramerData cramer_constant(const RegimeModel& m, const McOptions* mc = nullptr, double x0 = -1.0) {
  CramerData d;
  d.gamma = adjustment_coefficient(m);
  const int n = m.n_states();
  ScaleEngine eng(m, 0.0);
  if (x0 <= 0) x0 = 10.0 / d.gamma;
  d.x0 = x0;
  auto scaled = [&](double x) -> Vector { return eng.ruin_probability_unclamped(x) * std::exp(d.gamma * x); };
  auto fit = [&](double base) {
    const Vector a0 = scaled(base), a1 = scaled(1.5 * base), a2 = scaled(2.0 * base);
    Vector c(n);
    for (int i = 0; i < n; ++i) c(i) = aitken(a0(i), a1(i), a2(i));
    return c;
  };
  d.tail_fit = fit(x0);
  d.tail_fit_change = (fit(2 * x0) - d.tail_fit).cwiseAbs();
  d.tail_fit = fit(2 * x0);
  if (n == 1) d.remark = k_prime(m, 0.0) / -k_prime(m, -d.gamma);
  if (mc) {
    d.mc_level = x0;
    for (int i = 0; i < n; ++i) {
      Estimate e = mc_ruin(m, x0, i, kInf, mc->n, mc->seed + static_cast<std::uint64_t>(i), McMode::tilted, d.gamma);
      const double s = std::exp(d.gamma * x0);
      e.value *= s;
      e.se *= s;
      e.ci_lo *= s;
      e.ci_hi *= s;
      e.max_weight *= s;
      d.tilted.push_back(e);
    }
  }
  return d;
}

// Tilted-law drift and variance rate at the Cramér root.
struct SegerdahlData {
  double gamma = 0.0;
  double m = 0.0;   // -k'(-gamma)
  double c2 = 0.0;  // k''(-gamma)
  Vector cramer;    // C_i
  double y(double x, double t) const { return (t - x / m) * std::pow(m, 1.5) / (std::sqrt(c2) * std::sqrt(x)); }
};

inline SegerdahlData segerdahl_data(const RegimeModel& m) {
  SegerdahlData s;
  s.gamma = adjustment_coefficient(m);
  const auto [d1, d2] = k_derivatives(m, -s.gamma);
  s.m = -d1;
  s.c2 = d2;
  s.cramer = cramer_constant(m).tail_fit;
  return s;
}

struct SegerdahlValue {
  Vector value;
  double y = 0.0;
};

inline SegerdahlValue segerdahl(const SegerdahlData& s, double x, double t) {
  if (!(x > 0)) throw DomainError("Segerdahl approximation needs x > 0");
  SegerdahlValue v;
  v.y = std::isfinite(t) ? s.y(x, t) : kInf;
  v.value = s.cramer * (std::exp(-s.gamma * x) * numeric::normal_cdf(v.y));
  return v;
}

inline SegerdahlValue segerdahl(const RegimeModel& m, double x, double t) { return segerdahl(segerdahl_data(m), x, t); }

// Large-deviation data in the ruin-time scale: khat(a) = k(-a) and its
// convex conjugate khat*(v) = sup_a (a v - khat(a)).
class Hoglund {
 public:
  explicit Hoglund(const RegimeModel& m) : model_(m) {
    gamma_ = adjustment_coefficient(m);
    abscissa_ = m.min_abscissa();
    threshold_ = khat_prime(gamma_);
  }

  double gamma() const { return gamma_; }
  double threshold() const { return threshold_; }  // khat'(gamma) = m
  double khat(double a) const { return perron_eigenvalue(model_, -a); }
  double khat_prime(double a) const { return -k_prime(model_, -a); }
  double khat_second(double a) const { return k_derivatives(model_, -a).second; }

  // Gamma(v): khat'(Gamma) = v.
  double maximizer(double v) const {
    const double lo_v = khat_prime(0.0);
    if (!(v > lo_v)) throw DomainError("velocity outside admissible range");
    double hi = std::isfinite(abscissa_) ? abscissa_ : 1.0;
    if (std::isfinite(abscissa_)) {
      int j = 1;
      while (j < 60 && khat_prime(abscissa_ * (1.0 - std::ldexp(1.0, -j))) <= v) ++j;
      hi = abscissa_ * (1.0 - std::ldexp(1.0, -j));
      if (khat_prime(hi) <= v) throw DomainError("velocity outside admissible range");
    } else {
      while (khat_prime(hi) <= v) hi *= 2.0;
    }
    return numeric::find_root([&](double a) { return khat_prime(a) - v; }, 0.0, hi, 1e-15);
  }

  double rate(double v) const {
    const double g = maximizer(v);
    return g * v - khat(g);
  }

  // Direct supremum of a v - khat(a) over a grid of a in (0, abscissa).
  double rate_grid(double v, int points = 20000) const {
    const double top = std::isfinite(abscissa_) ? abscissa_ * (1 - 1e-9) : 4.0 * maximizer(v) + 1.0;
    double best = 0.0, best_a = 0.0;
    for (int k = 1; k < points; ++k) {
      const double a = top * k / points;
      const double val = a * v - khat(a);
      if (val > best) {
        best = val;
        best_a = a;
      }
    }
    // Golden-section polish around the best grid point.
    double lo = std::max(0.0, best_a - top / points), hi = std::min(top, best_a + top / points);
    const double ratio = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 100; ++it) {
      const double a1 = hi - ratio * (hi - lo), a2 = lo + ratio * (hi - lo);
      if (a1 * v - khat(a1) > a2 * v - khat(a2)) hi = a2; else lo = a1;
    }
    const double a = 0.5 * (lo + hi);
    return std::max(best, a * v - khat(a));
  }

  // Gammatilde(v): the positive root theta of k(theta) = khat(Gamma(v)).
  double conjugate_root(double v) const { return phi_of_q(model_, khat(maximizer(v))); }

  // Single-state prefactor D_v.
  double prefactor_closed(double v) const {
    if (model_.n_states() != 1) throw DomainError("closed-form prefactor is for single-state models");
    const double g = maximizer(v), gt = conjugate_root(v);
    return (g + gt) / (g * gt) / std::sqrt(2.0 * std::numbers::pi * khat_second(g));
  }

  // P(ruin by t) from (x = v t, i) under the tilt at Gamma(v), and the
  // prefactor estimate P t^{1/2} e^{khat*(v) t}.
  struct McPrefactor {
    Estimate probability;
    Estimate prefactor;
    double empirical_rate = 0.0;
  };

  McPrefactor prefactor_mc(double x, double t, int i, const McOptions& mc) const {
    const double v = x / t;
    const double g = maximizer(v);
    McPrefactor r;
    r.probability = mc_ruin(model_, x, i, t, mc.n, mc.seed, McMode::tilted, g);
    const double s = std::sqrt(t) * std::exp(rate(v) * t);
    r.prefactor = r.probability;
    r.prefactor.value *= s;
    r.prefactor.se *= s;
    r.prefactor.ci_lo *= s;
    r.prefactor.ci_hi *= s;
    r.prefactor.max_weight *= s;
    r.empirical_rate = -std::log(r.probability.value) / t;
    return r;
  }

 private:
  RegimeModel model_;
  double gamma_ = 0.0;
  double abscissa_ = kInf;
  double threshold_ = 0.0;
};

struct HoglundValue {
  Vector value;
  std::string regime;  // "cramer" or "large-deviation"
  double v = 0.0;
  double rate = 0.0;
  double prefactor = 0.0;
  double prefactor_se = 0.0;
};

inline HoglundValue hoglund(const RegimeModel& m, double x, double t, const McOptions& mc = {}) {
  if (!(x > 0 && t > 0)) throw DomainError("Hoglund approximation needs x > 0 and t > 0");
  Hoglund h(m);
  HoglundValue r;
  r.v = x / t;
  const int n = m.n_states();
  if (r.v < h.threshold()) {
    r.regime = "cramer";
    r.value = cramer_constant(m).tail_fit * std::exp(-h.gamma() * x);
    return r;
  }
  r.regime = "large-deviation";
  r.rate = h.rate(r.v);
  r.value = Vector(n);
  for (int i = 0; i < n; ++i) {
    double d, se = 0.0;
    if (n == 1) {
      d = h.prefactor_closed(r.v);
    } else {
      const auto est = h.prefactor_mc(x, t, i, mc);
      d = est.prefactor.value;
      se = est.prefactor.se;
    }
    r.value(i) = d / std::sqrt(t) * std::exp(-r.rate * t);
    if (i == 0) {
      r.prefactor = d;
      r.prefactor_se = se;
    }
  }
  return r;
}

struct SubexpData {
  int reference_from = 0, reference_to = 0;  // ν entry holding the reference law
  ClaimLaw reference = ClaimLaw::degenerate();
  Vector c;               // c_i
  std::vector<double> ladder;
  Matrix ladder_ratios;   // rows: ladder points, cols: states
  double c_s = 0.0;
  double a_bar = 0.0;
  RowVector pi;           // stationary law of the embedded chain
  double constant() const { return c_s / a_bar; }
  double asymptote(double x) const { return constant() * reference.integrated_tail(x); }
};

// P_i(xi > x) for the embedded-walk increment xi = C - p_i H.
inline double increment_tail(const RegimeModel& m, int i, double x) {
  const double r = m.arrival_rates(i) - m.q_matrix(i, i);
  const double beta = r / m.premiums(i);
  auto piece = [&](const ClaimLaw& law) {
    if (law.is_null()) return x < 0 ? std::exp(beta * x) : 0.0;
    // ∫_0^∞ Fbar(x + u) beta e^{-beta u} du.
    const double start = std::max(0.0, -x);
    double s = numeric::integrate_to_infinity([&](double u) { return law.tail(x + u) * beta * std::exp(-beta * u); },
                                              start, 1e-300, 1e-11)
                   .value;
    if (start > 0) s += 1.0 - std::exp(-beta * start);
    return s;
  };
  double total = m.arrival_rates(i) / r * piece(m.state_claim(i));
  for (int j = 0; j < m.n_states(); ++j)
    if (j != i && m.q_matrix(i, j) > 0) total += m.q_matrix(i, j) / r * piece(m.transition_claim(i, j));
  return total;
}

// Constants of the subexponential asymptote (C_S / a_bar) Fbar^I(x).
inline SubexpData subexp_data(const RegimeModel& m, int max_power = 6) {
  SubexpData s;
  const int n = m.n_states();
  const ClaimLaw* ref = nullptr;
  const double probe = 1e6;
  for (int i = 0; i < n; ++i) {
    auto consider = [&](const ClaimLaw& law, int a, int b) {
      if (law.has_mgf()) return;
      if (!ref || law.tail(probe) > ref->tail(probe)) {
        ref = &law;
        s.reference_from = a;
        s.reference_to = b;
      }
    };
    if (m.arrival_rates(i) > 0) consider(m.state_claim(i), i, i);
    for (int j = 0; j < n; ++j)
      if (j != i && m.q_matrix(i, j) > 0) consider(m.transition_claim(i, j), i, j);
  }
  if (!ref) throw DomainError("subexponential asymptote needs a heavy-tailed claim law");
  s.reference = *ref;
  s.c = Vector(n);
  s.ladder_ratios = Matrix(max_power, n);
  for (int k = 1; k <= max_power; ++k) s.ladder.push_back(std::pow(10.0, k));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < max_power; ++k)
      s.ladder_ratios(k, i) = increment_tail(m, i, s.ladder[k]) / s.reference.tail(s.ladder[k]);
    const double last = s.ladder_ratios(max_power - 1, i), prev = s.ladder_ratios(max_power - 2, i);
    if (!(std::abs(last - prev) <= 1e-2 * std::max(1.0, std::abs(last))))
      throw NumericalError("conditions (D1)-(D3) not numerically verified");
    s.c(i) = last;
  }
  const EmbeddedWalk ew = embedded_walk(m);
  s.pi = ew.pi;
  s.a_bar = ew.a_bar;
  if (!(s.a_bar > 0)) throw DomainError("net profit violated: walk drift " + std::to_string(s.a_bar));
  s.c_s = s.pi.dot(s.c);
  return s;
}

// The limit is the same for every initial state.
inline Vector subexp_asymptote(const RegimeModel& m, double x) {
  const SubexpData s = subexp_data(m);
  return Vector::Constant(m.n_states(), s.asymptote(x));
}

enum class FiniteMethod { automatic, segerdahl, hoglund, mc };

struct FiniteRuin {
  Vector value;
  Vector se;  // zero for analytic routes
  std::string method;
};

// Dispatcher over the Segerdahl window, the Hoglund regime and simulation.
inline FiniteRuin finite_time_ruin(const RegimeModel& m, double x, double t, FiniteMethod method = FiniteMethod::automatic,
                                   const McOptions& mc = {}) {
  const int n = m.n_states();
  FiniteRuin r;
  r.se = Vector::Zero(n);
  if (x < 0) {
    r.value = Vector::Ones(n);
    r.method = "trivial";
    return r;
  }
  if (!std::isfinite(t)) {
    r.value = ruin_probability(m, x);
    r.method = "infinite-horizon";
    return r;
  }
  if (!(t >= 0)) throw InputError("horizon must be nonnegative");
  auto run_mc = [&] {
    r.value = Vector(n);
    const bool light = m.light_tailed();
    for (int i = 0; i < n; ++i) {
      Estimate e = t == 0 ? Estimate{} : light && x > 0 ? mc_ruin(m, x, i, t, mc.n, mc.seed, McMode::tilted)
                                               : mc_ruin(m, x, i, t, mc.n, mc.seed, McMode::crude);
      r.value(i) = e.value;
      r.se(i) = e.se;
      r.method = e.method.empty() ? "mc" : "mc-" + e.method;
    }
    if (t == 0) r.method = "trivial";
  };
  if (method == FiniteMethod::mc || x == 0 || t == 0) {
    run_mc();
    return r;
  }
  const SegerdahlData sd = segerdahl_data(m);
  const double v = x / t;
  if (method == FiniteMethod::automatic) {
    if (std::abs(v - sd.m) <= 2.0 * std::sqrt(sd.c2) * std::sqrt(x) / t * std::sqrt(sd.m)) method = FiniteMethod::segerdahl;
    else if (v > sd.m) method = FiniteMethod::hoglund;
    else method = FiniteMethod::mc;
  }
  if (method == FiniteMethod::segerdahl) {
    r.value = segerdahl(sd, x, t).value;
    r.method = "segerdahl";
  } else if (method == FiniteMethod::hoglund) {
    const HoglundValue h = hoglund(m, x, t, mc);
    r.value = h.value;
    r.method = "hoglund-" + h.regime;
  } else {
    run_mc();
  }
  return r;
}

}  // namespace mmrisk
