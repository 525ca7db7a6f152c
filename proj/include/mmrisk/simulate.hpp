#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace mmrisk {

inline constexpr double kZ95 = 1.959963984540054;

struct Estimate {
  double value = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double confidence = 0.95;
  long n = 0;
  std::uint64_t seed = 0;
  std::string method = "crude";
  double max_weight = 0.0;  // largest likelihood ratio seen (importance sampling)
  double weight_cv = 0.0;   // sample std / mean of the weighted samples
};

// Mean, standard error and a normal 95% interval of column `col` of a
// row-major sample table with `width` columns. Summation runs in index order
// so the result does not depend on how the samples were produced.
inline Estimate summarize(const std::vector<double>& table, int width, int col, std::uint64_t seed,
                          const std::string& method) {
  Estimate e;
  e.n = static_cast<long>(table.size() / width);
  e.seed = seed;
  e.method = method;
  if (e.n == 0) return e;
  double sum = 0.0;
  for (long r = 0; r < e.n; ++r) sum += table[r * width + col];
  const double mean = sum / e.n;
  double ss = 0.0, mx = 0.0;
  for (long r = 0; r < e.n; ++r) {
    const double d = table[r * width + col] - mean;
    ss += d * d;
    mx = std::max(mx, table[r * width + col]);
  }
  const double sd = e.n > 1 ? std::sqrt(ss / (e.n - 1)) : 0.0;
  e.value = mean;
  e.se = sd / std::sqrt(static_cast<double>(e.n));
  e.ci_lo = mean - kZ95 * e.se;
  e.ci_hi = mean + kZ95 * e.se;
  e.max_weight = mx;
  e.weight_cv = mean != 0.0 ? sd / std::abs(mean) : 0.0;
  return e;
}

inline Estimate summarize(const std::vector<double>& samples, std::uint64_t seed, const std::string& method) {
  return summarize(samples, 1, 0, seed, method);
}

// Worker count from MMRISK_WORKERS, else the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("MMRISK_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(r, stream, out) for r = 0..n-1, each with its own stream keyed by
// (seed, r) and writing `width` doubles into its own row.
template <class F>
std::vector<double> run_replications(long n, int width, std::uint64_t seed, F&& fn) {
  if (n <= 0) throw InputError("number of replications must be positive");
  std::vector<double> table(static_cast<std::size_t>(n) * width, 0.0);
  const int workers = static_cast<int>(std::min<long>(worker_count(), n));
  auto work = [&](int w) {
    for (long r = w; r < n; r += workers) {
      RandomStream rng(seed, static_cast<std::uint64_t>(r));
      fn(r, rng, &table[static_cast<std::size_t>(r) * width]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return table;
}

enum class EventType { claim, regime_switch, level_crossing, horizon, ruin };

inline std::string event_name(EventType e) {
  switch (e) {
    case EventType::claim: return "claim";
    case EventType::regime_switch: return "regime-switch";
    case EventType::level_crossing: return "level-crossing";
    case EventType::horizon: return "horizon";
    default: return "ruin";
  }
}

struct PathEvent {
  double time = 0.0;
  EventType type = EventType::claim;
  double pre_surplus = 0.0;
  double post_surplus = 0.0;
  int pre_phase = 0;
  int post_phase = 0;
};

// Exact event-driven sampler: exponential holding time at rate
// lambda_i - q_ii, then a claim or a switch with its transition claim.
class PathSimulator {
 public:
  explicit PathSimulator(const RegimeModel& m) : model_(m), n_(m.n_states()) {
    rate_.resize(n_);
    cum_.assign(n_, std::vector<double>(n_ + 1, 0.0));
    for (int i = 0; i < n_; ++i) {
      rate_[i] = m.arrival_rates(i) - m.q_matrix(i, i);
      double acc = m.arrival_rates(i);
      cum_[i][0] = acc;
      for (int j = 0; j < n_; ++j) {
        if (j != i) acc += m.q_matrix(i, j);
        cum_[i][j + 1] = acc;
      }
    }
  }

  const RegimeModel& model() const { return model_; }
  double premium(int i) const { return model_.premiums(i); }
  double event_rate(int i) const { return rate_[i]; }

  template <class Rng>
  double holding(int i, Rng& rng) const {
    return rate_[i] > 0 ? -std::log(rng.uniform()) / rate_[i] : kInf;
  }

  struct Jump {
    int to = 0;
    double size = 0.0;
    bool is_claim = true;
  };

  template <class Rng>
  Jump jump(int i, Rng& rng) const {
    const double u = rng.uniform() * rate_[i];
    if (u < cum_[i][0]) return {i, model_.state_claim(i).sample(rng), true};
    int j = n_ - 1;
    for (int k = 0; k < n_; ++k) {
      if (k != i && u < cum_[i][k + 1]) {
        j = k;
        break;
      }
    }
    if (j == i) j = (i == 0 ? 1 : 0);
    return {j, model_.transition_claim(i, j).sample(rng), false};
  }

 private:
  const RegimeModel& model_;
  int n_;
  std::vector<double> rate_;
  std::vector<std::vector<double>> cum_;
};

struct StopRule {
  double horizon = kInf;
  double upper = kInf;       // stop on reaching this level
  bool stop_at_ruin = true;  // stop when the surplus drops below 0
};

struct Outcome {
  EventType kind = EventType::horizon;  // ruin, level_crossing or horizon
  double time = 0.0;
  double surplus = 0.0;      // X at the stopping time
  double pre_surplus = 0.0;  // X just before the ruin jump
  int phase = 0;
};

struct NoSegment {
  void operator()(double, double, double, int) const {}
};

// Follows one path from (x, i) until the first stopping condition. The
// callback sees every drift segment as (start time, start surplus, length, phase).
template <class Rng, class Seg = NoSegment>
Outcome run_until(const PathSimulator& sim, double x, int i, const StopRule& rule, Rng& rng, Seg&& on_segment = {}) {
  double t = 0.0;
  if (x >= rule.upper) return {EventType::level_crossing, 0.0, x, x, i};
  if (x < 0 && rule.stop_at_ruin) return {EventType::ruin, 0.0, x, x, i};
  for (;;) {
    const double p = sim.premium(i);
    const double h = sim.holding(i, rng);
    const double t_up = rule.upper < kInf ? t + (rule.upper - x) / p : kInf;
    const double t_evt = t + h;
    const double t_end = std::min({t_up, t_evt, rule.horizon});
    on_segment(t, x, t_end - t, i);
    if (std::isfinite(t_up) && t_end == t_up && t_up <= t_evt) return {EventType::level_crossing, t_up, rule.upper, rule.upper, i};
    if (t_end == rule.horizon && rule.horizon < t_evt) {
      const double xe = x + p * (rule.horizon - t);
      return {EventType::horizon, rule.horizon, xe, xe, i};
    }
    if (!std::isfinite(t_evt)) throw NumericalError("path has no events and no stopping level");
    x += p * h;
    t = t_evt;
    const double pre = x;
    const auto j = sim.jump(i, rng);
    x -= j.size;
    i = j.to;
    if (x < 0 && rule.stop_at_ruin) return {EventType::ruin, t, x, pre, i};
  }
}

// Event list of one path (replication 0 of the given seed).
inline std::vector<PathEvent> simulate_path(const RegimeModel& m, double x0, int i0, double horizon,
                                            std::uint64_t seed, const StopRule& extra = StopRule{}) {
  if (!std::isfinite(horizon) && !extra.stop_at_ruin && !std::isfinite(extra.upper))
    throw InputError("simulate_path needs a finite horizon or a stopping rule");
  PathSimulator sim(m);
  RandomStream rng(seed, 0);
  std::vector<PathEvent> ev;
  double t = 0.0, x = x0;
  int i = i0;
  for (;;) {
    const double p = sim.premium(i);
    const double h = sim.holding(i, rng);
    const double t_up = std::isfinite(extra.upper) && x < extra.upper ? t + (extra.upper - x) / p : kInf;
    if (t_up <= t + h && t_up <= horizon) {
      ev.push_back({t_up, EventType::level_crossing, extra.upper, extra.upper, i, i});
      return ev;
    }
    if (t + h > horizon) {
      const double xe = x + p * (horizon - t);
      if (std::isfinite(horizon)) ev.push_back({horizon, EventType::horizon, xe, xe, i, i});
      return ev;
    }
    x += p * h;
    t += h;
    const auto j = sim.jump(i, rng);
    PathEvent e{t, j.is_claim ? EventType::claim : EventType::regime_switch, x, x - j.size, i, j.to};
    x -= j.size;
    i = j.to;
    ev.push_back(e);
    if (x < 0 && extra.stop_at_ruin) {
      ev.push_back({t, EventType::ruin, x, x, i, i});
      return ev;
    }
  }
}

enum class McMode { crude, tilted };

// Importance-sampling setup: simulate the model tilted by theta and weight by
// dP/dP~ = e^{theta (X_tau - x) + k(-theta) tau} h_{J_0} / h_{J_tau}.
struct TiltContext {
  TiltedModel tilt;
  explicit TiltContext(const RegimeModel& m, double theta) : tilt(tilt_model(m, theta)) {}
  double weight(double x0, int i0, const Outcome& o) const {
    return std::exp(tilt.theta * (o.surplus - x0) + tilt.k_shift * o.time) * tilt.h(i0) / tilt.h(o.phase);
  }
};

inline void check_start(const RegimeModel& m, int i) {
  if (i < 0 || i >= m.n_states()) throw InputError("initial state out of range");
}

// P_{x,i}(tau_0^- <= horizon). Crude needs a finite horizon; tilted uses the
// given theta (default: the adjustment coefficient).
inline Estimate mc_ruin(const RegimeModel& m, double x, int i, double horizon, long n, std::uint64_t seed,
                        McMode mode, double theta = -1.0) {
  check_start(m, i);
  if (x < 0) {
    Estimate e;
    e.value = e.ci_lo = e.ci_hi = 1.0;
    e.n = n;
    e.seed = seed;
    return e;
  }
  StopRule rule;
  rule.horizon = horizon;
  if (mode == McMode::crude) {
    if (!std::isfinite(horizon)) throw InputError("crude Monte Carlo needs a finite horizon; use tilted mode");
    PathSimulator sim(m);
    auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
      out[0] = run_until(sim, x, i, rule, rng).kind == EventType::ruin ? 1.0 : 0.0;
    });
    return summarize(tab, seed, "crude");
  }
  if (theta < 0) theta = adjustment_coefficient(m);
  const TiltContext ctx(m, theta);
  if (!(k_prime(ctx.tilt.model, 0.0) < 0) && !std::isfinite(horizon))
    throw DomainError("tilted model does not make ruin certain; infinite horizon needs theta >= adjustment coefficient");
  PathSimulator sim(ctx.tilt.model);
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    out[0] = o.kind == EventType::ruin ? ctx.weight(x, i, o) : 0.0;
  });
  return summarize(tab, seed, "importance-tilted");
}

// Mean of the likelihood ratio at a fixed time under the tilted law (should be 1).
inline Estimate mc_likelihood_ratio_mean(const RegimeModel& m, double theta, double x, int i, double t, long n,
                                         std::uint64_t seed) {
  check_start(m, i);
  const TiltContext ctx(m, theta);
  PathSimulator sim(ctx.tilt.model);
  StopRule rule;
  rule.horizon = t;
  rule.stop_at_ruin = false;
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    out[0] = ctx.weight(x, i, run_until(sim, x, i, rule, rng));
  });
  return summarize(tab, seed, "likelihood-ratio");
}

struct ExitEstimates {
  std::vector<Estimate> upward;    // per target phase
  std::vector<Estimate> downward;  // per target phase, with e^{alpha X}
};

// Two-sided exit from [0, a] started at (x, i).
inline ExitEstimates mc_exit(const RegimeModel& m, double q, double x, double a, int i, double alpha, long n,
                             std::uint64_t seed) {
  check_start(m, i);
  if (!(x >= 0 && x <= a)) throw InputError("mc_exit needs 0 <= x <= a");
  const int k = m.n_states();
  PathSimulator sim(m);
  StopRule rule;
  rule.upper = a;
  auto tab = run_replications(n, 2 * k, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    const double disc = std::exp(-q * o.time);
    if (o.kind == EventType::level_crossing) out[o.phase] = disc;
    else out[k + o.phase] = disc * std::exp(alpha * o.surplus);
  });
  ExitEstimates r;
  for (int j = 0; j < k; ++j) {
    r.upward.push_back(summarize(tab, 2 * k, j, seed, "crude"));
    r.downward.push_back(summarize(tab, 2 * k, k + j, seed, "crude"));
  }
  return r;
}

// E_{x,i}[e^{-q tau} w(X_{tau-}, |X_tau|); tau < inf, J_tau = j] per j, then
// the total in the last slot; simulated under the Cramér tilt.
template <class Penalty>
std::vector<Estimate> mc_gerber_shiu(const RegimeModel& m, double q, double x, int i, const Penalty& w, long n,
                                     std::uint64_t seed) {
  check_start(m, i);
  if (q < 0) throw InputError("q must be nonnegative");
  const int k = m.n_states();
  const TiltContext ctx(m, adjustment_coefficient(m));
  PathSimulator sim(ctx.tilt.model);
  StopRule rule;
  auto tab = run_replications(n, k + 1, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    const double v = ctx.weight(x, i, o) * std::exp(-q * o.time) * w(o.pre_surplus, -o.surplus);
    out[o.phase] = v;
    out[k] = v;
  });
  std::vector<Estimate> r;
  for (int j = 0; j <= k; ++j) r.push_back(summarize(tab, k + 1, j, seed, "importance-tilted"));
  return r;
}

inline std::vector<Estimate> mc_discounted_ruin(const RegimeModel& m, double q, double x, int i, long n,
                                                std::uint64_t seed) {
  return mc_gerber_shiu(m, q, x, i, [](double, double) { return 1.0; }, n, seed);
}

struct DeficitSample {
  std::vector<double> deficits;  // deficits of the ruined paths, in replication order
  std::vector<int> phases;       // phase at ruin
  Estimate ruin;                 // fraction of ruined paths
  double cap = 0.0;
};

// Crude paths stopped at ruin or when the surplus exceeds `cap`; the
// neglected ruin mass is at most the ruin probability from the cap.
inline DeficitSample mc_deficit(const RegimeModel& m, double x, int i, double cap, long n, std::uint64_t seed) {
  check_start(m, i);
  if (!(cap > x)) throw InputError("deficit cap must exceed the initial surplus");
  PathSimulator sim(m);
  StopRule rule;
  rule.upper = cap;
  auto tab = run_replications(n, 3, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    if (o.kind == EventType::ruin) {
      out[0] = 1.0;
      out[1] = -o.surplus;
      out[2] = o.phase;
    }
  });
  DeficitSample d;
  d.cap = cap;
  d.ruin = summarize(tab, 3, 0, seed, "crude-capped");
  for (long r = 0; r < n; ++r)
    if (tab[r * 3] > 0) {
      d.deficits.push_back(tab[r * 3 + 1]);
      d.phases.push_back(static_cast<int>(tab[r * 3 + 2]));
    }
  return d;
}

// Kolmogorov-Smirnov distance between a sample and a continuous cdf.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = cdf(xs[k]);
    d = std::max({d, (k + 1) / n - f, f - k / n});
  }
  return d;
}

// E_i[e^{-q tau_z^+}; tau_z^+ <= horizon, J = j] per j, started at level 0.
inline std::vector<Estimate> mc_first_passage(const RegimeModel& m, double q, double z, int i, double horizon, long n,
                                              std::uint64_t seed) {
  check_start(m, i);
  const int k = m.n_states();
  PathSimulator sim(m);
  StopRule rule;
  rule.upper = z;
  rule.stop_at_ruin = false;
  // With discounting, paths longer than this carry weight below 1e-16.
  rule.horizon = q > 0 ? std::min(horizon, 37.0 / q) : horizon;
  if (!std::isfinite(rule.horizon) && !(k_prime(m, 0.0) > 0))
    throw InputError("first passage without discount or horizon needs positive drift");
  auto tab = run_replications(n, k, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, 0.0, i, rule, rng);
    if (o.kind == EventType::level_crossing) out[o.phase] = std::exp(-q * o.time);
  });
  std::vector<Estimate> r;
  for (int j = 0; j < k; ++j) r.push_back(summarize(tab, k, j, seed, "crude"));
  return r;
}

// E_{x,i} ∫_0^{tau_0^-} e^{-qt} 1{0 <= X_t <= b, J_t = j} dt per j (q > 0).
inline std::vector<Estimate> mc_occupation(const RegimeModel& m, double q, double x, int i, double b, long n,
                                           std::uint64_t seed) {
  check_start(m, i);
  if (!(q > 0)) throw InputError("occupation estimate needs q > 0");
  const int k = m.n_states();
  PathSimulator sim(m);
  StopRule rule;
  rule.horizon = 40.0 / q;
  auto tab = run_replications(n, k, seed, [&](long, RandomStream& rng, double* out) {
    run_until(sim, x, i, rule, rng, [&](double t0, double x0, double len, int ph) {
      if (len <= 0) return;
      const double p = sim.premium(ph);
      // Time window where x0 + p s <= b.
      const double s_hi = std::min(len, (b - x0) / p);
      if (s_hi <= 0) return;
      out[ph] += std::exp(-q * t0) * (1.0 - std::exp(-q * s_hi)) / q;
    });
  });
  std::vector<Estimate> r;
  for (int j = 0; j < k; ++j) r.push_back(summarize(tab, k, j, seed, "crude"));
  return r;
}

// e^{-q (t ∧ tau)} f(J, X) at the time t ∧ tau_0^- ∧ tau_a^+, with f = 0 below 0.
template <class F>
Estimate mc_stopped_functional(const RegimeModel& m, double q, double x, int i, double a, double t, long n,
                               std::uint64_t seed, F&& f) {
  check_start(m, i);
  PathSimulator sim(m);
  StopRule rule;
  rule.upper = a;
  rule.horizon = t;
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    out[0] = o.kind == EventType::ruin ? 0.0 : std::exp(-q * o.time) * f(o.phase, o.surplus);
  });
  return summarize(tab, seed, "crude");
}

// E_{x,i} f(J_t, X_t) without stopping.
template <class F>
Estimate mc_terminal(const RegimeModel& m, double x, int i, double t, long n, std::uint64_t seed, F&& f) {
  check_start(m, i);
  PathSimulator sim(m);
  StopRule rule;
  rule.horizon = t;
  rule.stop_at_ruin = false;
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    const Outcome o = run_until(sim, x, i, rule, rng);
    out[0] = f(o.phase, o.surplus);
  });
  return summarize(tab, seed, "crude");
}

// Frequencies of the first event type from state i: slot 0 is a claim,
// slot 1 + j a switch to j. They estimate row i of the embedded transition matrix.
inline std::vector<Estimate> mc_event_frequencies(const RegimeModel& m, int i, long n, std::uint64_t seed) {
  check_start(m, i);
  const int k = m.n_states();
  PathSimulator sim(m);
  if (!(sim.event_rate(i) > 0)) throw DomainError("state has no events");
  auto tab = run_replications(n, k + 1, seed, [&](long, RandomStream& rng, double* out) {
    const auto j = sim.jump(i, rng);
    out[j.is_claim ? 0 : 1 + j.to] = 1.0;
  });
  std::vector<Estimate> r;
  for (int j = 0; j <= k; ++j) r.push_back(summarize(tab, k + 1, j, seed, "crude"));
  return r;
}

// P_i(max_k S_k > x) for the walk observed at event epochs; paths stop once
// the walk falls below -cap, which drops at most phi(x + cap).
inline Estimate mc_walk_maximum(const RegimeModel& m, double x, int i, double cap, long n, std::uint64_t seed) {
  check_start(m, i);
  if (!(cap > 0)) throw InputError("walk cap must be positive");
  const int k = m.n_states();
  std::vector<double> rate(k);
  std::vector<std::vector<double>> cum(k, std::vector<double>(k, 0.0));
  for (int s = 0; s < k; ++s) {
    rate[s] = m.arrival_rates(s) - m.q_matrix(s, s);
    if (!(rate[s] > 0)) throw DomainError("state " + std::to_string(s + 1) + " has no events");
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      acc += (j == s ? m.arrival_rates(s) : m.q_matrix(s, j)) / rate[s];
      cum[s][j] = acc;
    }
  }
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    double walk = 0.0;
    int s = i;
    for (;;) {
      const double hold = -std::log(rng.uniform()) / rate[s];
      const double u = rng.uniform();
      int j = k - 1;
      for (int c = 0; c < k; ++c)
        if (u < cum[s][c]) {
          j = c;
          break;
        }
      const double claim = j == s ? m.state_claim(s).sample(rng) : m.transition_claim(s, j).sample(rng);
      walk += claim - m.premiums(s) * hold;
      s = j;
      if (walk > x) {
        out[0] = 1.0;
        return;
      }
      if (walk < -cap) return;
    }
  });
  return summarize(tab, seed, "crude-capped");
}

// Smallest level b (on a doubling ladder from `start`) with tail(b) < target.
template <class Tail>
double regeneration_cap(Tail&& tail, double target, double start = 1.0) {
  if (!(target > 0)) throw InputError("regeneration target must be positive");
  double b = std::max(start, 1e-3);
  for (int k = 0; k < 200; ++k, b *= 1.25)
    if (tail(b) < target) return b;
  throw NumericalError("no regeneration level found");
}

// Parisian ruin: an excursion below 0 lasting zeta. Paths regenerate
// (count as survival) once the surplus exceeds `cap`.
inline Estimate mc_parisian(const RegimeModel& m, double x, int i, double zeta, double cap, long n,
                            std::uint64_t seed) {
  check_start(m, i);
  if (!(zeta >= 0)) throw InputError("zeta must be nonnegative");
  if (!(cap > std::max(x, 0.0))) throw InputError("regeneration cap must exceed the initial surplus");
  PathSimulator sim(m);
  auto tab = run_replications(n, 1, seed, [&](long, RandomStream& rng, double* out) {
    double t = 0.0, surplus = x, start = 0.0;
    int s = i;
    bool below = surplus < 0;
    if (below && zeta == 0) {
      out[0] = 1.0;
      return;
    }
    for (;;) {
      const double p = sim.premium(s);
      const double h = sim.holding(s, rng);
      if (below) {
        const double back = -surplus / p;
        const double left = start + zeta - t;
        if (left <= std::min(back, h)) {
          out[0] = 1.0;
          return;
        }
        if (back <= h) below = false;
      } else if (surplus + p * h >= cap) {
        return;
      }
      if (!std::isfinite(h)) return;
      surplus += p * h;
      t += h;
      const auto j = sim.jump(s, rng);
      surplus -= j.size;
      s = j.to;
      if (!below && surplus < 0) {
        if (zeta == 0) {
          out[0] = 1.0;
          return;
        }
        below = true;
        start = t;
      }
    }
  });
  return summarize(tab, seed, "crude-regenerative");
}

}  // namespace mmrisk
