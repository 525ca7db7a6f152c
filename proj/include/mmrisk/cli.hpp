#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmrisk.hpp"

namespace mmrisk::cli {

// Empty cells print as an empty CSV field and as null in JSON lines.
using Cell = std::variant<std::monostate, double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
    rows.push_back(std::move(row));
  }
};

// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const Cell& c) {
  struct V {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(double d) const { return format_double(d); }
    std::string operator()(long long i) const { return std::to_string(i); }
    std::string operator()(const std::string& s) const {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    }
  };
  return std::visit(V{}, c);
}

inline std::string render(const Table& t, const std::string& format) {
  std::ostringstream os;
  if (format == "csv") {
    for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
    os << "\n";
    for (const auto& row : t.rows) {
      for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << csv_field(row[k]);
      os << "\n";
    }
    return os.str();
  }
  for (const auto& row : t.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < row.size(); ++k) {
      const Cell& c = row[k];
      if (std::holds_alternative<std::monostate>(c)) obj[t.columns[k]] = nullptr;
      else if (auto* d = std::get_if<double>(&c)) obj[t.columns[k]] = std::isfinite(*d) ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(format_double(*d));
      else if (auto* i = std::get_if<long long>(&c)) obj[t.columns[k]] = *i;
      else obj[t.columns[k]] = std::get<std::string>(c);
    }
    os << obj.dump() << "\n";
  }
  return os.str();
}

// "0,1,2.5" or "start:stop:step" (inclusive).
inline std::vector<double> parse_list(const std::string& spec, const std::string& flag) {
  auto to_num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InputError(flag + ": cannot read '" + s + "' as a number");
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw InputError(flag + ": a range is written start:stop:step");
    const double a = to_num(parts[0]), b = to_num(parts[1]), h = to_num(parts[2]);
    if (!(h > 0) || b < a) throw InputError(flag + ": range needs step > 0 and stop >= start");
    const long count = static_cast<long>(std::floor((b - a) / h + 1e-9)) + 1;
    if (count > 1000000) throw InputError(flag + ": range has too many points");
    for (long k = 0; k < count; ++k) out.push_back(a + k * h);
    return out;
  }
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ',');)
    if (!p.empty()) out.push_back(to_num(p));
  if (out.empty()) throw InputError(flag + ": empty list");
  return out;
}

struct Options {
  std::string model_path;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 1;
  long n = 100000;
  std::string x;
  std::string t;
  std::string z;
  double q = 0.0;
  double zeta = -1.0;
  double a = -1.0;
  int state = 1;
  std::string method;
  std::string penalty = "one";
  std::string estimator = "ruin";
  std::string v;
  bool matrices = false;
};

inline std::string state_col(const std::string& prefix, int i) { return prefix + "_" + std::to_string(i + 1); }

inline PenaltyFunction parse_penalty(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto num = [&](std::size_t k) {
    if (k >= parts.size()) throw InputError("--penalty " + spec + ": missing parameter");
    return parse_list(parts[k], "--penalty").front();
  };
  if (parts.empty()) throw InputError("--penalty: empty");
  if (parts[0] == "one") return PenaltyFunction::constant(1.0);
  if (parts[0] == "const") return PenaltyFunction::constant(num(1));
  if (parts[0] == "exp") return PenaltyFunction::exp_deficit(num(1));
  if (parts[0] == "indicator") return PenaltyFunction::deficit_indicator(num(1), num(2));
  throw InputError("--penalty: unknown penalty '" + parts[0] + "' (one, const:c, exp:a, indicator:lo:hi)");
}

inline int start_index(const RegimeModel& m, const Options& o) {
  if (o.state < 1 || o.state > m.n_states())
    throw InputError("--state must lie in 1.." + std::to_string(m.n_states()));
  return o.state - 1;
}

inline std::vector<double> xs_or(const Options& o, const std::string& fallback) {
  return parse_list(o.x.empty() ? fallback : o.x, "--x");
}

inline double single(const std::string& spec, const std::string& flag) {
  const auto v = parse_list(spec, flag);
  if (v.size() != 1) throw InputError(flag + " takes a single value here");
  return v.front();
}

inline Table cmd_ruin(const RegimeModel& m, const Options& o) {
  const int n = m.n_states();
  Table t;
  t.columns = {"x"};
  for (int i = 0; i < n; ++i) t.columns.push_back(state_col("psi", i));
  const std::vector<double> xs = xs_or(o, "0:10:1");
  for (double x : xs)
    if (x < 0) throw InputError("--x must be nonnegative");
  if (!(drift_report(m).stationary > 0)) throw DomainError("ruin certain; survival identically 0");
  if (!m.light_tailed()) {
    // Heavy tails: single-state models only, midpoint of the lattice brackets.
    if (n != 1) throw DomainError("ruin for heavy-tailed claims is available for single-state models only");
    const PKResult pk = pollaczek_khintchine(m, xs, 0.005);
    for (std::size_t k = 0; k < xs.size(); ++k) t.add({xs[k], 1.0 - 0.5 * (pk.lower[k] + pk.upper[k])});
    return t;
  }
  const ScaleEngine eng(m, 0.0);
  for (double x : xs) {
    const Vector r = eng.ruin_probability(x);
    std::vector<Cell> row{x};
    for (int i = 0; i < n; ++i) row.push_back(r(i));
    t.add(row);
  }
  return t;
}

inline FiniteMethod parse_finite_method(const std::string& s) {
  if (s.empty() || s == "auto") return FiniteMethod::automatic;
  if (s == "segerdahl") return FiniteMethod::segerdahl;
  if (s == "hoglund") return FiniteMethod::hoglund;
  if (s == "mc") return FiniteMethod::mc;
  throw InputError("--method for finite-ruin: auto, segerdahl, hoglund or mc");
}

inline Table cmd_finite_ruin(const RegimeModel& m, const Options& o) {
  if (o.x.empty() || o.t.empty()) throw InputError("finite-ruin needs --x and --t");
  const FiniteMethod method = parse_finite_method(o.method);
  const McOptions mc{o.n, o.seed};
  Table t;
  t.columns = {"x", "t", "state", "value", "se", "method"};
  for (double x : parse_list(o.x, "--x"))
    for (double h : parse_list(o.t, "--t")) {
      const FiniteRuin r = finite_time_ruin(m, x, h, method, mc);
      for (int i = 0; i < m.n_states(); ++i) t.add({x, h, static_cast<long long>(i + 1), r.value(i), r.se(i), r.method});
    }
  return t;
}

inline Table cmd_gerber_shiu(const RegimeModel& m, const Options& o) {
  if (o.q < 0) throw InputError("--q must be nonnegative");
  const PenaltyFunction w = parse_penalty(o.penalty);
  const ScaleEngine eng(m, o.q);
  const int n = m.n_states();
  Table t;
  t.columns = {"q", "x"};
  for (int i = 0; i < n; ++i) t.columns.push_back(state_col("phi", i));
  for (double x : xs_or(o, "0:5:0.5")) {
    if (x < 0) throw InputError("--x must be nonnegative");
    const Vector g = gerber_shiu_matrix(eng, x, w).rowwise().sum();
    std::vector<Cell> row{o.q, x};
    for (int i = 0; i < n; ++i) row.push_back(g(i));
    t.add(row);
  }
  return t;
}

inline Table cmd_deficit(const RegimeModel& m, const Options& o) {
  const int i = start_index(m, o);
  const std::vector<double> zs = parse_list(o.z.empty() ? "0:5:0.25" : o.z, "--z");
  Table t;
  t.columns = {"kind", "x", "start", "to", "z", "value"};
  for (double x : xs_or(o, "1")) {
    const DeficitKernel k = deficit_kernel(m, x, i, zs);
    for (std::size_t g = 0; g < zs.size(); ++g)
      for (int j = 0; j < m.n_states(); ++j)
        t.add({std::string("density"), x, static_cast<long long>(i + 1), static_cast<long long>(j + 1), zs[g],
               k.density(static_cast<int>(g), j)});
    for (int j = 0; j < m.n_states(); ++j)
      t.add({std::string("mass"), x, static_cast<long long>(i + 1), static_cast<long long>(j + 1), std::monostate{}, k.mass(j)});
  }
  return t;
}

inline Table cmd_parisian(const RegimeModel& m, const Options& o) {
  if (!(o.zeta >= 0)) throw InputError("parisian needs --zeta >= 0");
  const ParisianSolver solver(m, o.zeta);
  const ScaleEngine eng(m, 0.0);
  const int n = m.n_states();
  Table t;
  t.columns = {"zeta", "x"};
  for (int i = 0; i < n; ++i) t.columns.push_back(state_col("parisian", i));
  for (int i = 0; i < n; ++i) t.columns.push_back(state_col("classical", i));
  for (double x : xs_or(o, "0:5:0.5")) {
    const Vector p = solver.ruin(x);
    const Vector c = eng.ruin_probability(x);
    std::vector<Cell> row{o.zeta, x};
    for (int i = 0; i < n; ++i) row.push_back(p(i));
    for (int i = 0; i < n; ++i) row.push_back(c(i));
    t.add(row);
  }
  return t;
}

inline Table cmd_asymptotics(const RegimeModel& m, const Options& o) {
  Table t;
  t.columns = {"quantity", "state", "arg", "value"};
  const Cell none = std::monostate{};
  auto put = [&](const std::string& q, Cell s, Cell arg, double v) { t.add({q, s, arg, v}); };
  if (!drift_report(m).stationary_net_profit) throw DomainError("net profit violated: stationary drift is not positive");
  if (m.light_tailed()) {
    const CramerData cd = cramer_constant(m);
    put("gamma", none, none, cd.gamma);
    for (int i = 0; i < m.n_states(); ++i) put("cramer_constant", static_cast<long long>(i + 1), none, cd.tail_fit(i));
    if (std::isfinite(cd.remark)) put("cramer_constant_closed", none, none, cd.remark);
    const SegerdahlData sd = segerdahl_data(m);
    put("segerdahl_m", none, none, sd.m);
    put("segerdahl_c2", none, none, sd.c2);
    const Hoglund hg(m);
    std::vector<double> vs;
    if (o.v.empty()) vs = {1.25 * sd.m, 1.5 * sd.m, 2.0 * sd.m, 3.0 * sd.m};
    else vs = parse_list(o.v, "--v");
    for (double v : vs) {
      try {
        put("khat_star", none, v, hg.rate(v));
        if (m.n_states() == 1) put("hoglund_prefactor", none, v, hg.prefactor_closed(v));
      } catch (const DomainError&) {
        put("khat_star", none, v, kNaN);
      }
    }
  } else {
    const SubexpData s = subexp_data(m);
    for (int i = 0; i < m.n_states(); ++i) put("subexp_c", static_cast<long long>(i + 1), none, s.c(i));
    put("subexp_C_S", none, none, s.c_s);
    put("subexp_a_bar", none, none, s.a_bar);
    put("subexp_constant", none, none, s.constant());
  }
  return t;
}

// Grid dump: x, then W and Z entries in row-major order. With --matrices,
// the constant matrices G, R and C_inf in long form instead.
inline Table cmd_scale(const RegimeModel& m, const Options& o) {
  if (o.q < 0) throw InputError("--q must be nonnegative");
  if (!o.method.empty() && o.method != "spectral" && o.method != "laplace-inversion")
    throw InputError("--method for scale: spectral or laplace-inversion");
  const ScaleMethod method = o.method == "laplace-inversion" ? ScaleMethod::laplace_inversion : ScaleMethod::spectral;
  const ScaleEngine eng(m, o.q);
  const int n = m.n_states();
  Table t;
  if (o.matrices) {
    t.columns = {"matrix", "i", "j", "value"};
    auto dump = [&](const std::string& name, const Matrix& a) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t.add({name, static_cast<long long>(i + 1), static_cast<long long>(j + 1), a(i, j)});
    };
    dump("G", eng.G());
    dump("R", eng.R());
    if (o.q > 0 || drift_report(m).stationary_net_profit) dump("C_inf", eng.c_infinity());
    return t;
  }
  t.columns = {"x"};
  for (const char* name : {"W", "Z"})
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) t.columns.push_back(std::string(name) + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  for (double x : xs_or(o, "0:5:0.5")) {
    if (x < 0) throw InputError("--x must be nonnegative");
    const Matrix w = method == ScaleMethod::spectral ? eng.W(x) : w_matrix_inversion(m, o.q, x);
    const Matrix z = eng.Z(x);
    std::vector<Cell> row{x};
    for (const Matrix* a : {&w, &z})
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) row.push_back((*a)(i, j));
    t.add(std::move(row));
  }
  return t;
}

inline void add_estimate(Table& t, const std::string& what, int state, Cell target, const Estimate& e) {
  t.add({what, static_cast<long long>(state + 1), target, e.value, e.se, e.ci_lo, e.ci_hi, static_cast<long long>(e.n),
         static_cast<long long>(e.seed), e.method});
}

inline Table cmd_simulate(const RegimeModel& m, const Options& o) {
  const int i = start_index(m, o);
  const Cell none = std::monostate{};
  if (o.estimator == "path") {
    const double x = o.x.empty() ? 1.0 : single(o.x, "--x");
    const double h = o.t.empty() ? 10.0 : single(o.t, "--t");
    Table t;
    t.columns = {"time", "event", "pre_surplus", "post_surplus", "pre_state", "post_state"};
    for (const PathEvent& e : simulate_path(m, x, i, h, o.seed))
      t.add({e.time, event_name(e.type), e.pre_surplus, e.post_surplus, static_cast<long long>(e.pre_phase + 1),
             static_cast<long long>(e.post_phase + 1)});
    return t;
  }
  Table t;
  t.columns = {"estimator", "state", "target", "value", "se", "ci_lo", "ci_hi", "n", "seed", "method"};
  const double x = o.x.empty() ? 1.0 : single(o.x, "--x");
  auto cap = [&](double target) {
    return regeneration_cap([&](double b) { return ruin_probability(m, b).maxCoeff(); }, target, std::max(1.0, 2.0 * x));
  };
  if (o.estimator == "ruin") {
    const double h = o.t.empty() ? kInf : single(o.t, "--t");
    const McMode mode = o.method == "crude" ? McMode::crude : McMode::tilted;
    add_estimate(t, "ruin", i, none, mc_ruin(m, x, i, h, o.n, o.seed, mode));
  } else if (o.estimator == "exit") {
    if (!(o.a > 0)) throw InputError("simulate exit needs --a (upper barrier)");
    const ExitEstimates e = mc_exit(m, o.q, x, o.a, i, 0.0, o.n, o.seed);
    for (int j = 0; j < m.n_states(); ++j) add_estimate(t, "exit_upward", i, static_cast<long long>(j + 1), e.upward[j]);
    for (int j = 0; j < m.n_states(); ++j) add_estimate(t, "exit_downward", i, static_cast<long long>(j + 1), e.downward[j]);
  } else if (o.estimator == "discounted-ruin") {
    if (!(o.q > 0)) throw InputError("simulate discounted-ruin needs --q > 0");
    const auto e = mc_discounted_ruin(m, o.q, x, i, o.n, o.seed);
    for (std::size_t j = 0; j < e.size(); ++j)
      add_estimate(t, "discounted_ruin", i, j + 1 < e.size() ? Cell(static_cast<long long>(j + 1)) : Cell(std::string("total")), e[j]);
  } else if (o.estimator == "first-passage") {
    const double z = o.z.empty() ? 1.0 : single(o.z, "--z");
    const double h = o.t.empty() ? kInf : single(o.t, "--t");
    const auto e = mc_first_passage(m, o.q, z, i, h, o.n, o.seed);
    for (int j = 0; j < m.n_states(); ++j) add_estimate(t, "first_passage", i, static_cast<long long>(j + 1), e[j]);
  } else if (o.estimator == "deficit") {
    const DeficitSample d = mc_deficit(m, x, i, cap(1e-6), o.n, o.seed);
    add_estimate(t, "ruin", i, none, d.ruin);
    std::vector<double> sizes = d.deficits;
    Estimate mean = summarize(sizes, o.seed, "crude-capped");
    add_estimate(t, "deficit_mean_given_ruin", i, none, mean);
  } else if (o.estimator == "parisian") {
    if (!(o.zeta >= 0)) throw InputError("simulate parisian needs --zeta >= 0");
    add_estimate(t, "parisian_ruin", i, none, mc_parisian(m, x, i, o.zeta, cap(1e-5), o.n, o.seed));
  } else if (o.estimator == "walk-maximum") {
    add_estimate(t, "walk_maximum_exceeds", i, none, mc_walk_maximum(m, x, i, cap(1e-6), o.n, o.seed));
  } else {
    throw InputError("--estimator: ruin, exit, discounted-ruin, first-passage, deficit, parisian, walk-maximum or path");
  }
  return t;
}

struct ValidateResult {
  Table table;
  bool ok = true;
  bool net_profit = true;
};

inline ValidateResult cmd_validate(const RegimeModel& m) {
  ValidateResult r;
  r.table.columns = {"check", "status", "detail"};
  auto record = [&](const std::string& name, const std::string& status, const std::string& detail) {
    r.table.add({name, status, detail});
    if (status == "fail") r.ok = false;
  };
  auto num = [](double v) { return format_double(v); };
  auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    try {
      auto [pass, detail] = f();
      record(name, pass ? "pass" : "fail", detail);
    } catch (const std::exception& e) {
      record(name, "fail", e.what());
    }
  };
  record("schema", "pass", std::to_string(m.n_states()) + " state(s)");
  for (const auto& w : check_model(m).warnings) record("model_warning", "warn", w);
  check("stationary_distribution", [&] {
    const RowVector pi = stationary_distribution(m.q_matrix);
    const double res = (pi * m.q_matrix).cwiseAbs().maxCoeff();
    return std::pair{res < 1e-10, "max |pi Q| = " + num(res)};
  });
  const DriftReport d = drift_report(m);
  if (!d.stationary_net_profit) {
    record("net_profit", "fail", "net profit violated: stationary drift " + num(d.stationary));
    r.net_profit = false;
    return r;
  }
  record("net_profit", "pass", "stationary drift " + num(d.stationary));
  if (!d.per_state_net_profit) record("net_profit_per_state", "warn", "some state has E_i X_1 <= 0");
  else record("net_profit_per_state", "pass", "E_i X_1 > 0 in every state");

  if (!m.light_tailed()) {
    check("subexponential_conditions", [&] {
      const SubexpData s = subexp_data(m);
      return std::pair{s.constant() > 0, "C_S / a_bar = " + num(s.constant())};
    });
    return r;
  }
  check("adjustment_coefficient", [&] {
    const double g = adjustment_coefficient(m);
    const double k = perron_eigenvalue(m, -g);
    return std::pair{g > 0 && std::abs(k) < 1e-10, "gamma = " + num(g) + ", k(-gamma) = " + num(k)};
  });
  check("laplace_round_trip", [&] {
    const double q = 0.5;
    const ScaleEngine eng(m, q);
    const double alpha = phi_of_q(m, q) + 1.0;
    // Quadrature on [0, 6] plus the spectral tail beyond it.
    const Matrix lt =
        numeric::integrate([&](double x) -> Matrix { return std::exp(-alpha * x) * eng.W(x); }, 0.0, 6.0, 1e-14, 1e-12).value +
        eng.laplace_tail(alpha, 6.0);
    const Matrix inv = (matrix_exponent(m, alpha) - q * Matrix::Identity(m.n_states(), m.n_states())).inverse();
    const double err = (lt - inv).cwiseAbs().maxCoeff() / inv.cwiseAbs().maxCoeff();
    return std::pair{err < 1e-4, "max relative error " + num(err) + " at alpha = " + num(alpha) + ", q = 0.5"};
  });
  check("ruin_monotone", [&] {
    const ScaleEngine eng(m, 0.0);
    Vector prev = eng.ruin_probability(0.0);
    bool ok = (prev.array() >= 0).all() && (prev.array() < 1).all();
    for (int k = 1; k <= 100; ++k) {
      const Vector cur = eng.ruin_probability(0.1 * k);
      ok = ok && (cur.array() <= prev.array() + 1e-12).all();
      prev = cur;
    }
    return std::pair{ok, "psi(0) max " + num(eng.ruin_probability(0.0).maxCoeff())};
  });
  check("gerber_shiu_dual_route", [&] {
    const double q = 0.1;
    const ScaleEngine eng(m, q);
    double err = 0.0;
    for (double x : {0.0, 1.0, 2.5, 5.0}) {
      const Vector a = gerber_shiu_matrix(eng, x, PenaltyFunction::constant(1.0)).rowwise().sum();
      const Vector b = eng.discounted_ruin(x).rowwise().sum();
      err = std::max(err, (a - b).cwiseAbs().maxCoeff());
    }
    return std::pair{err < 1e-5, "max difference " + num(err) + " at q = 0.1"};
  });
  check("ode_residual", [&] {
    const OdeResidual res = ode_residual(m, 0.0, PenaltyFunction::constant(1.0), 0.5, 5.0);
    return std::pair{res.max_residual < 1e-2 * res.phi_norm,
                     "max residual " + num(res.max_residual) + ", |psi| " + num(res.phi_norm)};
  });
  if (m.n_states() == 1) {
    check("pollaczek_khintchine_bracket", [&] {
      std::vector<double> xs;
      for (int k = 0; k <= 20; ++k) xs.push_back(0.25 * k);
      const PKResult pk = pollaczek_khintchine(m, xs, 0.01);
      const ScaleEngine eng(m, 0.0);
      bool ok = true;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const double s = 1.0 - eng.ruin_probability(xs[k])(0);
        ok = ok && pk.lower[k] <= s + 1e-12 && s <= pk.upper[k] + 1e-12;
      }
      return std::pair{ok, "21 grid points on [0, 5]"};
    });
  }
  check("parisian_below_classical", [&] {
    const ParisianSolver solver(m, 1.0);
    const ScaleEngine eng(m, 0.0);
    bool ok = true;
    for (double x : {0.0, 1.0, 3.0}) ok = ok && (solver.ruin(x).array() <= eng.ruin_probability(x).array() + 1e-9).all();
    return std::pair{ok && solver.spectral_radius() < 1, "zeta = 1, spectral radius " + num(solver.spectral_radius())};
  });
  return r;
}

// Exit codes: 0 success, 1 computational failure, 2 input error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ruin quantities for Markov-modulated risk processes"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--model", o.model_path, "model file (YAML)")->required();
  app.add_option("--out", o.out, "output file (default: standard output)");
  app.add_option("--format", o.format, "csv or json-lines")->check(CLI::IsMember({"csv", "json-lines"}));
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--n", o.n, "Monte Carlo replications")->check(CLI::PositiveNumber);
  app.add_option("--x", o.x, "initial surplus: list a,b,c or range start:stop:step");
  app.add_option("--t", o.t, "time horizon(s)");
  app.add_option("--q", o.q, "discount rate");
  app.add_option("--zeta", o.zeta, "Parisian delay");
  app.add_option("--method", o.method, "method selector of the command");

  auto* ruin = app.add_subcommand("ruin", "infinite-horizon ruin probability curve");
  auto* finite = app.add_subcommand("finite-ruin", "finite-time ruin table with method tags");
  auto* gs = app.add_subcommand("gerber-shiu", "expected discounted penalty at ruin");
  gs->add_option("--penalty", o.penalty, "one | const:c | exp:a | indicator:lo:hi");
  auto* deficit = app.add_subcommand("deficit", "deficit density at ruin and state at ruin");
  deficit->add_option("--z", o.z, "deficit grid");
  deficit->add_option("--state", o.state, "starting state (from 1)");
  auto* parisian = app.add_subcommand("parisian", "Parisian ruin probability curve");
  auto* asym = app.add_subcommand("asymptotics", "adjustment coefficient and asymptotic constants");
  asym->add_option("--v", o.v, "velocities for the Hoglund rate table");
  auto* scale = app.add_subcommand("scale", "scale matrices W and Z on a grid");
  scale->add_flag("--matrices", o.matrices, "emit G, R and C_inf instead of the grid");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo oracle");
  sim->add_option("--estimator", o.estimator, "ruin | exit | discounted-ruin | first-passage | deficit | parisian | walk-maximum | path");
  sim->add_option("--state", o.state, "starting state (from 1)");
  sim->add_option("--a", o.a, "upper barrier for exit");
  sim->add_option("--z", o.z, "level for first-passage");
  auto* validate = app.add_subcommand("validate", "run the invariant suite on the model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream so, se;
    const int code = app.exit(e, so, se);
    out << so.str();
    err << se.str();
    return code == 0 ? 0 : 2;
  }

  try {
    const RegimeModel m = load_model(o.model_path);
    Table table;
    int code = 0;
    if (validate->parsed()) {
      ValidateResult v = cmd_validate(m);
      table = std::move(v.table);
      if (!v.net_profit) err << "error: net profit violated\n";
      code = v.ok ? 0 : 1;
    } else if (ruin->parsed()) table = cmd_ruin(m, o);
    else if (finite->parsed()) table = cmd_finite_ruin(m, o);
    else if (gs->parsed()) table = cmd_gerber_shiu(m, o);
    else if (deficit->parsed()) table = cmd_deficit(m, o);
    else if (parisian->parsed()) table = cmd_parisian(m, o);
    else if (asym->parsed()) table = cmd_asymptotics(m, o);
    else if (scale->parsed()) table = cmd_scale(m, o);
    else if (sim->parsed()) table = cmd_simulate(m, o);
    const std::string text = render(table, o.format);
    if (o.out.empty()) out << text;
    else {
      std::ofstream f(o.out, std::ios::binary);
      if (!f) throw InputError("cannot write '" + o.out + "'");
      f << text;
    }
    return code;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mmrisk::cli
