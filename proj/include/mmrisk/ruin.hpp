#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "core.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "scale.hpp"
#include "spectral.hpp"

namespace mmrisk {

// Bounded penalty w(surplus before ruin, deficit at ruin).
class PenaltyFunction {
 public:
  enum class Kind { constant, deficit_indicator, exp_deficit, tabulated };

  static PenaltyFunction constant(double c = 1.0) {
    if (c < 0) throw InputError("penalty constant must be nonnegative");
    return PenaltyFunction(Kind::constant, {c});
  }
  // 1{lo <= deficit <= hi}.
  static PenaltyFunction deficit_indicator(double lo, double hi) {
    if (!(lo >= 0 && hi > lo)) throw InputError("deficit indicator needs 0 <= lo < hi");
    return PenaltyFunction(Kind::deficit_indicator, {lo, hi});
  }
  // e^{-rate * deficit}.
  static PenaltyFunction exp_deficit(double rate) {
    if (rate < 0) throw InputError("exponential penalty rate must be nonnegative");
    return PenaltyFunction(Kind::exp_deficit, {rate});
  }
  // Bilinear table over (surplus grid, deficit grid), held constant outside.
  static PenaltyFunction tabulated(std::vector<double> surplus, std::vector<double> deficit, Matrix values) {
    if (surplus.empty() || deficit.empty() || values.rows() != static_cast<int>(surplus.size()) ||
        values.cols() != static_cast<int>(deficit.size()))
      throw InputError("tabulated penalty needs a values table matching its grids");
    if ((values.array() < 0).any()) throw InputError("tabulated penalty must be nonnegative");
    if (!std::is_sorted(surplus.begin(), surplus.end()) || !std::is_sorted(deficit.begin(), deficit.end()))
      throw InputError("tabulated penalty grids must be increasing");
    PenaltyFunction p(Kind::tabulated, {});
    p.surplus_ = std::move(surplus);
    p.deficit_ = std::move(deficit);
    p.table_ = std::move(values);
    return p;
  }

  Kind kind() const { return kind_; }
  const std::vector<double>& parameters() const { return params_; }

  double bound() const {
    switch (kind_) {
      case Kind::constant: return params_[0];
      case Kind::tabulated: return table_.maxCoeff();
      default: return 1.0;
    }
  }

  bool depends_on_surplus() const { return kind_ == Kind::tabulated; }

  double operator()(double surplus, double deficit) const {
    switch (kind_) {
      case Kind::constant: return params_[0];
      case Kind::deficit_indicator: return (deficit >= params_[0] && deficit <= params_[1]) ? 1.0 : 0.0;
      case Kind::exp_deficit: return std::exp(-params_[0] * deficit);
      default: return interpolate(surplus, deficit);
    }
  }

  // ∫_0^∞ w(z, y) F(z + dy) for a claim law, z > 0.
  double kernel(const ClaimLaw& law, double z) const {
    if (law.is_null()) return 0.0;
    switch (kind_) {
      case Kind::constant: return params_[0] * law.tail(z);
      case Kind::deficit_indicator: return law.tail(z + params_[0]) - law.tail(z + params_[1]);
      case Kind::exp_deficit: return law.exp_kernel(params_[0], z);
      default: {
        const double ymax = deficit_.back();
        auto f = [&](double y) { return interpolate(z, y) * law.density(z + y); };
        double s = ymax > 0 ? numeric::integrate(f, 0.0, ymax, 1e-15, 1e-11).value : 0.0;
        return s + interpolate(z, ymax) * law.tail(z + ymax);
      }
    }
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::constant: return "constant(" + std::to_string(params_[0]) + ")";
      case Kind::deficit_indicator:
        return "deficit-in[" + std::to_string(params_[0]) + "," + std::to_string(params_[1]) + "]";
      case Kind::exp_deficit: return "exp-deficit(" + std::to_string(params_[0]) + ")";
      default: return "tabulated";
    }
  }

 private:
  PenaltyFunction(Kind k, std::vector<double> prm) : kind_(k), params_(std::move(prm)) {}

  static std::pair<int, double> locate(const std::vector<double>& g, double v) {
    if (g.size() == 1 || v <= g.front()) return {0, 0.0};
    if (v >= g.back()) return {static_cast<int>(g.size()) - 2, 1.0};
    const auto it = std::upper_bound(g.begin(), g.end(), v);
    const int i = static_cast<int>(it - g.begin()) - 1;
    return {i, (v - g[i]) / (g[i + 1] - g[i])};
  }

  double interpolate(double s, double d) const {
    auto [i, ti] = locate(surplus_, s);
    auto [j, tj] = locate(deficit_, d);
    const int i1 = std::min<int>(i + 1, static_cast<int>(surplus_.size()) - 1);
    const int j1 = std::min<int>(j + 1, static_cast<int>(deficit_.size()) - 1);
    return (1 - ti) * (1 - tj) * table_(i, j) + ti * (1 - tj) * table_(i1, j) + (1 - ti) * tj * table_(i, j1) +
           ti * tj * table_(i1, j1);
  }

  Kind kind_;
  std::vector<double> params_;
  std::vector<double> surplus_, deficit_;
  Matrix table_;
};

// nu^{(kj)}(dy) = lambda_k F_k(dy) 1{k=j} + q_kj F_kj(dy) 1{k!=j}; null laws are dropped
// since they never cause ruin.
struct JumpEntry {
  int from = 0, to = 0;
  double weight = 0.0;
  const ClaimLaw* law = nullptr;
};

inline std::vector<JumpEntry> jump_measure(const RegimeModel& m) {
  std::vector<JumpEntry> out;
  const int n = m.n_states();
  for (int k = 0; k < n; ++k) {
    if (m.arrival_rates(k) > 0 && !m.state_claim(k).is_null())
      out.push_back({k, k, m.arrival_rates(k), &m.state_claim(k)});
    for (int j = 0; j < n; ++j) {
      if (j == k || m.q_matrix(k, j) <= 0 || m.transition_claim(k, j).is_null()) continue;
      out.push_back({k, j, m.q_matrix(k, j), &m.transition_claim(k, j)});
    }
  }
  return out;
}

// Truncation point where every claim law has tail below 1e-10.
inline double claim_truncation(const RegimeModel& m, double eps = 1e-10) {
  double z = 0.0;
  for (const auto& e : jump_measure(m)) z = std::max(z, e.law->upper_quantile(eps));
  return z;
}

// ∫_0^∞ u(x, z) K(z) dz with K an N x N kernel; the jump of u at z = x is
// handled by splitting the range there.
inline Matrix compensation_integral(const ScaleEngine& eng, double x, const std::function<Matrix(double)>& kernel,
                                    double zmax) {
  const int n = eng.n_states();
  auto integrand = [&](double z) -> Matrix { return eng.potential_density(x, z) * kernel(z); };
  // Absolute tolerance follows the size of the integrand, which is of order
  // e^{-gamma x} far in the tail.
  double size = 0.0;
  for (double y : {0.0, 0.5 * x, x, x + 0.5 * zmax}) size = std::max(size, integrand(y).cwiseAbs().maxCoeff());
  const double abs_tol = 1e-14 * std::min(1.0, size > 0 ? size : 1.0);
  Matrix total = Matrix::Zero(n, n);
  if (x > 0) total += numeric::integrate(integrand, 0.0, x, abs_tol, 1e-11).value;
  // Beyond x the potential density no longer decays, so the kernel is
  // integrated over a full truncation length past x.
  total += numeric::integrate(integrand, x, x + zmax, abs_tol, 1e-11).value;
  return total;
}

inline Vector ruin_probability(const RegimeModel& m, double x) {
  const double drift = drift_report(m).stationary;
  if (!(drift > 0)) throw DomainError("ruin certain; survival identically 0");
  if (x < 0) return Vector::Ones(m.n_states());
  ScaleEngine eng(m, 0.0);
  return eng.ruin_probability(x).cwiseMax(0.0).cwiseMin(1.0);
}

inline Vector survival(const RegimeModel& m, double x) { return Vector::Ones(m.n_states()) - ruin_probability(m, x); }

// Phi_1^(q)(x) = Z(x) - W(x) C_inf: E_x[e^{-q tau}; tau < inf, J_tau].
inline Matrix discounted_ruin(const RegimeModel& m, double q, double x) {
  if (!(q > 0)) throw InputError("discounted_ruin needs q > 0");
  ScaleEngine eng(m, q);
  return eng.discounted_ruin(x).cwiseMax(0.0);
}

// Per-target Gerber-Shiu matrix phi_ij through the compensation formula.
inline Matrix gerber_shiu_matrix(const ScaleEngine& eng, double x, const PenaltyFunction& w) {
  const RegimeModel& m = eng.model();
  const int n = m.n_states();
  const auto jumps = jump_measure(m);
  if (jumps.empty()) return Matrix::Zero(n, n);
  for (const auto& e : jumps)
    if (!e.law->has_mgf()) throw DomainError("Gerber-Shiu needs light-tailed claims: " + e.law->describe());
  const double zmax = claim_truncation(m);
  auto kernel = [&](double z) -> Matrix {
    Matrix k = Matrix::Zero(n, n);
    for (const auto& e : jumps) k(e.from, e.to) += e.weight * w.kernel(*e.law, z);
    return k;
  };
  return compensation_integral(eng, x, kernel, zmax);
}

inline Vector gerber_shiu(const RegimeModel& m, double q, double x, const PenaltyFunction& w) {
  if (q < 0) throw InputError("gerber_shiu needs q >= 0");
  if (x < 0) {
    Vector v = Vector::Constant(m.n_states(), w(0.0, -x));
    return v;
  }
  ScaleEngine eng(m, q);
  return gerber_shiu_matrix(eng, x, w).rowwise().sum();
}

struct DeficitKernel {
  int start_state = 0;
  double x = 0.0;
  std::vector<double> z;
  Matrix density;  // rows: grid points, columns: state at ruin
  Vector mass;     // total mass per state at ruin
};

// Joint law of the deficit and the state at ruin, starting from (x, i).
inline DeficitKernel deficit_kernel(const RegimeModel& m, double x, int i, const std::vector<double>& z_grid) {
  const int n = m.n_states();
  if (i < 0 || i >= n) throw InputError("deficit_kernel: state index out of range");
  ScaleEngine eng(m, 0.0);
  const auto jumps = jump_measure(m);
  const double zmax = claim_truncation(m);
  DeficitKernel out;
  out.start_state = i;
  out.x = x;
  out.z = z_grid;
  out.density = Matrix::Zero(static_cast<int>(z_grid.size()), n);
  out.mass = gerber_shiu_matrix(eng, x, PenaltyFunction::constant(1.0)).row(i).transpose();
  for (std::size_t g = 0; g < z_grid.size(); ++g) {
    const double d = z_grid[g];
    auto kernel = [&](double y) -> Matrix {
      Matrix k = Matrix::Zero(n, n);
      for (const auto& e : jumps) k(e.from, e.to) += e.weight * e.law->density(y + d);
      return k;
    };
    out.density.row(static_cast<int>(g)) = compensation_integral(eng, x, kernel, zmax).row(i);
  }
  return out;
}

struct PKResult {
  std::vector<double> x;
  std::vector<double> lower;  // survival lower bracket
  std::vector<double> upper;  // survival upper bracket
  double rho = 0.0;
  int k_max = 0;
  double step = 0.0;
};

// Survival of the single-state model as a geometric compound of the
// equilibrium claim law, computed exactly on a lattice by Panjer's recursion;
// upward and downward rounding of the equilibrium law bracket the answer.
inline PKResult pollaczek_khintchine(const RegimeModel& m, const std::vector<double>& xs, double step = 0.01) {
  if (m.n_states() != 1) throw InputError("pollaczek_khintchine needs a single-state model");
  if (!(step > 0)) throw InputError("lattice step must be positive");
  const ClaimLaw& law = m.state_claim(0);
  const double rho = m.arrival_rates(0) * law.mean() / m.premiums(0);
  if (!(rho < 1)) throw DomainError("pollaczek_khintchine needs rho < 1 (rho = " + std::to_string(rho) + ")");
  PKResult res;
  res.rho = rho;
  res.step = step;
  res.x = xs;
  res.k_max = 0;
  if (rho > 0) {
    while (std::pow(rho, res.k_max + 1) / (1.0 - rho) >= 1e-10) ++res.k_max;
  }
  double xmax = 0.0;
  for (double x : xs) xmax = std::max(xmax, x);
  const int k = static_cast<int>(std::floor(xmax / step + 1e-9)) + 1;
  std::vector<double> fe(k + 2);
  for (int j = 0; j < k + 2; ++j) fe[j] = law.equilibrium_cdf(j * step);
  auto panjer = [&](const std::vector<double>& f) {
    std::vector<double> g(k + 1), cum(k + 1);
    const double denom = 1.0 - rho * f[0];
    g[0] = (1.0 - rho) / denom;
    for (int s = 1; s <= k; ++s) {
      double acc = 0.0;
      for (int j = 1; j <= s; ++j) acc += f[j] * g[s - j];
      g[s] = rho / denom * acc;
    }
    double c = 0.0;
    for (int s = 0; s <= k; ++s) cum[s] = (c += g[s]);
    return cum;
  };
  std::vector<double> up(k + 1), down(k + 1);
  up[0] = 0.0;
  for (int j = 1; j <= k; ++j) up[j] = fe[j] - fe[j - 1];
  for (int j = 0; j <= k; ++j) down[j] = fe[j + 1] - fe[j];
  const auto lo = panjer(up), hi = panjer(down);
  for (double x : xs) {
    if (x < 0) {
      res.lower.push_back(0.0);
      res.upper.push_back(0.0);
      continue;
    }
    const int idx = std::min(k, static_cast<int>(std::floor(x / step + 1e-12)));
    res.lower.push_back(std::min(1.0, lo[idx]));
    res.upper.push_back(std::min(1.0, hi[idx]));
  }
  return res;
}

struct OdeResidual {
  double max_residual = 0.0;
  double phi_norm = 0.0;
  std::vector<double> x;
  Matrix residual;  // rows: x points, columns: states
};

// Residual of the integro-differential equation
//   p_i phi_i' + lambda_i ∫ (phi_i(x-y) - phi_i(x)) F_i(dy)
//     + sum_{k != i} q_ik (∫ phi_k(x-y) F_ik(dy) - phi_i(x)) - q phi_i = 0
// with phi(u) = w(x, -u) for u < 0, evaluated at grid points at least two
// steps inside the tabulated range.
inline OdeResidual ode_residual(const RegimeModel& m, double q, const PenaltyFunction& w, double x_lo, double x_hi,
                                double step = 0.01) {
  const int n = m.n_states();
  for (auto* law : m.active_laws())
    if (!law->has_mgf()) throw DomainError("ode_residual needs light-tailed claims with densities");
  if (!(step > 0) || !(x_hi > x_lo) || x_lo < 2 * step) throw InputError("ode_residual needs 2*step <= x_lo < x_hi");
  ScaleEngine eng(m, q);
  const double top = x_hi + 2 * step;
  const int points = static_cast<int>(std::ceil(top / step)) + 1;
  Matrix phi(points, n);
  for (int g = 0; g < points; ++g) phi.row(g) = gerber_shiu_matrix(eng, g * step, w).rowwise().sum().transpose();
  std::vector<boost::math::interpolators::cardinal_cubic_b_spline<double>> spl;
  for (int i = 0; i < n; ++i) {
    std::vector<double> col(points);
    for (int g = 0; g < points; ++g) col[g] = phi(g, i);
    spl.emplace_back(col.begin(), col.end(), 0.0, step);
  }
  auto phi_at = [&](int i, double u, double surplus) {
    if (u < 0) return w(surplus, -u);
    return spl[i](std::min(u, (points - 1) * step));
  };
  // ∫ phi_k(x - y) F(dy) over the absolutely continuous part plus the atom.
  auto convolve = [&](int k, const ClaimLaw& law, double x) {
    if (law.is_null()) return phi_at(k, x, x);
    double s = law.atom() * phi_at(k, x, x);
    s += numeric::integrate([&](double y) { return spl[k](x - y) * law.density(y); }, 0.0, x, 1e-14, 1e-11).value;
    s += w.kernel(law, x);
    return s;
  };
  OdeResidual out;
  out.phi_norm = phi.cwiseAbs().maxCoeff();
  const int g_lo = static_cast<int>(std::ceil(x_lo / step - 1e-9));
  const int g_hi = static_cast<int>(std::floor(x_hi / step + 1e-9));
  out.residual = Matrix::Zero(g_hi - g_lo + 1, n);
  for (int g = g_lo; g <= g_hi; ++g) {
    const double x = g * step;
    out.x.push_back(x);
    for (int i = 0; i < n; ++i) {
      const double deriv = (-phi(g + 2, i) + 8 * phi(g + 1, i) - 8 * phi(g - 1, i) + phi(g - 2, i)) / (12 * step);
      double r = m.premiums(i) * deriv - q * phi(g, i);
      if (m.arrival_rates(i) > 0) r += m.arrival_rates(i) * (convolve(i, m.state_claim(i), x) - phi(g, i));
      for (int k = 0; k < n; ++k) {
        if (k == i || m.q_matrix(i, k) <= 0) continue;
        r += m.q_matrix(i, k) * (convolve(k, m.transition_claim(i, k), x) - phi(g, i));
      }
      out.residual(g - g_lo, i) = r;
      out.max_residual = std::max(out.max_residual, std::abs(r));
    }
  }
  return out;
}

// Random walk observed at event epochs: S_n = sum of claim - premium * holding time.
struct EmbeddedWalk {
  Matrix transition;     // P
  Vector event_rate;     // lambda_i - q_ii
  Vector mean_increment; // a_i = E_i xi
  RowVector pi;          // stationary law of P
  double a_bar = 0.0;    // -sum pi_i a_i
};

inline EmbeddedWalk embedded_walk(const RegimeModel& m) {
  const int n = m.n_states();
  EmbeddedWalk ew;
  ew.transition = Matrix::Zero(n, n);
  ew.event_rate = Vector(n);
  ew.mean_increment = Vector(n);
  for (int i = 0; i < n; ++i) {
    const double r = m.arrival_rates(i) - m.q_matrix(i, i);
    if (!(r > 0)) throw DomainError("state " + std::to_string(i + 1) + " has no events (absorbing drift state)");
    ew.event_rate(i) = r;
    ew.transition(i, i) = m.arrival_rates(i) / r;
    double a = -m.premiums(i) / r;
    if (m.arrival_rates(i) > 0) a += ew.transition(i, i) * m.state_claim(i).mean();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      ew.transition(i, j) = m.q_matrix(i, j) / r;
      if (m.q_matrix(i, j) > 0) a += ew.transition(i, j) * m.transition_claim(i, j).mean();
    }
    ew.mean_increment(i) = a;
  }
  // Stationary law of P: solve pi (P - I) = 0.
  Matrix gen = ew.transition - Matrix::Identity(n, n);
  ew.pi = n == 1 ? RowVector::Ones(1) : stationary_distribution(gen);
  ew.a_bar = -ew.pi.dot(ew.mean_increment);
  return ew;
}

}  // namespace mmrisk
