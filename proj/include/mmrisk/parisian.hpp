#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "asymptotics.hpp"
#include "core.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "ruin.hpp"
#include "scale.hpp"
#include "simulate.hpp"
#include "spectral.hpp"

namespace mmrisk {

struct UpcrossResult {
  std::vector<double> z;
  std::vector<Matrix> value;  // P_k(tau_z^+ <= zeta, J = j)
  std::vector<Matrix> se;     // zero unless simulated
  std::string method = "laplace-inversion";
  double inversion_change = 0.0;  // max difference between two contour settings
};

namespace detail {

// Mass of the paths that reach level z without any nonzero jump while
// staying among phases with one common premium; these arrive at the fixed
// time z / p and make the passage-time law jump there.
inline std::vector<std::pair<double, Matrix>> upcross_atoms(const RegimeModel& m, double z) {
  const int n = m.n_states();
  std::map<double, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[m.premiums(i)].push_back(i);
  std::vector<std::pair<double, Matrix>> out;
  for (const auto& [p, idx] : groups) {
    const int k = static_cast<int>(idx.size());
    Matrix gen = Matrix::Zero(k, k);
    for (int a = 0; a < k; ++a) {
      const int i = idx[a];
      gen(a, a) = -(m.arrival_rates(i) - m.q_matrix(i, i));
      for (int b = 0; b < k; ++b) {
        if (a == b) continue;
        const int j = idx[b];
        const ClaimLaw& c = m.transition_claim(i, j);
        const double stay = c.is_null() ? 1.0 : (c.has_mgf() ? c.atom() : 0.0);
        gen(a, b) = m.q_matrix(i, j) * stay;
      }
    }
    // A claim of size 0 from an atom leaves the level unchanged.
    for (int a = 0; a < k; ++a) {
      const int i = idx[a];
      const ClaimLaw& c = m.state_claim(i);
      if (m.arrival_rates(i) > 0) gen(a, a) += m.arrival_rates(i) * (c.has_mgf() ? c.atom() : 0.0);
    }
    Matrix e = (gen * (z / p)).exp();
    Matrix full = Matrix::Zero(n, n);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) full(idx[a], idx[b]) = e(a, b);
    out.emplace_back(z / p, full);
  }
  return out;
}

// Jumps of the passage-time density at the times z / p: paths that stay in
// one premium group up to one small lag or lead, and paths with a single
// claim-free switch between two groups. Each entry is (time, jump matrix).
inline std::vector<std::pair<double, Matrix>> upcross_kinks(const RegimeModel& m, double z) {
  const int n = m.n_states();
  std::map<double, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[m.premiums(i)].push_back(i);
  std::vector<double> prem;
  std::vector<std::vector<int>> idx;
  std::vector<Matrix> gen;
  for (const auto& [p, members] : groups) {
    const int k = static_cast<int>(members.size());
    Matrix g = Matrix::Zero(k, k);
    for (int a = 0; a < k; ++a) {
      const int i = members[a];
      g(a, a) = -(m.arrival_rates(i) - m.q_matrix(i, i));
      const ClaimLaw& sc = m.state_claim(i);
      if (m.arrival_rates(i) > 0) g(a, a) += m.arrival_rates(i) * (sc.has_mgf() ? sc.atom() : 0.0);
      for (int b = 0; b < k; ++b) {
        if (a == b) continue;
        const ClaimLaw& c = m.transition_claim(i, members[b]);
        g(a, b) = m.q_matrix(i, members[b]) * (c.is_null() ? 1.0 : (c.has_mgf() ? c.atom() : 0.0));
      }
    }
    prem.push_back(p);
    idx.push_back(members);
    gen.push_back(g);
  }
  auto embed = [&](const Matrix& blk, const std::vector<int>& rows, const std::vector<int>& cols) {
    Matrix full = Matrix::Zero(n, n);
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b) full(rows[a], cols[b]) = blk(a, b);
    return full;
  };
  auto switch_rates = [&](const std::vector<int>& from, const std::vector<int>& to) {
    Matrix sw = Matrix::Zero(from.size(), to.size());
    for (std::size_t a = 0; a < from.size(); ++a)
      for (std::size_t b = 0; b < to.size(); ++b) {
        const ClaimLaw& c = m.transition_claim(from[a], to[b]);
        sw(a, b) = m.q_matrix(from[a], to[b]) * (c.is_null() ? 1.0 : (c.has_mgf() ? c.atom() : 0.0));
      }
    return sw;
  };
  std::vector<std::pair<double, Matrix>> out;
  const int ng = static_cast<int>(prem.size());
  for (int g = 0; g < ng; ++g) {
    const int k = static_cast<int>(idx[g].size());
    const double t_g = z / prem[g];
    // Rate density, at displacement 0, of one small lag (claim) or lead
    // (short excursion through a faster group) before reaching z.
    Matrix f0 = Matrix::Zero(k, k);
    bool finite = true;
    for (int a = 0; a < k; ++a) {
      const int i = idx[g][a];
      if (m.arrival_rates(i) > 0 && !m.state_claim(i).is_null()) {
        const double d = m.state_claim(i).density(0.0);
        if (!std::isfinite(d)) finite = false;
        f0(a, a) += m.arrival_rates(i) * d;
      }
      for (int b = 0; b < k; ++b) {
        const ClaimLaw& c = m.transition_claim(i, idx[g][b]);
        if (a == b || c.is_null()) continue;
        const double d = c.density(0.0);
        if (!std::isfinite(d)) finite = false;
        f0(a, b) += m.q_matrix(i, idx[g][b]) * d;
      }
    }
    for (int h = 0; h < ng; ++h) {
      if (h == g) continue;
      const Matrix out_h = switch_rates(idx[g], idx[h]);
      const Matrix back = switch_rates(idx[h], idx[g]);
      const double sign = prem[h] < prem[g] ? 1.0 : -1.0;
      f0 += sign / std::abs(prem[g] - prem[h]) * out_h * back;
    }
    if (finite && f0.cwiseAbs().maxCoeff() > 0) {
      Matrix big = Matrix::Zero(2 * k, 2 * k);
      big.topLeftCorner(k, k) = gen[g];
      big.topRightCorner(k, k) = f0;
      big.bottomRightCorner(k, k) = gen[g];
      const Matrix e = (big * t_g).exp();
      out.emplace_back(t_g, embed(prem[g] * e.topRightCorner(k, k), idx[g], idx[g]));
    }
    for (int h = 0; h < ng; ++h) {
      if (h == g) continue;
      const Matrix sw = switch_rates(idx[g], idx[h]);
      if (sw.cwiseAbs().maxCoeff() == 0) continue;
      const double t_h = z / prem[h];
      const double scale = 1.0 / std::abs(1.0 - prem[g] / prem[h]);
      const double sign = prem[g] < prem[h] ? 1.0 : -1.0;
      out.emplace_back(t_h, embed(sign * scale * sw * (gen[h] * t_h).exp(), idx[g], idx[h]));
      out.emplace_back(t_g, embed(-sign * scale * (gen[g] * t_g).exp() * sw, idx[g], idx[h]));
    }
  }
  return out;
}

}  // namespace detail

// P_k(tau_z^+ <= zeta, J_{tau_z^+} = j) for every z in zs, by inverting
// theta -> theta^{-1} e^{G(theta) z} after removing the jumps of the law.
inline UpcrossResult upcross_cdf(const RegimeModel& m, const std::vector<double>& zs, double zeta,
                                 const McOptions* fallback = nullptr) {
  if (!(zeta > 0)) throw InputError("upcross_cdf needs zeta > 0");
  const int n = m.n_states();
  const double p_max = m.premiums.maxCoeff();
  UpcrossResult res;
  res.z = zs;
  std::vector<int> active;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    if (zs[k] < 0) throw InputError("upcross_cdf needs z >= 0");
    res.value.push_back(Matrix::Zero(n, n));
    res.se.push_back(Matrix::Zero(n, n));
    if (zs[k] == 0) res.value[k] = Matrix::Identity(n, n);
    else if (zs[k] <= p_max * zeta) active.push_back(static_cast<int>(k));
  }
  if (active.empty()) return res;
  // Passage times are at least z / p_max, so each z is inverted in the
  // shifted time tau - z / p_max; the jumps from paths without a nonzero jump
  // are removed analytically and added back.
  bool ok = true;
  std::vector<Matrix> inverted;
  for (int a : active) {
    const double z = zs[a];
    const double lead = z / p_max;
    const auto atoms = detail::upcross_atoms(m, z);
    const auto kinks = detail::upcross_kinks(m, z);
    if (!(zeta - lead > 1e-12 * zeta)) {
      Matrix v = Matrix::Zero(n, n);
      for (const auto& [t_atom, mass] : atoms)
        if (t_atom <= zeta * (1 + 1e-12)) v += mass;
      inverted.push_back(v);
      continue;
    }
    auto transform = [&](Complex theta) -> CMatrix {
      CMatrix blk = first_passage_exponential(root_system(m, theta, true), z, theta * lead);
      for (const auto& [t_atom, mass] : atoms) blk -= std::exp(-theta * (t_atom - lead)) * mass.cast<Complex>();
      for (const auto& [t_kink, jump] : kinks)
        blk -= std::exp(-theta * (t_kink - lead)) / ((theta + 1.0) * (theta + 1.0)) * theta * jump.cast<Complex>();
      return blk / theta;
    };
    try {
      // Same contour, growing summation lengths: the change between the last
      // two sums measures the truncation error, while the discretisation
      // error of a bounded function is below e^{-a}, about 3e-10 here.
      // Nodes just short of a breakpoint sit next to a non-smooth point of the
      // law and need the longer sums.
      numeric::EulerParams prm;
      prm.a = 22.0;
      prm.terms = 90;
      prm.levels = 15;
      Matrix v1 = numeric::euler_invert(transform, zeta - lead, prm);
      Matrix v2;
      double change = 0.0;
      for (int terms : {150, 300, 600}) {
        prm.terms = terms;
        v2 = numeric::euler_invert(transform, zeta - lead, prm);
        change = (v1 - v2).cwiseAbs().maxCoeff();
        if (change < 1e-6) break;
        v1 = v2;
      }
      res.inversion_change = std::max(res.inversion_change, change);
      for (const auto& [t_atom, mass] : atoms)
        if (t_atom <= zeta) v2 += mass;
      for (const auto& [t_kink, jump] : kinks)
        if (t_kink < zeta) v2 += (zeta - t_kink) * std::exp(-(zeta - t_kink)) * jump;
      inverted.push_back(v2.cwiseMax(0.0).cwiseMin(1.0));
    } catch (const NumericalError&) {
      ok = false;
      break;
    }
  }
  ok = ok && res.inversion_change < 1e-6;
  if (ok) {
    for (std::size_t a = 0; a < active.size(); ++a) res.value[active[a]] = inverted[a];
    return res;
  }
  if (!fallback) throw NumericalError("upcross_cdf: Laplace inversion did not reach 1e-6 and no Monte Carlo fallback given");
  res.method = "monte-carlo";
  for (int a : active) {
    for (int i = 0; i < n; ++i) {
      auto est = mc_first_passage(m, 0.0, zs[a], i, zeta, fallback->n, fallback->seed);
      for (int j = 0; j < n; ++j) {
        res.value[a](i, j) = est[j].value;
        res.se[a](i, j) = est[j].se;
      }
    }
  }
  return res;
}

inline Matrix upcross_cdf(const RegimeModel& m, double z, double zeta) { return upcross_cdf(m, std::vector<double>{z}, zeta).value[0]; }

// Quadrature nodes on [0, p_max zeta], Gauss-Legendre on each piece between
// the breakpoints p_j zeta where the passage law has jumps.
struct ZQuadrature {
  std::vector<double> nodes, weights;
};

inline ZQuadrature parisian_nodes(const RegimeModel& m, double zeta, int per_piece = 64) {
  std::vector<double> br{0.0};
  for (int i = 0; i < m.n_states(); ++i) br.push_back(m.premiums(i) * zeta);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  const auto rule = numeric::gauss_legendre(per_piece);
  ZQuadrature q;
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const double c = 0.5 * (br[k] + br[k + 1]), h = 0.5 * (br[k + 1] - br[k]);
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      q.nodes.push_back(c + h * rule.nodes[j]);
      q.weights.push_back(h * rule.weights[j]);
    }
  }
  return q;
}

// Parisian ruin with delay zeta through the fixed-point system at level 0.
class ParisianSolver {
 public:
  ParisianSolver(const RegimeModel& m, double zeta, int per_piece = 64)
      : model_(m), zeta_(zeta), engine_(m, 0.0), n_(m.n_states()) {
    if (zeta < 0) throw InputError("zeta must be nonnegative");
    survival0_ = (Vector::Ones(n_) - engine_.ruin_probability(0.0));
    if (zeta == 0) {
      kernel_ = Matrix::Zero(n_, n_);
      s_ = survival0_;
      return;
    }
    kernel_ = assemble(per_piece);
    if (per_piece >= 8) quad_error_ = (assemble(per_piece / 2) - kernel_).cwiseAbs().maxCoeff();
    Eigen::EigenSolver<Matrix> es(kernel_);
    radius_ = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(radius_ < 1.0)) throw NumericalError("Parisian kernel is not a contraction (spectral radius " + std::to_string(radius_) + ")");
    s_ = (Matrix::Identity(n_, n_) - kernel_).partialPivLu().solve(survival0_);
  }

  double zeta() const { return zeta_; }
  const Matrix& kernel() const { return kernel_; }
  const Vector& level_zero_survival() const { return s_; }
  double spectral_radius() const { return radius_; }
  double quadrature_error() const { return quad_error_; }
  double upcross_inversion_change() const { return inversion_change_; }

  // P_{x,i}(tau^zeta < inf) = phi_i(x) - ∫ deficit(x, dz) P(tau_z^+ <= zeta) s.
  Vector ruin(double x) const {
    if (x < 0) throw InputError("parisian ruin needs x >= 0");
    Vector phi = engine_.ruin_probability_unclamped(x);
    if (zeta_ == 0) return phi.cwiseMax(0.0);
    for (std::size_t k = 0; k < quad_.nodes.size(); ++k) {
      const Matrix d = deficit_density(x, quad_.nodes[k]);
      phi -= quad_.weights[k] * d * upcross_[k] * s_;
    }
    return phi.cwiseMax(0.0);
  }

  Vector survival(double x) const { return Vector::Ones(n_) - ruin(x); }

 private:
  // Rows: start state, columns: state at ruin.
  Matrix deficit_density(double x, double z) const {
    const auto jumps = jump_measure(model_);
    const double zmax = claim_truncation(model_);
    auto kern = [&](double y) -> Matrix {
      Matrix k = Matrix::Zero(n_, n_);
      for (const auto& e : jumps) k(e.from, e.to) += e.weight * e.law->density(y + z);
      return k;
    };
    return compensation_integral(engine_, x, kern, zmax);
  }

  Matrix assemble(int per_piece) {
    const ZQuadrature q = parisian_nodes(model_, zeta_, per_piece);
    const UpcrossResult up = upcross_cdf(model_, q.nodes, zeta_);
    inversion_change_ = std::max(inversion_change_, up.inversion_change);
    Matrix a = Matrix::Zero(n_, n_);
    for (std::size_t k = 0; k < q.nodes.size(); ++k) a += q.weights[k] * deficit_density(0.0, q.nodes[k]) * up.value[k];
    if (quad_.nodes.empty() || static_cast<int>(q.nodes.size()) > static_cast<int>(quad_.nodes.size())) {
      quad_ = q;
      upcross_ = up.value;
    }
    return a;
  }

  RegimeModel model_;
  double zeta_;
  ScaleEngine engine_;
  int n_;
  Vector survival0_;
  Matrix kernel_;
  Vector s_;
  ZQuadrature quad_;
  std::vector<Matrix> upcross_;
  double radius_ = 0.0;
  double quad_error_ = 0.0;
  double inversion_change_ = 0.0;
};

inline Vector parisian_survival(const RegimeModel& m, double zeta, double x) {
  return ParisianSolver(m, zeta).survival(x);
}

inline Vector parisian_ruin(const RegimeModel& m, double zeta, double x) { return ParisianSolver(m, zeta).ruin(x); }

struct ParisianCramer {
  double value = 0.0;   // C^zeta (first initial state)
  Vector per_state;
  double change = 0.0;  // relative change when x0 is doubled
  double x0 = 0.0;
};

// e^{gamma x} P_x(tau^zeta < inf) at x0, 1.5 x0, 2 x0, extrapolated.
inline ParisianCramer parisian_cramer(const RegimeModel& m, double zeta, double x0 = -1.0) {
  const double gamma = adjustment_coefficient(m);
  if (x0 <= 0) x0 = 10.0 / gamma;
  const ParisianSolver solver(m, zeta);
  const int n = m.n_states();
  auto fit = [&](double base) {
    const Vector a0 = solver.ruin(base) * std::exp(gamma * base);
    const Vector a1 = solver.ruin(1.5 * base) * std::exp(gamma * 1.5 * base);
    const Vector a2 = solver.ruin(2 * base) * std::exp(gamma * 2 * base);
    Vector c(n);
    for (int i = 0; i < n; ++i) c(i) = aitken(a0(i), a1(i), a2(i));
    return c;
  };
  ParisianCramer r;
  r.x0 = x0;
  const Vector c1 = fit(x0), c2 = fit(2 * x0);
  r.per_state = c2;
  r.value = c2(0);
  r.change = (c2 - c1).cwiseAbs().maxCoeff() / std::max(c2.cwiseAbs().maxCoeff(), 1e-300);
  if (!(r.change < 0.02)) throw NumericalError("Parisian Cramér fit did not stabilise");
  return r;
}

// The heavy-tailed limit does not depend on zeta.
inline Vector parisian_subexp(const RegimeModel& m, double x, double /*zeta*/) { return subexp_asymptote(m, x); }

}  // namespace mmrisk
