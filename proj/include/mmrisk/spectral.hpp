#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <tuple>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "core.hpp"
#include "model.hpp"
#include "numeric.hpp"

namespace mmrisk {

// F(alpha) = diag(p_i alpha + lambda_i (E e^{-alpha C_i} - 1)) + (q_ij E e^{-alpha C_ij}).
inline CMatrix matrix_exponent(const RegimeModel& m, Complex alpha) {
  const int n = m.n_states();
  CMatrix f = CMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    Complex d = m.premiums(i) * alpha + m.q_matrix(i, i);
    if (m.arrival_rates(i) > 0) d += m.arrival_rates(i) * (m.state_claim(i).transform(alpha) - 1.0);
    f(i, i) = d;
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) == 0) continue;
      f(i, j) = m.q_matrix(i, j) * m.transition_claim(i, j).transform(alpha);
    }
  }
  return f;
}

inline Matrix matrix_exponent(const RegimeModel& m, double alpha) {
  return matrix_exponent(m, Complex(alpha, 0.0)).real();
}

// Entrywise derivative of F in alpha.
inline Matrix matrix_exponent_derivative(const RegimeModel& m, double alpha) {
  const int n = m.n_states();
  Matrix f = Matrix::Zero(n, n);
  const Complex a(alpha, 0.0);
  for (int i = 0; i < n; ++i) {
    double d = m.premiums(i);
    if (m.arrival_rates(i) > 0) d += m.arrival_rates(i) * m.state_claim(i).transform_derivative(a).real();
    f(i, i) = d;
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) == 0) continue;
      f(i, j) = m.q_matrix(i, j) * m.transition_claim(i, j).transform_derivative(a).real();
    }
  }
  return f;
}

struct SpectralData {
  double alpha = 0.0;
  Matrix f;
  double k = 0.0;
  Vector h;
  RowVector v;
  double dk = 0.0;
  double d2k = 0.0;
};

namespace detail {

inline void perron_core(const RegimeModel& m, double alpha, SpectralData& s) {
  s.alpha = alpha;
  s.f = matrix_exponent(m, alpha);
  const int n = m.n_states();
  const RowVector pi = stationary_distribution(m.q_matrix);
  if (n == 1) {
    s.k = s.f(0, 0);
    s.h = Vector::Ones(1);
    s.v = RowVector::Ones(1);
    return;
  }
  Eigen::EigenSolver<Matrix> right(s.f);
  Eigen::EigenSolver<Matrix> left(s.f.transpose());
  auto top_index = [](const Eigen::VectorXcd& ev) {
    int best = 0;
    for (int i = 1; i < ev.size(); ++i)
      if (ev(i).real() > ev(best).real()) best = i;
    return best;
  };
  const int ir = top_index(right.eigenvalues());
  const int il = top_index(left.eigenvalues());
  const auto ev = right.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (i == ir) continue;
    if (std::abs(ev(i) - ev(ir)) < 1e-12 * std::max(1.0, std::abs(ev(ir))))
      throw NumericalError("Perron eigenvalue is not simple at alpha = " + std::to_string(alpha));
  }
  s.k = ev(ir).real();
  Vector h = right.eigenvectors().col(ir).real();
  RowVector v = left.eigenvectors().col(il).real().transpose();
  if (h.sum() < 0) h = -h;
  if (v.sum() < 0) v = -v;
  if ((h.array() <= 0).any() || (v.array() <= 0).any())
    throw NumericalError("Perron eigenvectors are not strictly positive; F(alpha) may be reducible");
  h /= pi.dot(h);
  v /= v.dot(h);
  s.h = h;
  s.v = v;
}

}  // namespace detail

inline double k_prime(const RegimeModel& m, double alpha) {
  SpectralData s;
  detail::perron_core(m, alpha, s);
  return s.v * matrix_exponent_derivative(m, alpha) * s.h;
}

// (k'(alpha), k''(alpha)); the second derivative by a Richardson-extrapolated
// central difference of the exact first derivative.
inline std::pair<double, double> k_derivatives(const RegimeModel& m, double alpha) {
  const double d1 = k_prime(m, alpha);
  const double step = 1e-5 * std::max(1.0, std::abs(alpha));
  auto central = [&](double h) { return (k_prime(m, alpha + h) - k_prime(m, alpha - h)) / (2.0 * h); };
  const double coarse = central(step), fine = central(0.5 * step);
  return {d1, (4.0 * fine - coarse) / 3.0};
}

inline SpectralData perron_triple(const RegimeModel& m, double alpha, bool with_derivatives = true) {
  SpectralData s;
  detail::perron_core(m, alpha, s);
  if (with_derivatives) {
    auto [d1, d2] = k_derivatives(m, alpha);
    s.dk = d1;
    s.d2k = d2;
  }
  return s;
}

inline double perron_eigenvalue(const RegimeModel& m, double alpha) {
  SpectralData s;
  detail::perron_core(m, alpha, s);
  return s.k;
}

// Positive root of k(-gamma) = 0.
inline double adjustment_coefficient(const RegimeModel& m) {
  if (!m.light_tailed()) throw DomainError("no Cramér root (heavy tail or subcritical tilt range)");
  const double slope0 = k_prime(m, 0.0);
  if (!(slope0 > 0)) throw DomainError("no Cramér root: stationary drift is not positive");
  const double abscissa = m.min_abscissa();
  auto g = [&](double a) { return perron_eigenvalue(m, -a); };
  double hi = -1.0;
  if (std::isfinite(abscissa)) {
    for (int j = 1; j <= 60; ++j) {
      const double a = abscissa * (1.0 - std::ldexp(1.0, -j));
      if (g(a) > 0) {
        hi = a;
        break;
      }
    }
  } else {
    for (double a = 1.0; a < 1e8; a *= 2.0)
      if (g(a) > 0) {
        hi = a;
        break;
      }
  }
  if (hi < 0) throw DomainError("no Cramér root (heavy tail or subcritical tilt range)");
  // Start right of the minimum of the convex function so the bracket is clean.
  double lo = hi;
  for (int j = 0; j < 200 && g(lo) >= 0; ++j) lo *= 0.5;
  if (g(lo) >= 0) throw DomainError("no Cramér root (heavy tail or subcritical tilt range)");
  double root = numeric::find_root(g, lo, hi, 1e-15);
  for (int it = 0; it < 5; ++it) {
    const double val = g(root);
    if (std::abs(val) < 1e-13) break;
    const double d = -k_prime(m, -root);
    const double next = root - val / d;
    if (!(next > lo && next < hi) || std::abs(g(next)) >= std::abs(val)) break;
    root = next;
  }
  return root;
}

// Largest real alpha >= 0 with k(alpha) = q.
inline double phi_of_q(const RegimeModel& m, double q) {
  if (q < 0) throw InputError("phi_of_q needs q >= 0");
  auto g = [&](double a) { return perron_eigenvalue(m, a) - q; };
  double hi = 1.0;
  while (g(hi) <= 0) {
    hi *= 2.0;
    if (hi > 1e12) throw NumericalError("phi_of_q: no bracket");
  }
  if (q > 0) return numeric::find_root(g, 0.0, hi, 1e-15);
  if (k_prime(m, 0.0) >= 0) return 0.0;
  // Negative drift: the positive root lies right of the minimiser of k.
  double lo = numeric::find_root([&](double a) { return k_prime(m, a); }, 0.0, hi, 1e-14);
  return numeric::find_root(g, lo, hi, 1e-15);
}

struct TiltedModel {
  RegimeModel model;
  double theta = 0.0;
  double k_shift = 0.0;  // k(-theta); zero at the adjustment coefficient
  Vector h;              // h(-theta)
};

// Exponential change of measure with parameter theta: under the new law the
// exponent is diag(h)^{-1} F(alpha - theta) diag(h) - k(-theta) I.
inline TiltedModel tilt_model(const RegimeModel& m, double theta) {
  for (auto* law : m.active_laws())
    if (!law->closed_under_tilting())
      throw DomainError(law->describe() + " is not closed under exponential tilting");
  SpectralData s;
  detail::perron_core(m, -theta, s);
  TiltedModel t;
  t.theta = theta;
  t.k_shift = s.k;
  t.h = s.h;
  const int n = m.n_states();
  RegimeModel& r = t.model;
  r.premiums = m.premiums;
  r.arrival_rates = Vector(n);
  r.q_matrix = Matrix::Zero(n, n);
  r.state_claims.resize(n);
  r.transition_claims.assign(n, std::vector<std::optional<ClaimLaw>>(n));
  for (int i = 0; i < n; ++i) {
    if (m.arrival_rates(i) > 0) {
      const ClaimLaw& c = m.state_claim(i);
      r.arrival_rates(i) = m.arrival_rates(i) * c.mgf(theta);
      r.state_claims[i] = c.tilted(theta);
    } else {
      r.arrival_rates(i) = 0.0;
      r.state_claims[i] = m.state_claims[i];
    }
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) == 0) continue;
      const ClaimLaw& c = m.transition_claim(i, j);
      r.q_matrix(i, j) = m.q_matrix(i, j) * c.mgf(theta) * s.h(j) / s.h(i);
      row += r.q_matrix(i, j);
      if (!m.transition_claims.empty() && m.transition_claims[i][j]) r.transition_claims[i][j] = c.tilted(theta);
    }
    r.q_matrix(i, i) = -row;
  }
  return t;
}

// Fluid-queue linearisation of the exponent: the level rises at rate p_i in the
// regime states and falls at unit rate through the phases of each claim.
struct FluidSystem {
  int n = 0;
  int dim = 0;
  Matrix generator;
  Vector speed;
};

inline FluidSystem fluid_linearization(const RegimeModel& m) {
  const int n = m.n_states();
  for (auto* law : m.active_laws())
    if (!law->has_mgf()) throw DomainError(law->describe() + " has no phase-type representation");
  struct Block {
    int from, to;
    double rate;
    const PhaseRep* ph;
  };
  std::vector<Block> blocks;
  int dim = n;
  for (int i = 0; i < n; ++i) {
    if (m.arrival_rates(i) > 0 && m.state_claim(i).phase_rep().phases() > 0) {
      blocks.push_back({i, i, m.arrival_rates(i), &m.state_claim(i).phase_rep()});
      dim += blocks.back().ph->phases();
    }
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) == 0) continue;
      const PhaseRep& ph = m.transition_claim(i, j).phase_rep();
      if (ph.phases() > 0) {
        blocks.push_back({i, j, m.q_matrix(i, j), &ph});
        dim += ph.phases();
      }
    }
  }
  FluidSystem fs;
  fs.n = n;
  fs.dim = dim;
  fs.generator = Matrix::Zero(dim, dim);
  fs.speed = Vector::Constant(dim, -1.0);
  fs.speed.head(n) = m.premiums;
  for (int i = 0; i < n; ++i) {
    fs.generator(i, i) += m.q_matrix(i, i);
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) == 0) continue;
      // Atom of the transition claim (or no claim at all) moves straight to j.
      const PhaseRep& ph = m.transition_claim(i, j).phase_rep();
      fs.generator(i, j) += m.q_matrix(i, j) * ph.atom;
    }
  }
  int offset = n;
  for (const auto& b : blocks) {
    const int k = b.ph->phases();
    for (int c = 0; c < k; ++c) fs.generator(b.from, offset + c) += b.rate * b.ph->alpha(c);
    // Switch claims are already inside q_ii.
    if (b.from == b.to) fs.generator(b.from, b.from) -= b.rate * b.ph->alpha.sum();
    fs.generator.block(offset, offset, k, k) = b.ph->generator;
    fs.generator.block(offset, b.to, k, 1) += b.ph->exit;
    offset += k;
  }
  return fs;
}

// Eigen-structure of the linearisation at (possibly complex) discount q. The
// eigenvalues are exactly the roots of det(F(lambda) - qI) = 0.
struct RootSystem {
  Complex q;
  int n = 0;
  CVector roots;
  std::vector<CVector> h;       // regime part of right eigenvectors
  std::vector<CRowVector> v;    // left null vectors scaled so that B_k = h_k v_k
  std::vector<int> upper;       // N roots with largest real part
  std::vector<int> lower;       // remaining (decaying) roots
  CMatrix h_upper;              // columns h_k, k in upper
  CMatrix v_upper;              // rows v_k, k in upper

  CMatrix residue(int k) const { return h[k] * v[k]; }
};

// With upper_only, only the N first-passage roots need to be simple; the
// decaying roots may cluster (as they do for large |q|).
inline RootSystem root_system(const RegimeModel& m, Complex q, bool upper_only = false) {
  const FluidSystem fs = fluid_linearization(m);
  const int n = fs.n, dim = fs.dim;
  CMatrix shifted = fs.generator.cast<Complex>();
  for (int i = 0; i < n; ++i) shifted(i, i) -= q;
  CMatrix lin = -(fs.speed.cwiseInverse().cast<Complex>().asDiagonal() * shifted);
  Eigen::ComplexEigenSolver<CMatrix> es(lin);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition of the linearisation failed");
  RootSystem rs;
  rs.q = q;
  rs.n = n;
  rs.roots = es.eigenvalues();
  const CMatrix& s = es.eigenvectors();
  Eigen::PartialPivLU<CMatrix> lu(s);
  CMatrix sinv = lu.inverse();
  double scale = 1.0;
  for (int k = 0; k < dim; ++k) scale = std::max(scale, std::abs(rs.roots(k)));

  std::vector<int> order(dim);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return rs.roots(a).real() > rs.roots(b).real(); });
  rs.upper.assign(order.begin(), order.begin() + n);
  rs.lower.assign(order.begin() + n, order.end());
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b) {
      if (upper_only && std::max(a, b) >= n) continue;
      if (std::abs(rs.roots(order[a]) - rs.roots(order[b])) < 1e-8 * scale)
        throw NumericalError("exponent roots are not simple (near-repeated root); perturb q slightly");
    }
  if (!upper_only) {
    const double cond = s.cwiseAbs().rowwise().sum().maxCoeff() * sinv.cwiseAbs().rowwise().sum().maxCoeff();
    if (!(cond < 1e12)) throw NumericalError("eigenvectors of the linearisation are nearly defective; perturb q slightly");
  }
  if (!rs.lower.empty()) {
    const double gap = rs.roots(rs.upper.back()).real() - rs.roots(rs.lower.front()).real();
    if (!(gap > 1e-9 * scale))
      throw NumericalError("cannot separate the N first-passage roots from the decaying roots");
  }
  rs.h.resize(dim);
  rs.v.resize(dim);
  for (int k = 0; k < dim; ++k) {
    rs.h[k] = s.col(k).head(n);
    CRowVector w = sinv.row(k).head(n);
    for (int i = 0; i < n; ++i) w(i) /= fs.speed(i);
    rs.v[k] = w;
  }
  rs.h_upper.resize(n, n);
  rs.v_upper.resize(n, n);
  for (int c = 0; c < n; ++c) {
    rs.h_upper.col(c) = rs.h[rs.upper[c]];
    rs.v_upper.row(c) = rs.v[rs.upper[c]];
  }
  return rs;
}

struct ExponentRoot {
  Complex lambda;
  CVector h;
  CRowVector v;
  double residual = 0.0;
};

// Winding number of det(F(lambda) - qI) around the half disc right of Re = -shift.
inline int count_roots_right(const RegimeModel& m, Complex q, double shift, double radius) {
  const int n = m.n_states();
  auto g = [&](Complex z) {
    CMatrix f = matrix_exponent(m, z) - q * CMatrix::Identity(n, n);
    return f.determinant();
  };
  auto point = [&](double t) -> Complex {
    // t in [0,1]: downward segment; t in [1,2]: right arc.
    if (t <= 1.0) return Complex(-shift, radius * (1.0 - 2.0 * t));
    const double ang = -std::numbers::pi / 2 + (t - 1.0) * std::numbers::pi;
    return Complex(-shift, 0.0) + radius * Complex(std::cos(ang), std::sin(ang));
  };
  double total = 0.0;
  const int pieces = 400;
  for (int p = 0; p < pieces; ++p) {
    double a = 2.0 * p / pieces, b = 2.0 * (p + 1) / pieces;
    std::vector<std::tuple<double, double, Complex, Complex, int>> work;
    work.emplace_back(a, b, g(point(a)), g(point(b)), 0);
    while (!work.empty()) {
      auto [ta, tb, ga, gb, depth] = work.back();
      work.pop_back();
      const double d = std::arg(gb / ga);
      if (std::abs(d) > 0.25 && depth < 40) {
        const double tm = 0.5 * (ta + tb);
        const Complex gm = g(point(tm));
        work.emplace_back(tm, tb, gm, gb, depth + 1);
        work.emplace_back(ta, tm, ga, gm, depth + 1);
      } else {
        total += d;
      }
    }
  }
  return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

// The N roots of det(F(lambda) - qI) in the closed right half-plane, each with
// null vectors; the count is certified by the argument principle.
inline std::vector<ExponentRoot> exponent_roots(const RegimeModel& m, double q) {
  if (q < 0) throw InputError("exponent_roots needs q >= 0");
  const RootSystem rs = root_system(m, Complex(q, 0.0));
  const int n = m.n_states();
  std::vector<ExponentRoot> out;
  double rmax = 0.0;
  for (int k : rs.upper) {
    ExponentRoot r;
    r.lambda = rs.roots(k);
    if (r.lambda.real() < -1e-9) throw DomainError("a first-passage root has negative real part; net profit fails at q = 0");
    r.h = rs.h[k] / rs.h[k].cwiseAbs().maxCoeff();
    r.v = rs.v[k] / rs.v[k].cwiseAbs().maxCoeff();
    CMatrix f = matrix_exponent(m, r.lambda) - Complex(q, 0.0) * CMatrix::Identity(n, n);
    const double fscale = std::max(1.0, f.cwiseAbs().maxCoeff());
    r.residual = std::max((f * r.h).cwiseAbs().maxCoeff(), (r.v * f).cwiseAbs().maxCoeff()) / fscale;
    if (r.residual > 1e-9) throw NumericalError("root residual too large: " + std::to_string(r.residual));
    rmax = std::max(rmax, std::abs(r.lambda));
    out.push_back(std::move(r));
  }
  double shift = 1e-3;
  for (int k : rs.lower) shift = std::min(shift, 0.5 * std::abs(rs.roots(k).real()));
  shift = std::min(shift, 0.5 * m.min_abscissa());
  double bound = 0.0;
  for (int i = 0; i < n; ++i)
    bound = std::max(bound, (q + 2.0 * m.arrival_rates(i) + 2.0 * std::abs(m.q_matrix(i, i))) / m.premiums(i));
  const double radius = std::max(2.0 * rmax + 1.0, 2.0 * bound + 1.0);
  const int count = count_roots_right(m, Complex(q, 0.0), shift, radius);
  if (count != n)
    throw NumericalError("argument principle found " + std::to_string(count) + " roots, expected " + std::to_string(n));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.lambda.real() < b.lambda.real(); });
  return out;
}

}  // namespace mmrisk
