#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "spectral.hpp"

namespace mmrisk {

enum class ScaleMethod { spectral, laplace_inversion };

inline std::string method_name(ScaleMethod m) {
  return m == ScaleMethod::spectral ? "spectral" : "laplace-inversion";
}

// e^{G x + log_scale} for the first-passage generator built from a root
// system; works for complex discount rates as well.
inline CMatrix first_passage_exponential(const RootSystem& rs, double x, Complex log_scale = 0.0) {
  const int n = rs.n;
  CVector d(n);
  for (int c = 0; c < n; ++c) d(c) = std::exp(-rs.roots(rs.upper[c]) * x + log_scale);
  return rs.h_upper * d.asDiagonal() * rs.h_upper.partialPivLu().inverse();
}

// Scale matrices of a light-tailed model at a fixed discount q >= 0.
//
// W(x) = sum_k e^{lambda_k x} B_k over every root of det(F - qI); the
// residues come from the fluid linearisation. Everything that would otherwise
// need W(a)^{-1} for large a is evaluated in a rescaled form in which the
// growing modes are divided out analytically.
class ScaleEngine {
 public:
  ScaleEngine(const RegimeModel& m, double q) : model_(m), q_(q), rs_(root_system(m, Complex(q, 0.0))) {
    if (q < 0) throw InputError("discount rate q must be nonnegative");
    n_ = m.n_states();
    dim_ = static_cast<int>(rs_.roots.size());
    residues_.reserve(dim_);
    for (int k = 0; k < dim_; ++k) residues_.push_back(rs_.residue(k));
    hp_inv_ = rs_.h_upper.partialPivLu().inverse();
    vp_inv_ = rs_.v_upper.partialPivLu().inverse();
    qq_ = (m.q_matrix - q * Matrix::Identity(n_, n_)).cast<Complex>();
    if (q == 0.0) {
      const double drift = k_prime(m, 0.0);
      if (!(drift > 0)) throw DomainError("net profit violated: stationary drift " + std::to_string(drift) + " <= 0");
    }
    c_inf_ = compute_c_inf();
  }

  const RegimeModel& model() const { return model_; }
  double q() const { return q_; }
  int n_states() const { return n_; }
  const RootSystem& roots() const { return rs_; }
  const CMatrix& residue(int k) const { return residues_[k]; }

  Matrix W(double x) const {
    if (x < 0) return Matrix::Zero(n_, n_);
    if (x == 0) return model_.premiums.cwiseInverse().asDiagonal();
    CMatrix s = CMatrix::Zero(n_, n_);
    for (int k = 0; k < dim_; ++k) s += std::exp(rs_.roots(k) * x) * residues_[k];
    return s.real();
  }

  // (F(alpha) - qI)^{-1} from the partial-fraction expansion.
  CMatrix resolvent(Complex alpha) const {
    CMatrix s = CMatrix::Zero(n_, n_);
    for (int k = 0; k < dim_; ++k) s += residues_[k] / (alpha - rs_.roots(k));
    return s;
  }

  // ∫_X^∞ e^{-alpha x} W(x) dx, continued analytically when alpha is left of
  // some roots.
  Matrix laplace_tail(double alpha, double from) const {
    CMatrix s = CMatrix::Zero(n_, n_);
    for (int k = 0; k < dim_; ++k) {
      const Complex d = Complex(alpha, 0.0) - rs_.roots(k);
      s += residues_[k] * (std::exp(-d * from) / d);
    }
    return s.real();
  }

  // Z(alpha, x) = e^{alpha x}(I - ∫_0^x e^{-alpha y} W(y) dy (F(alpha) - qI)).
  Matrix Z(double x, double alpha = 0.0) const {
    if (x <= 0) return Matrix::Identity(n_, n_);
    const CMatrix fq = f_minus_q(alpha);
    CMatrix s = std::exp(alpha * x) * CMatrix::Identity(n_, n_);
    for (int k = 0; k < dim_; ++k) s -= residues_[k] * (weighted_integral(k, alpha, x, 0.0) * fq);
    return s.real();
  }

  Matrix G() const {
    CVector d(n_);
    for (int c = 0; c < n_; ++c) d(c) = -rs_.roots(rs_.upper[c]);
    return (rs_.h_upper * d.asDiagonal() * hp_inv_).real();
  }

  Matrix R() const {
    CVector d(n_);
    for (int c = 0; c < n_; ++c) d(c) = -rs_.roots(rs_.upper[c]);
    return (vp_inv_ * d.asDiagonal() * rs_.v_upper).real();
  }

  Matrix exp_G(double x) const { return first_passage_exponential(rs_, x).real(); }

  Matrix exp_R(double z) const {
    CVector d(n_);
    for (int c = 0; c < n_; ++c) d(c) = std::exp(-rs_.roots(rs_.upper[c]) * z);
    return (vp_inv_ * d.asDiagonal() * rs_.v_upper).real();
  }

  const Matrix& c_infinity() const { return c_inf_; }
  int c_infinity_doublings() const { return doublings_; }

  // u(x, z) = W(x) e^{R z} - W(x - z). The growing modes cancel exactly
  // (v_k e^{R z} = e^{-lambda_k z} v_k), so only decaying terms are summed.
  Matrix potential_density(double x, double z) const {
    CMatrix low_x = CMatrix::Zero(n_, n_);
    for (int k : rs_.lower) low_x += std::exp(rs_.roots(k) * x) * residues_[k];
    CMatrix u = low_x * exp_R(z).cast<Complex>();
    if (z <= x) {
      for (int k : rs_.lower) u -= std::exp(rs_.roots(k) * (x - z)) * residues_[k];
    } else {
      for (int k : rs_.upper) u += std::exp(rs_.roots(k) * (x - z)) * residues_[k];
    }
    return u.real();
  }

  // E_x[e^{-q tau_a^+}; tau_a^+ < tau_0^-, J].
  Matrix exit_upward(double x, double a) const {
    if (!(x >= 0 && x <= a)) throw InputError("exit_upward needs 0 <= x <= a");
    if (x == a) return Matrix::Identity(n_, n_);
    const CMatrix w_hat = scaled_W(a);
    check_conditioning(w_hat);
    CMatrix right = w_hat.partialPivLu().inverse() * growth_inverse(a) * hp_inv_;
    return (W(x).cast<Complex>() * right).real();
  }

  // E_x[e^{-q tau_0^- + alpha X_{tau_0^-}}; tau_0^- < tau_a^+, J].
  Matrix exit_downward(double x, double a, double alpha) const {
    if (!(x >= 0 && x <= a)) throw InputError("exit_downward needs 0 <= x <= a");
    if (alpha < 0) throw InputError("exit_downward needs alpha >= 0");
    if (x == a) return Matrix::Zero(n_, n_);
    const CMatrix w_hat = scaled_W(a);
    check_conditioning(w_hat);
    CMatrix ratio = w_hat.partialPivLu().solve(scaled_Z(a, alpha));
    return Z(x, alpha) - (W(x).cast<Complex>() * ratio).real();
  }

  // Ruin probabilities for q = 0, from the decaying modes only.
  Vector ruin_probability(double x) const {
    if (q_ != 0.0) throw InputError("ruin_probability is the q = 0 quantity; use discounted_ruin");
    return discounted_ruin(x).rowwise().sum().cwiseMax(0.0).cwiseMin(1.0);
  }

  // Same without clamping; keeps relative accuracy far in the tail.
  Vector ruin_probability_unclamped(double x) const {
    if (q_ != 0.0) throw InputError("ruin_probability is the q = 0 quantity; use discounted_ruin");
    return discounted_ruin(x).rowwise().sum();
  }

  // Z(x) - W(x) C_inf, summed over the decaying modes (the growing modes
  // cancel exactly).
  Matrix discounted_ruin(double x) const {
    if (x < 0) return Matrix::Identity(n_, n_);
    CMatrix s = CMatrix::Zero(n_, n_);
    const CMatrix cinf = c_inf_.cast<Complex>();
    for (int k : rs_.lower) s -= std::exp(rs_.roots(k) * x) * residues_[k] * (qq_ / rs_.roots(k) + cinf);
    return s.real();
  }

  // W(x) C_inf 1 evaluated literally.
  Vector survival_direct(double x) const { return W(x) * c_inf_ * Vector::Ones(n_); }

  // Growing (upper) and decaying (lower) modes of W.
  Matrix W_mode_sum(double x, bool growing) const {
    CMatrix s = CMatrix::Zero(n_, n_);
    for (int k : growing ? rs_.upper : rs_.lower) s += std::exp(rs_.roots(k) * x) * residues_[k];
    return s.real();
  }

 private:
  CMatrix f_minus_q(double alpha) const {
    return matrix_exponent(model_, Complex(alpha, 0.0)) - Complex(q_, 0.0) * CMatrix::Identity(n_, n_);
  }

  // e^{-shift x} ∫_0^x e^{(lambda_k - alpha) y} dy e^{alpha x}, computed without overflow.
  Complex weighted_integral(int k, double alpha, double x, Complex shift) const {
    const Complex lam = rs_.roots(k);
    const Complex d = lam - alpha;
    if (std::abs(d) < 1e-12) return x * std::exp((alpha - shift) * x);
    return (std::exp((lam - shift) * x) - std::exp((alpha - shift) * x)) / d;
  }

  CMatrix growth_inverse(double a) const {
    CVector d(n_);
    for (int c = 0; c < n_; ++c) d(c) = std::exp(-rs_.roots(rs_.upper[c]) * a);
    return d.asDiagonal();
  }

  // E_P(a)^{-1} H_P^{-1} W(a).
  CMatrix scaled_W(double a) const {
    CMatrix out = rs_.v_upper;
    for (int k : rs_.lower) {
      CVector coef = hp_inv_ * rs_.h[k];
      for (int j = 0; j < n_; ++j) {
        const Complex lam_j = rs_.roots(rs_.upper[j]);
        out.row(j) += coef(j) * std::exp((rs_.roots(k) - lam_j) * a) * rs_.v[k];
      }
    }
    return out;
  }

  // E_P(a)^{-1} H_P^{-1} Z(alpha, a).
  CMatrix scaled_Z(double a, double alpha) const {
    const CMatrix fq = f_minus_q(alpha);
    CMatrix out(n_, n_);
    for (int j = 0; j < n_; ++j) {
      const Complex lam_j = rs_.roots(rs_.upper[j]);
      CRowVector row = std::exp((alpha - lam_j) * a) * hp_inv_.row(j);
      CRowVector acc = CRowVector::Zero(n_);
      // Own growing mode: H_P^{-1} h_j = e_j.
      acc += weighted_integral(rs_.upper[j], alpha, a, lam_j) * rs_.v[rs_.upper[j]];
      for (int k : rs_.lower) {
        const Complex coef = (hp_inv_.row(j) * rs_.h[k])(0);
        acc += coef * weighted_integral(k, alpha, a, lam_j) * rs_.v[k];
      }
      out.row(j) = row - acc * fq;
    }
    return out;
  }

  void check_conditioning(const CMatrix& w_hat) const {
    Eigen::JacobiSVD<CMatrix> svd(w_hat);
    const auto sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!(cond < 1e12))
      throw NumericalError("scaled W(a) is ill-conditioned (condition " + std::to_string(cond) + "); use a smaller a");
  }

  Matrix compute_c_inf() {
    double a = 1.0;
    CMatrix prev = scaled_W(a).partialPivLu().solve(scaled_Z(a, 0.0));
    for (int k = 1; k <= 20; ++k) {
      a *= 2.0;
      CMatrix cur = scaled_W(a).partialPivLu().solve(scaled_Z(a, 0.0));
      if ((cur - prev).cwiseAbs().maxCoeff() < 1e-8) {
        doublings_ = k;
        return cur.real();
      }
      prev = cur;
    }
    throw NumericalError("C_inf did not converge after 20 doublings");
  }

  RegimeModel model_;
  double q_;
  RootSystem rs_;
  int n_ = 0, dim_ = 0;
  std::vector<CMatrix> residues_;
  CMatrix hp_inv_;
  CMatrix vp_inv_;
  CMatrix qq_;
  Matrix c_inf_;
  int doublings_ = 0;
};

// W by Euler-summation inversion of (F(s) - qI)^{-1} on the line Re s > Phi(q).
// Independent of the root machinery: the transform is evaluated directly.
inline Matrix w_matrix_inversion(const RegimeModel& m, double q, double x, double rel_tol = 1e-8) {
  const int n = m.n_states();
  if (x < 0) return Matrix::Zero(n, n);
  if (x == 0) return m.premiums.cwiseInverse().asDiagonal();
  // The transform converges right of every root of det(F - q), which can lie
  // beyond phi(q) when premiums differ.
  double sigma = phi_of_q(m, q);
  for (const auto& r : exponent_roots(m, q)) sigma = std::max(sigma, r.lambda.real());
  auto transform = [&](Complex s) -> CMatrix {
    CMatrix f = matrix_exponent(m, s) - Complex(q, 0.0) * CMatrix::Identity(n, n);
    return f.partialPivLu().inverse();
  };
  numeric::EulerParams coarse;
  coarse.shift = sigma;
  numeric::EulerParams fine = coarse;
  fine.a = 22.0;
  fine.terms = 45;
  fine.levels = 12;
  Matrix w1 = numeric::euler_invert(transform, x, coarse);
  Matrix w2 = numeric::euler_invert(transform, x, fine);
  const double scale = std::max(w2.cwiseAbs().maxCoeff(), 1e-300);
  const double diff = (w1 - w2).cwiseAbs().maxCoeff() / scale;
  if (!(diff < 100 * rel_tol))
    throw NumericalError("Laplace inversion of W did not converge at x = " + std::to_string(x) +
                         " (relative change " + std::to_string(diff) + ")");
  return w2;
}

inline Matrix w_matrix(const RegimeModel& m, double q, double x, ScaleMethod method = ScaleMethod::spectral) {
  if (method == ScaleMethod::laplace_inversion) return w_matrix_inversion(m, q, x);
  return ScaleEngine(m, q).W(x);
}

inline Matrix g_matrix(const RegimeModel& m, double q) { return ScaleEngine(m, q).G(); }
inline Matrix r_matrix(const RegimeModel& m, double q) { return ScaleEngine(m, q).R(); }
inline Matrix c_infinity(const RegimeModel& m, double q) { return ScaleEngine(m, q).c_infinity(); }

inline Matrix z_matrix(const RegimeModel& m, double q, double x, double alpha = 0.0) {
  return ScaleEngine(m, q).Z(x, alpha);
}

// Z by composite Gauss-Legendre quadrature of a supplied W, panels doubled
// until the relative change is below rel_tol.
inline Matrix z_matrix_quadrature(const RegimeModel& m, double q, double x, double alpha,
                                  const std::function<Matrix(double)>& w, double rel_tol = 1e-8) {
  const int n = m.n_states();
  if (x <= 0) return Matrix::Identity(n, n);
  static const numeric::GaussLegendreRule rule = numeric::gauss_legendre(16);
  auto integral = [&](int panels) {
    Matrix s = Matrix::Zero(n, n);
    const double h = x / panels;
    for (int p = 0; p < panels; ++p) {
      s += numeric::integrate_fixed([&](double y) -> Matrix { return std::exp(-alpha * y) * w(y); }, p * h,
                                    (p + 1) * h, rule);
    }
    return s;
  };
  Matrix prev = integral(2);
  for (int panels = 4; panels <= 4096; panels *= 2) {
    Matrix cur = integral(panels);
    const double scale = std::max(cur.cwiseAbs().maxCoeff(), 1e-300);
    if ((cur - prev).cwiseAbs().maxCoeff() / scale < rel_tol) {
      prev = cur;
      break;
    }
    prev = cur;
  }
  const Matrix fq = matrix_exponent(m, alpha) - q * Matrix::Identity(n, n);
  return std::exp(alpha * x) * (Matrix::Identity(n, n) - prev * fq);
}

inline Matrix potential_density(const RegimeModel& m, double q, double x, double z) {
  Matrix u = ScaleEngine(m, q).potential_density(x, z);
  return u.cwiseMax(0.0);
}

inline Matrix exit_upward(const RegimeModel& m, double q, double x, double a) {
  return ScaleEngine(m, q).exit_upward(x, a);
}

inline Matrix exit_downward(const RegimeModel& m, double q, double x, double a, double alpha) {
  return ScaleEngine(m, q).exit_downward(x, a, alpha);
}

struct ScaleSet {
  double q = 0.0;
  std::vector<double> grid;
  std::vector<Matrix> w;
  std::vector<Matrix> z;
  Matrix g, r, c_inf;
  ScaleMethod method = ScaleMethod::spectral;
};

inline double default_extent(const RegimeModel& m) {
  double mx = 0.0;
  for (auto* law : m.active_laws()) mx = std::max(mx, law->mean());
  return mx > 0 ? 10.0 * mx : 10.0;
}

inline ScaleSet build_scale_set(const RegimeModel& m, double q, double step = 0.01, double extent = -1.0,
                                ScaleMethod method = ScaleMethod::spectral) {
  if (!(step > 0)) throw InputError("grid step must be positive");
  if (extent < 0) extent = default_extent(m);
  ScaleEngine eng(m, q);
  ScaleSet set;
  set.q = q;
  set.method = method;
  set.g = eng.G();
  set.r = eng.R();
  set.c_inf = eng.c_infinity();
  const int points = static_cast<int>(std::floor(extent / step + 1e-9)) + 1;
  for (int i = 0; i < points; ++i) {
    const double x = i * step;
    set.grid.push_back(x);
    if (method == ScaleMethod::spectral) {
      set.w.push_back(eng.W(x));
      set.z.push_back(eng.Z(x));
    } else {
      set.w.push_back(w_matrix_inversion(m, q, x));
      set.z.push_back(z_matrix_quadrature(m, q, x, 0.0, [&](double y) { return w_matrix_inversion(m, q, y); }));
    }
  }
  return set;
}

}  // namespace mmrisk
