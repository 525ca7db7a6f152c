#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "core.hpp"
#include "numeric.hpp"

namespace mmrisk {

enum class Family { degenerate, exponential, erlang, hyperexponential, phase_type, pareto, weibull, lognormal };

inline const std::vector<std::string>& supported_families() {
  static const std::vector<std::string> names = {"degenerate", "exponential", "erlang", "hyperexponential",
                                                 "phase_type", "pareto",      "weibull", "lognormal"};
  return names;
}

inline std::string family_name(Family f) { return supported_families()[static_cast<int>(f)]; }

// Phase-type representation: initial vector over transient phases, sub-generator,
// exit-rate vector, and the mass at zero (1 - sum of the initial vector).
struct PhaseRep {
  RowVector alpha;
  Matrix generator;
  Vector exit;
  double atom = 1.0;

  int phases() const { return static_cast<int>(alpha.size()); }
};

// Nonnegative claim-size distribution. Light-tailed families carry a
// phase-type representation; the heavy-tailed ones are handled directly.
class ClaimLaw {
 public:
  static ClaimLaw degenerate() {
    ClaimLaw law(Family::degenerate, {});
    law.ph_.alpha = RowVector(0);
    law.ph_.generator = Matrix(0, 0);
    law.ph_.exit = Vector(0);
    law.ph_.atom = 1.0;
    return law;
  }

  static ClaimLaw exponential(double rate) {
    require(rate > 0 && std::isfinite(rate), "exponential rate must be positive");
    ClaimLaw law(Family::exponential, {rate});
    law.ph_.alpha = RowVector::Ones(1);
    law.ph_.generator = Matrix::Constant(1, 1, -rate);
    law.ph_.exit = Vector::Constant(1, rate);
    law.ph_.atom = 0.0;
    return law;
  }

  static ClaimLaw erlang(int shape, double rate) {
    require(shape >= 1, "erlang shape must be a positive integer");
    require(rate > 0 && std::isfinite(rate), "erlang rate must be positive");
    ClaimLaw law(Family::erlang, {static_cast<double>(shape), rate});
    law.ph_.alpha = RowVector::Zero(shape);
    law.ph_.alpha(0) = 1.0;
    law.ph_.generator = Matrix::Zero(shape, shape);
    for (int i = 0; i < shape; ++i) {
      law.ph_.generator(i, i) = -rate;
      if (i + 1 < shape) law.ph_.generator(i, i + 1) = rate;
    }
    law.ph_.exit = Vector::Zero(shape);
    law.ph_.exit(shape - 1) = rate;
    law.ph_.atom = 0.0;
    return law;
  }

  static ClaimLaw hyperexponential(const std::vector<double>& probs, const std::vector<double>& rates) {
    require(!probs.empty() && probs.size() == rates.size(), "hyperexponential needs matching probs and rates");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      require(probs[i] >= 0, "hyperexponential probabilities must be nonnegative");
      require(rates[i] > 0 && std::isfinite(rates[i]), "hyperexponential rates must be positive");
      total += probs[i];
    }
    require(std::abs(total - 1.0) < 1e-10, "hyperexponential probabilities must sum to 1");
    std::vector<double> prm = probs;
    prm.insert(prm.end(), rates.begin(), rates.end());
    ClaimLaw law(Family::hyperexponential, prm);
    const int m = static_cast<int>(probs.size());
    law.ph_.alpha = RowVector(m);
    law.ph_.generator = Matrix::Zero(m, m);
    law.ph_.exit = Vector(m);
    for (int i = 0; i < m; ++i) {
      law.ph_.alpha(i) = probs[i];
      law.ph_.generator(i, i) = -rates[i];
      law.ph_.exit(i) = rates[i];
    }
    law.ph_.atom = 0.0;
    return law;
  }

  static ClaimLaw phase_type(const RowVector& alpha, const Matrix& generator) {
    const int m = static_cast<int>(alpha.size());
    require(m >= 1 && generator.rows() == m && generator.cols() == m, "phase_type needs alpha of length m and an m x m generator");
    require((alpha.array() >= 0).all(), "phase_type initial vector must be nonnegative");
    require(alpha.sum() <= 1.0 + 1e-12, "phase_type initial vector must sum to at most 1");
    Vector exit = -generator.rowwise().sum();
    for (int i = 0; i < m; ++i) {
      require(generator(i, i) < 0, "phase_type generator diagonal must be negative");
      for (int j = 0; j < m; ++j)
        if (i != j) require(generator(i, j) >= 0, "phase_type generator off-diagonal must be nonnegative");
      require(exit(i) >= -1e-12, "phase_type generator rows must sum to at most 0");
      exit(i) = std::max(exit(i), 0.0);
    }
    Eigen::ComplexEigenSolver<Matrix> es(generator, false);
    require(es.eigenvalues().real().maxCoeff() < 0, "phase_type generator must be nonsingular (transient phases)");
    std::vector<double> prm(alpha.data(), alpha.data() + m);
    prm.insert(prm.end(), generator.data(), generator.data() + m * m);
    ClaimLaw law(Family::phase_type, prm);
    law.ph_.alpha = alpha;
    law.ph_.generator = generator;
    law.ph_.exit = exit;
    law.ph_.atom = std::max(0.0, 1.0 - alpha.sum());
    return law;
  }

  // Tail (1 + x/scale)^(-shape).
  static ClaimLaw pareto(double shape, double scale) {
    require(shape > 0 && scale > 0, "pareto shape and scale must be positive");
    return ClaimLaw(Family::pareto, {shape, scale});
  }

  // Tail exp(-(x/scale)^shape).
  static ClaimLaw weibull(double shape, double scale) {
    require(shape > 0 && scale > 0, "weibull shape and scale must be positive");
    return ClaimLaw(Family::weibull, {shape, scale});
  }

  // log C ~ Normal(mu, sigma^2).
  static ClaimLaw lognormal(double mu, double sigma) {
    require(std::isfinite(mu) && sigma > 0, "lognormal needs finite mu and positive sigma");
    return ClaimLaw(Family::lognormal, {mu, sigma});
  }

  Family family() const { return family_; }
  std::string name() const { return family_name(family_); }
  const std::vector<double>& parameters() const { return params_; }

  bool has_mgf() const { return family_ <= Family::phase_type; }
  bool closed_under_tilting() const { return has_mgf(); }
  bool is_null() const { return has_mgf() && ph_.atom >= 1.0 - 1e-15; }
  bool absolutely_continuous() const { return !has_mgf() || ph_.atom == 0.0; }

  // Requires has_mgf().
  const PhaseRep& phase_rep() const {
    if (!has_mgf()) throw DomainError(name() + " law has no phase-type representation");
    return ph_;
  }

  // Supremum of the real arguments where E e^{theta C} is finite.
  double mgf_abscissa() const {
    if (!has_mgf()) return 0.0;
    if (ph_.phases() == 0) return kInf;
    switch (family_) {
      case Family::exponential: return params_[0];
      case Family::erlang: return params_[1];
      case Family::hyperexponential: {
        double m = kInf;
        const int k = ph_.phases();
        for (int i = 0; i < k; ++i)
          if (ph_.alpha(i) > 0) m = std::min(m, params_[k + i]);
        return m;
      }
      default: {
        Eigen::ComplexEigenSolver<Matrix> es(ph_.generator, false);
        return -es.eigenvalues().real().maxCoeff();
      }
    }
  }

  double atom() const { return has_mgf() ? ph_.atom : 0.0; }

  double mean() const {
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return 1.0 / params_[0];
      case Family::erlang: return params_[0] / params_[1];
      case Family::pareto: return params_[0] > 1 ? params_[1] / (params_[0] - 1.0) : kInf;
      case Family::weibull: return params_[1] * std::tgamma(1.0 + 1.0 / params_[0]);
      case Family::lognormal: return std::exp(params_[0] + 0.5 * params_[1] * params_[1]);
      default: return -(ph_.alpha * ph_.generator.partialPivLu().solve(Vector::Ones(ph_.phases())))(0);
    }
  }

  double tail(double x) const {
    if (x < 0) return 1.0;
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return std::exp(-params_[0] * x);
      case Family::hyperexponential: {
        const int k = ph_.phases();
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += params_[i] * std::exp(-params_[k + i] * x);
        return s;
      }
      case Family::pareto: return std::pow(1.0 + x / params_[1], -params_[0]);
      case Family::weibull: return std::exp(-std::pow(x / params_[1], params_[0]));
      case Family::lognormal:
        return x == 0 ? 1.0 : numeric::normal_cdf(-(std::log(x) - params_[0]) / params_[1]);
      default: return (ph_.alpha * expm(x) * Vector::Ones(ph_.phases()))(0);
    }
  }

  double cdf(double x) const { return x < 0 ? 0.0 : 1.0 - tail(x); }

  // Density of the absolutely continuous part, x > 0.
  double density(double x) const {
    if (x < 0) return 0.0;
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return params_[0] * std::exp(-params_[0] * x);
      case Family::hyperexponential: {
        const int k = ph_.phases();
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += params_[i] * params_[k + i] * std::exp(-params_[k + i] * x);
        return s;
      }
      case Family::pareto: return params_[0] / params_[1] * std::pow(1.0 + x / params_[1], -params_[0] - 1.0);
      case Family::weibull: {
        const double k = params_[0], eta = params_[1];
        if (x == 0) return k < 1 ? kInf : (k == 1 ? 1.0 / eta : 0.0);
        return k / eta * std::pow(x / eta, k - 1.0) * std::exp(-std::pow(x / eta, k));
      }
      case Family::lognormal: {
        if (x == 0) return 0.0;
        const double z = (std::log(x) - params_[0]) / params_[1];
        return std::exp(-0.5 * z * z) / (x * params_[1] * std::sqrt(2.0 * std::numbers::pi));
      }
      default: return (ph_.alpha * expm(x) * ph_.exit)(0);
    }
  }

  // Unclamped integral of the tail over [x, inf).
  double tail_integral(double x) const {
    if (x < 0) return mean() - x;
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return std::exp(-params_[0] * x) / params_[0];
      case Family::hyperexponential: {
        const int k = ph_.phases();
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += params_[i] * std::exp(-params_[k + i] * x) / params_[k + i];
        return s;
      }
      case Family::pareto: {
        const double a = params_[0], b = params_[1];
        if (a <= 1) return kInf;
        return b / (a - 1.0) * std::pow(1.0 + x / b, 1.0 - a);
      }
      case Family::weibull: {
        const double k = params_[0], eta = params_[1];
        return eta * std::tgamma(1.0 + 1.0 / k) * boost::math::gamma_q(1.0 / k, std::pow(x / eta, k));
      }
      case Family::lognormal: {
        const double mu = params_[0], s = params_[1];
        if (x == 0) return mean();
        const double lx = std::log(x);
        return mean() * numeric::normal_cdf((mu + s * s - lx) / s) - x * numeric::normal_cdf((mu - lx) / s);
      }
      default: {
        const Vector ones = Vector::Ones(ph_.phases());
        return -(ph_.alpha * ph_.generator.partialPivLu().solve(expm(x) * ones))(0);
      }
    }
  }

  // min(1, integral of the tail over [x, inf)).
  double integrated_tail(double x) const {
    const double m = mean();
    if (!std::isfinite(m)) throw DomainError(name() + " law has infinite mean; integrated tail undefined");
    return std::min(1.0, tail_integral(x));
  }

  // Stationary-excess (equilibrium) distribution function.
  double equilibrium_cdf(double x) const {
    const double m = mean();
    if (!std::isfinite(m)) throw DomainError(name() + " law has infinite mean");
    if (m == 0) return 1.0;
    if (x <= 0) return 0.0;
    return std::clamp(1.0 - tail_integral(x) / m, 0.0, 1.0);
  }

  // E e^{-sC}.
  Complex transform(Complex s) const {
    check_domain(s);
    if (s == Complex(0.0)) return 1.0;
    switch (family_) {
      case Family::degenerate: return 1.0;
      case Family::exponential: return params_[0] / (params_[0] + s);
      case Family::erlang: return std::pow(params_[1] / (params_[1] + s), static_cast<int>(params_[0]));
      case Family::hyperexponential: {
        const int k = ph_.phases();
        Complex r = 0.0;
        for (int i = 0; i < k; ++i) r += params_[i] * params_[k + i] / (params_[k + i] + s);
        return r;
      }
      case Family::phase_type: {
        const int m = ph_.phases();
        CMatrix a = s * CMatrix::Identity(m, m) - ph_.generator.cast<Complex>();
        CVector sol = a.partialPivLu().solve(ph_.exit.cast<Complex>());
        return (ph_.alpha.cast<Complex>() * sol)(0) + ph_.atom;
      }
      default: {
        // Integration by parts: 1 - s * int e^{-sx} tail(x) dx.
        auto f = [&](double x) -> Complex { return std::exp(-s * x) * tail(x); };
        auto r = numeric::integrate_to_infinity(f, 0.0, 1e-14, 1e-11);
        return 1.0 - s * r.value;
      }
    }
  }

  // d/ds E e^{-sC} = -E[C e^{-sC}].
  Complex transform_derivative(Complex s) const {
    check_domain(s);
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return -params_[0] / ((params_[0] + s) * (params_[0] + s));
      case Family::erlang: {
        const double k = params_[0], mu = params_[1];
        return -k / (mu + s) * std::pow(mu / (mu + s), static_cast<int>(k));
      }
      case Family::hyperexponential: {
        const int k = ph_.phases();
        Complex r = 0.0;
        for (int i = 0; i < k; ++i) r -= params_[i] * params_[k + i] / ((params_[k + i] + s) * (params_[k + i] + s));
        return r;
      }
      case Family::phase_type: {
        const int m = ph_.phases();
        CMatrix a = s * CMatrix::Identity(m, m) - ph_.generator.cast<Complex>();
        auto lu = a.partialPivLu();
        CVector sol = lu.solve(lu.solve(ph_.exit.cast<Complex>()));
        return -(ph_.alpha.cast<Complex>() * sol)(0);
      }
      default: {
        if (!std::isfinite(mean())) throw DomainError(name() + " law has infinite mean");
        auto f = [&](double x) -> Complex { return (1.0 - s * x) * std::exp(-s * x) * tail(x); };
        auto r = numeric::integrate_to_infinity(f, 0.0, 1e-14, 1e-11);
        return -r.value;
      }
    }
  }

  // E e^{theta C} for real theta below the abscissa.
  double mgf(double theta) const { return transform(Complex(-theta, 0.0)).real(); }

  // Law with density proportional to e^{theta x} dF(x).
  ClaimLaw tilted(double theta) const {
    if (!closed_under_tilting()) throw DomainError(name() + " law is not closed under exponential tilting");
    if (theta >= mgf_abscissa()) throw DomainError("tilt parameter beyond the moment generating abscissa");
    if (theta == 0.0) return *this;
    switch (family_) {
      case Family::degenerate: return *this;
      case Family::exponential: return exponential(params_[0] - theta);
      case Family::erlang: return erlang(static_cast<int>(params_[0]), params_[1] - theta);
      case Family::hyperexponential: {
        const int k = ph_.phases();
        std::vector<double> p(k), r(k);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
          p[i] = params_[i] * params_[k + i] / (params_[k + i] - theta);
          r[i] = params_[k + i] - theta;
          total += p[i];
        }
        for (auto& v : p) v /= total;
        return hyperexponential(p, r);
      }
      default: {
        const int m = ph_.phases();
        Matrix shifted = ph_.generator + theta * Matrix::Identity(m, m);
        Vector v = -shifted.partialPivLu().solve(ph_.exit);
        const double total = ph_.alpha.dot(v) + ph_.atom;
        RowVector a = ph_.alpha.cwiseProduct(v.transpose()) / total;
        Matrix t = v.cwiseInverse().asDiagonal() * shifted * v.asDiagonal();
        return phase_type(a, t);
      }
    }
  }

  // Smallest x with tail(x) <= eps.
  double upper_quantile(double eps) const {
    if (!(eps > 0 && eps < 1)) throw InputError("upper_quantile needs eps in (0,1)");
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return -std::log(eps) / params_[0];
      case Family::pareto: return params_[1] * (std::pow(eps, -1.0 / params_[0]) - 1.0);
      case Family::weibull: return params_[1] * std::pow(-std::log(eps), 1.0 / params_[0]);
      case Family::lognormal:
        return std::exp(params_[0] + params_[1] * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * eps));
      default:
        if (ph_.atom >= 1.0 - eps) return 0.0;
        return numeric::first_crossing([&](double x) { return tail(x) <= eps; }, std::max(mean(), 1e-6), 1e-12);
    }
  }

  // ∫_0^∞ e^{-a y} f(z + y) dy, the exponential-penalty kernel.
  double exp_kernel(double a, double z) const {
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return params_[0] * std::exp(-params_[0] * z) / (params_[0] + a);
      case Family::pareto:
      case Family::weibull:
      case Family::lognormal: {
        auto f = [&](double y) { return std::exp(-a * y) * density(z + y); };
        return numeric::integrate_to_infinity(f, 0.0, 1e-15, 1e-11).value;
      }
      default: {
        const int m = ph_.phases();
        Vector r = (a * Matrix::Identity(m, m) - ph_.generator).partialPivLu().solve(ph_.exit);
        return (ph_.alpha * expm(z) * r)(0);
      }
    }
  }

  // Draw one claim; `uniform` returns doubles in (0,1).
  template <class U>
  double sample(U& uniform) const {
    switch (family_) {
      case Family::degenerate: return 0.0;
      case Family::exponential: return -std::log(uniform()) / params_[0];
      case Family::erlang: {
        double s = 0.0;
        for (int i = 0; i < static_cast<int>(params_[0]); ++i) s -= std::log(uniform());
        return s / params_[1];
      }
      case Family::hyperexponential: {
        const int k = ph_.phases();
        double u = uniform(), acc = 0.0;
        int pick = k - 1;
        for (int i = 0; i < k; ++i) {
          acc += params_[i];
          if (u < acc) {
            pick = i;
            break;
          }
        }
        return -std::log(uniform()) / params_[k + pick];
      }
      case Family::pareto: return params_[1] * (std::pow(uniform(), -1.0 / params_[0]) - 1.0);
      case Family::weibull: return params_[1] * std::pow(-std::log(uniform()), 1.0 / params_[0]);
      case Family::lognormal: {
        const double z = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * uniform());
        return std::exp(params_[0] + params_[1] * z);
      }
      default: return sample_phase_chain(uniform);
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << name() << "(";
    for (std::size_t i = 0; i < params_.size(); ++i) os << (i ? ", " : "") << params_[i];
    os << ")";
    return os.str();
  }

 private:
  ClaimLaw(Family f, std::vector<double> prm) : family_(f), params_(std::move(prm)) {}

  static void require(bool ok, const std::string& msg) {
    if (!ok) throw InputError(msg);
  }

  Matrix expm(double x) const { return (ph_.generator * x).exp(); }

  void check_domain(Complex s) const {
    if (has_mgf()) {
      if (s.real() <= -mgf_abscissa()) throw DomainError("transform argument beyond the abscissa of " + describe());
    } else if (s.real() < 0) {
      throw DomainError("heavy-tailed " + describe() + " has no transform for negative real part");
    }
  }

  template <class U>
  double sample_phase_chain(U& uniform) const {
    const int m = ph_.phases();
    double u = uniform(), acc = 0.0;
    int phase = -1;
    for (int i = 0; i < m; ++i) {
      acc += ph_.alpha(i);
      if (u < acc) {
        phase = i;
        break;
      }
    }
    double total = 0.0;
    while (phase >= 0) {
      const double rate = -ph_.generator(phase, phase);
      total -= std::log(uniform()) / rate;
      double v = uniform() * rate, c = 0.0;
      int next = -1;
      for (int j = 0; j < m; ++j) {
        if (j == phase) continue;
        c += ph_.generator(phase, j);
        if (v < c) {
          next = j;
          break;
        }
      }
      phase = next;
    }
    return total;
  }

  Family family_;
  std::vector<double> params_;
  PhaseRep ph_;
};

}  // namespace mmrisk
