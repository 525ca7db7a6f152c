#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <queue>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "core.hpp"

namespace mmrisk::numeric {

inline double max_abs(double v) { return std::abs(v); }
inline double max_abs(const Complex& v) { return std::abs(v); }
template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

template <class T>
T zero_like(const T& v) {
  if constexpr (std::is_arithmetic_v<T> || std::is_same_v<T, Complex>) {
    return T(0);
  } else {
    return T::Zero(v.rows(), v.cols());
  }
}

template <class T>
struct QuadResult {
  T value;
  double error = 0.0;
  int evaluations = 0;
  bool converged = true;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
auto gk15(F& f, double a, double b) {
  using T = std::decay_t<decltype(f(a))>;
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  T fc = f(c);
  T kron = fc * kKronrodWeights[7];
  T gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    T f1 = f(c - dx);
    T f2 = f(c + dx);
    T s = f1 + f2;
    kron = kron + s * kKronrodWeights[j];
    if (j % 2 == 1) gauss = gauss + s * kGaussWeights[j / 2];
  }
  T value = kron * h;
  T diff = (kron - gauss) * h;
  return std::pair<T, double>(std::move(value), max_abs(diff));
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod quadrature. Works for any value type with
// +, scalar *, and a max_abs overload (double, complex, Eigen matrices).
template <class F>
auto integrate(F&& f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-10,
               int max_segments = 4000) {
  using T = std::decay_t<decltype(f(a))>;
  QuadResult<T> out;
  if (a == b) {
    out.value = zero_like(f(a));
    return out;
  }
  struct Seg {
    double a, b;
    T value;
    double error;
  };
  auto cmp = [](const Seg& l, const Seg& r) { return l.error < r.error; };
  std::priority_queue<Seg, std::vector<Seg>, decltype(cmp)> heap(cmp);
  auto first = detail::gk15(f, a, b);
  out.evaluations = 15;
  T total = first.first;
  double total_err = first.second;
  heap.push(Seg{a, b, std::move(first.first), first.second});
  int segments = 1;
  while (total_err > std::max(abs_tol, rel_tol * max_abs(total))) {
    if (segments >= max_segments) {
      out.converged = false;
      break;
    }
    Seg worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      out.converged = false;
      heap.push(std::move(worst));
      break;
    }
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    out.evaluations += 30;
    total = total - worst.value + left.first + right.first;
    total_err += left.second + right.second - worst.error;
    heap.push(Seg{worst.a, mid, std::move(left.first), left.second});
    heap.push(Seg{mid, worst.b, std::move(right.first), right.second});
    ++segments;
  }
  // Re-sum from the pieces to drop accumulated cancellation in the running total.
  T sum = zero_like(total);
  double err = 0.0;
  while (!heap.empty()) {
    sum = sum + heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  out.value = std::move(sum);
  out.error = err;
  return out;
}

// Integral over [a, inf) through x = a + t/(1-t).
template <class F>
auto integrate_to_infinity(F&& f, double a, double abs_tol = 1e-12, double rel_tol = 1e-10,
                           int max_segments = 4000) {
  using T = std::decay_t<decltype(f(a))>;
  auto g = [&](double t) -> T {
    const double one_minus = 1.0 - t;
    if (one_minus <= 0.0) return zero_like(f(a));
    const double x = a + t / one_minus;
    return f(x) * (1.0 / (one_minus * one_minus));
  };
  return integrate(g, 0.0, 1.0, abs_tol, rel_tol, max_segments);
}

struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Nodes and weights on [-1, 1] by Newton iteration on P_n.
inline GaussLegendreRule gauss_legendre(int n) {
  if (n < 1) throw InputError("gauss_legendre: need at least one node");
  if (n == 1) return {{0.0}, {2.0}};
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

// Fixed Gauss-Legendre rule mapped to [a, b].
template <class F>
auto integrate_fixed(F&& f, double a, double b, const GaussLegendreRule& rule) {
  using T = std::decay_t<decltype(f(a))>;
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  T sum = zero_like(f(c));
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    sum = sum + f(c + h * rule.nodes[k]) * (h * rule.weights[k]);
  }
  return sum;
}

struct EulerParams {
  double a = 18.4;   // contour abscissa parameter; discretisation error ~ e^{-a}
  int terms = 30;    // terms before averaging
  int levels = 10;   // binomial averaging levels
  double shift = 0;  // Bromwich line moved right by this amount
};

inline double real_part(const Complex& z) { return z.real(); }
inline Matrix real_part(const CMatrix& m) { return m.real(); }

// Abate-Whitt Euler summation of the Bromwich integral. `transform` maps a
// complex argument to a Complex or a CMatrix.
template <class F>
auto euler_invert(F&& transform, double t, const EulerParams& prm = {}) {
  using T = std::decay_t<decltype(transform(Complex{}))>;
  using R = std::decay_t<decltype(real_part(std::declval<T>()))>;
  if (!(t > 0.0)) throw DomainError("euler_invert: t must be positive");
  const int total = prm.terms + prm.levels;
  const double base = prm.a / (2.0 * t);
  std::vector<R> partial;
  partial.reserve(total + 1);
  R acc = real_part(transform(Complex(base + prm.shift, 0.0))) * 0.5;
  partial.push_back(acc);
  for (int k = 1; k <= total; ++k) {
    const Complex s(base + prm.shift, std::numbers::pi * k / t);
    R term = real_part(transform(s));
    acc = acc + term * ((k % 2 == 0) ? 1.0 : -1.0);
    partial.push_back(acc);
  }
  R result = partial[prm.terms] * 0.0;
  double binom = 1.0;
  const double scale = std::pow(2.0, -prm.levels);
  for (int j = 0; j <= prm.levels; ++j) {
    result = result + partial[prm.terms + j] * (binom * scale);
    binom = binom * (prm.levels - j) / (j + 1);
  }
  const double factor = std::exp(prm.a / 2.0 + prm.shift * t) / t;
  return R(result * factor);
}

// Root of a scalar function on a sign-changing bracket.
template <class F>
double find_root(F&& f, double lo, double hi, double x_tol = 1e-14, int max_iter = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) throw NumericalError("find_root: bracket has no sign change");
  std::uintmax_t iters = max_iter;
  auto tol = [x_tol](double a, double b) { return std::abs(b - a) <= x_tol * std::max(1.0, std::abs(a)); };
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Doubling search for the first point where pred holds, then bisection.
template <class P>
double first_crossing(P&& pred, double start, double tol = 1e-10, int max_doublings = 200) {
  double lo = 0.0, hi = std::max(start, 1e-12);
  int k = 0;
  while (!pred(hi)) {
    lo = hi;
    hi *= 2.0;
    if (++k > max_doublings) throw NumericalError("first_crossing: no crossing found");
  }
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid)) hi = mid; else lo = mid;
  }
  return hi;
}

}  // namespace mmrisk::numeric
