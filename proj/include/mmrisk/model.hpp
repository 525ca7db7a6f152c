#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "claim_law.hpp"
#include "core.hpp"

namespace mmrisk {

// Markov-modulated risk process: premiums p_i, Poisson claim rates lambda_i
// with claim laws per state, and optional claims at regime switches.
struct RegimeModel {
  Matrix q_matrix;
  Vector premiums;
  Vector arrival_rates;
  std::vector<std::optional<ClaimLaw>> state_claims;
  std::vector<std::vector<std::optional<ClaimLaw>>> transition_claims;

  int n_states() const { return static_cast<int>(premiums.size()); }

  const ClaimLaw& state_claim(int i) const {
    static const ClaimLaw null_law = ClaimLaw::degenerate();
    const auto& c = state_claims.at(i);
    return c ? *c : null_law;
  }

  const ClaimLaw& transition_claim(int i, int j) const {
    static const ClaimLaw null_law = ClaimLaw::degenerate();
    if (transition_claims.empty()) return null_law;
    const auto& c = transition_claims.at(i).at(j);
    return c ? *c : null_law;
  }

  // Laws that actually occur with positive rate.
  std::vector<const ClaimLaw*> active_laws() const {
    std::vector<const ClaimLaw*> out;
    const int n = n_states();
    for (int i = 0; i < n; ++i) {
      if (arrival_rates(i) > 0) out.push_back(&state_claim(i));
      for (int j = 0; j < n; ++j)
        if (j != i && q_matrix(i, j) > 0) out.push_back(&transition_claim(i, j));
    }
    return out;
  }

  bool light_tailed() const {
    for (auto* law : active_laws())
      if (!law->has_mgf()) return false;
    return true;
  }

  // Smallest moment generating abscissa over the active laws.
  double min_abscissa() const {
    double a = kInf;
    for (auto* law : active_laws()) a = std::min(a, law->mgf_abscissa());
    return a;
  }
};

inline RegimeModel single_state_model(double premium, double rate, const ClaimLaw& claims) {
  RegimeModel m;
  m.q_matrix = Matrix::Zero(1, 1);
  m.premiums = Vector::Constant(1, premium);
  m.arrival_rates = Vector::Constant(1, rate);
  m.state_claims = {claims};
  m.transition_claims = {{std::nullopt}};
  return m;
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

inline ValidationReport check_model(const RegimeModel& m) {
  ValidationReport r;
  const int n = m.n_states();
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  };
  if (n < 1) {
    r.errors.push_back("model needs at least one state");
    return r;
  }
  if (m.q_matrix.rows() != n || m.q_matrix.cols() != n)
    r.errors.push_back("q_matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  if (m.arrival_rates.size() != n) r.errors.push_back("arrival_rates must have " + std::to_string(n) + " entries");
  if (static_cast<int>(m.state_claims.size()) != n)
    r.errors.push_back("state_claims must have " + std::to_string(n) + " entries");
  if (!m.transition_claims.empty()) {
    bool shape_ok = static_cast<int>(m.transition_claims.size()) == n;
    for (const auto& row : m.transition_claims) shape_ok = shape_ok && static_cast<int>(row.size()) == n;
    if (!shape_ok) r.errors.push_back("transition_claims must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!r.ok()) return r;

  for (int i = 0; i < n; ++i) {
    const std::string row = std::to_string(i + 1);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = m.q_matrix(i, j);
      if (!std::isfinite(v)) r.errors.push_back("q_matrix entry (" + row + "," + std::to_string(j + 1) + ") is not finite");
      if (i != j && v < 0)
        r.errors.push_back("q_matrix entry (" + row + "," + std::to_string(j + 1) + ") is negative: " + fmt(v));
      sum += v;
    }
    if (std::abs(sum) > 1e-12) r.errors.push_back("row " + row + " sums to " + fmt(sum));
    if (!(m.premiums(i) > 0) || !std::isfinite(m.premiums(i)))
      r.errors.push_back("premium " + row + " must be positive");
    if (!(m.arrival_rates(i) >= 0) || !std::isfinite(m.arrival_rates(i)))
      r.errors.push_back("arrival rate " + row + " must be nonnegative");
    if (m.arrival_rates(i) > 0) {
      if (!m.state_claims[i]) r.errors.push_back("state " + row + " has arrival rate > 0 but no claim law");
      else if (m.state_claims[i]->is_null()) r.warnings.push_back("state " + row + " claims are null");
    }
    if (!m.transition_claims.empty() && m.transition_claims[i][i])
      r.errors.push_back("transition claim on the diagonal (" + row + "," + row + ") is not allowed");
  }
  for (auto* law : m.active_laws()) {
    if (!std::isfinite(law->mean())) r.errors.push_back(law->describe() + " has infinite mean");
  }
  return r;
}

// Returns the model when valid, otherwise throws with every violation listed.
inline const RegimeModel& validate_model(const RegimeModel& m) {
  auto r = check_model(m);
  if (!r.ok()) {
    std::string msg = "invalid model:";
    for (const auto& e : r.errors) msg += " " + e + ";";
    throw InputError(msg, r.errors);
  }
  return m;
}

// Communicating classes of the chain with intensity matrix q.
inline std::vector<std::vector<int>> communicating_classes(const Matrix& q) {
  const int n = static_cast<int>(q.rows());
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (int j = 0; j < n; ++j)
      if (i != j && q(i, j) > 0) reach[i][j] = true;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (reach[i][k])
        for (int j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = true;
  std::vector<int> cls(n, -1);
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) {
    if (cls[i] >= 0) continue;
    out.emplace_back();
    for (int j = 0; j < n; ++j)
      if (reach[i][j] && reach[j][i]) {
        cls[j] = static_cast<int>(out.size()) - 1;
        out.back().push_back(j);
      }
  }
  return out;
}

inline RowVector stationary_distribution(const Matrix& q) {
  const int n = static_cast<int>(q.rows());
  auto classes = communicating_classes(q);
  if (classes.size() > 1) {
    std::string msg = "q_matrix is reducible; communicating classes:";
    for (const auto& c : classes) {
      msg += " {";
      for (std::size_t k = 0; k < c.size(); ++k) msg += (k ? "," : "") + std::to_string(c[k] + 1);
      msg += "}";
    }
    throw InputError(msg);
  }
  Matrix a = q.transpose();
  a.row(n - 1).setOnes();
  Vector b = Vector::Zero(n);
  b(n - 1) = 1.0;
  Vector pi = a.fullPivLu().solve(b);
  return pi.transpose();
}

struct DriftReport {
  Vector per_state;           // E_i X_1
  Vector rate;                // instantaneous mean rate per state
  double stationary = 0.0;    // k'(0)
  RowVector pi;
  std::vector<bool> state_positive;
  bool per_state_net_profit = false;
  bool stationary_net_profit = false;
};

// Mean growth rate p_i - lambda_i E C_i - sum_j q_ij E C_ij for each state.
inline Vector drift_rates(const RegimeModel& m) {
  const int n = m.n_states();
  Vector r(n);
  for (int i = 0; i < n; ++i) {
    double v = m.premiums(i);
    if (m.arrival_rates(i) > 0) {
      const double mc = m.state_claim(i).mean();
      if (!std::isfinite(mc)) throw InputError(m.state_claim(i).describe() + " has infinite mean");
      v -= m.arrival_rates(i) * mc;
    }
    for (int j = 0; j < n; ++j) {
      if (j == i || m.q_matrix(i, j) <= 0) continue;
      const double mc = m.transition_claim(i, j).mean();
      if (!std::isfinite(mc)) throw InputError(m.transition_claim(i, j).describe() + " has infinite mean");
      v -= m.q_matrix(i, j) * mc;
    }
    r(i) = v;
  }
  return r;
}

// E_i X_t - x = [∫_0^t e^{Qs} ds r]_i via one augmented matrix exponential.
inline Vector expected_increment(const RegimeModel& m, double t) {
  const int n = m.n_states();
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = m.q_matrix * t;
  aug.topRightCorner(n, 1) = drift_rates(m) * t;
  Matrix e = aug.exp();
  return e.topRightCorner(n, 1);
}

inline DriftReport drift_report(const RegimeModel& m) {
  DriftReport d;
  d.rate = drift_rates(m);
  d.pi = stationary_distribution(m.q_matrix);
  d.stationary = d.pi.dot(d.rate);
  d.per_state = expected_increment(m, 1.0);
  d.per_state_net_profit = true;
  for (int i = 0; i < m.n_states(); ++i) {
    d.state_positive.push_back(d.per_state(i) > 0);
    d.per_state_net_profit = d.per_state_net_profit && d.per_state(i) > 0;
  }
  d.stationary_net_profit = d.stationary > 0;
  return d;
}

}  // namespace mmrisk
