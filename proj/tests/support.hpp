#pragma once

#include <cmath>
#include <string>

#include <catch_amalgamated.hpp>

#include "mmrisk/mmrisk.hpp"

namespace testing {

inline std::string source_path(const std::string& rel) { return std::string(MMRISK_SOURCE_DIR) + "/" + rel; }

inline mmrisk::RegimeModel model_file(const std::string& name) { return mmrisk::load_model(source_path("models/" + name)); }

inline mmrisk::RegimeModel model_a() { return mmrisk::single_state_model(1.0, 1.0, mmrisk::ClaimLaw::exponential(2.0)); }

inline mmrisk::RegimeModel model_b() {
  mmrisk::RegimeModel m;
  m.q_matrix = mmrisk::Matrix{{-1.0, 1.0}, {1.0, -1.0}};
  m.premiums = mmrisk::Vector{{2.0, 1.0}};
  m.arrival_rates = mmrisk::Vector{{1.0, 1.0}};
  m.state_claims = {mmrisk::ClaimLaw::exponential(1.0), mmrisk::ClaimLaw::exponential(1.0)};
  return m;
}

// Number of standard errors between an estimate and a reference value.
inline double z_score(const mmrisk::Estimate& e, double truth) {
  if (e.se == 0.0) return e.value == truth ? 0.0 : INFINITY;
  return std::abs(e.value - truth) / e.se;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing
