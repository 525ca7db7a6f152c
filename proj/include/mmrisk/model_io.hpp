#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "claim_law.hpp"
#include "core.hpp"
#include "model.hpp"

namespace mmrisk {

// Model files are YAML:
//
//   states: 2
//   q_matrix: [[-1, 1], [1, -1]]
//   premiums: [2, 1]
//   arrival_rates: [1, 1]
//   state_claims:
//     - {family: exponential, params: {rate: 1}}
//     - {family: exponential, params: {rate: 1}}
//   transition_claims:            # optional, absent pairs carry no claim
//     - {from: 1, to: 2, family: exponential, params: {rate: 3}}
//
// States are numbered from 1 in files and messages.
namespace io_detail {

struct Collector {
  std::string source;
  std::vector<std::string> errors;

  void add(const YAML::Node& at, const std::string& msg) {
    if (at.IsDefined() && at.Mark().line >= 0) errors.push_back(source + ":" + std::to_string(at.Mark().line + 1) + ": " + msg);
    else errors.push_back(source + ": " + msg);
  }
  void add(int line, const std::string& msg) {
    if (line >= 0) errors.push_back(source + ":" + std::to_string(line + 1) + ": " + msg);
    else errors.push_back(source + ": " + msg);
  }
};

inline std::optional<double> number(const YAML::Node& n, Collector& c, const std::string& what) {
  if (!n.IsScalar()) {
    c.add(n, what + " must be a number");
    return std::nullopt;
  }
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    c.add(n, what + " must be a number, got '" + n.Scalar() + "'");
    return std::nullopt;
  }
}

inline std::optional<std::vector<double>> numbers(const YAML::Node& n, Collector& c, const std::string& what) {
  if (!n.IsSequence()) {
    c.add(n, what + " must be a list of numbers");
    return std::nullopt;
  }
  std::vector<double> out;
  bool ok = true;
  for (std::size_t k = 0; k < n.size(); ++k) {
    auto v = number(n[k], c, what + " entry " + std::to_string(k + 1));
    if (v) out.push_back(*v);
    else ok = false;
  }
  if (!ok) return std::nullopt;
  return out;
}

inline std::string supported_list() {
  std::string s;
  for (const auto& f : supported_families()) s += (s.empty() ? "" : ", ") + f;
  return s;
}

inline std::optional<ClaimLaw> claim_law(const YAML::Node& n, Collector& c, const std::string& what) {
  if (!n.IsMap() || !n["family"]) {
    c.add(n, what + " must be a table with a 'family' key");
    return std::nullopt;
  }
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (key != "family" && key != "params" && key != "from" && key != "to") c.add(kv.first, what + ": unknown key '" + key + "'");
  }
  const std::string family = n["family"].as<std::string>();
  const YAML::Node params = n["params"] ? n["params"] : YAML::Node(YAML::NodeType::Map);
  if (!params.IsMap()) {
    c.add(params, what + ": params must be a table");
    return std::nullopt;
  }
  std::map<std::string, std::vector<std::string>> expected = {
      {"degenerate", {}},
      {"exponential", {"rate"}},
      {"erlang", {"shape", "rate"}},
      {"hyperexponential", {"probs", "rates"}},
      {"phase_type", {"alpha", "generator"}},
      {"pareto", {"shape", "scale"}},
      {"weibull", {"shape", "scale"}},
      {"lognormal", {"mu", "sigma"}},
  };
  const auto it = expected.find(family);
  if (it == expected.end()) {
    c.add(n["family"], what + ": unknown claim family '" + family + "'; supported families: " + supported_list());
    return std::nullopt;
  }
  const std::size_t before = c.errors.size();
  for (const auto& kv : params) {
    const auto key = kv.first.as<std::string>();
    if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
      c.add(kv.first, what + ": " + family + " has no parameter '" + key + "'");
  }
  for (const auto& key : it->second)
    if (!params[key]) c.add(n, what + ": " + family + " needs parameter '" + key + "'");
  if (c.errors.size() != before) return std::nullopt;
  auto scalar = [&](const std::string& k) { return number(params[k], c, what + " " + k); };
  try {
    if (family == "degenerate") return ClaimLaw::degenerate();
    if (family == "exponential") {
      auto r = scalar("rate");
      if (r) return ClaimLaw::exponential(*r);
    } else if (family == "erlang") {
      auto s = scalar("shape");
      auto r = scalar("rate");
      if (s && r) {
        if (*s != std::floor(*s)) {
          c.add(params["shape"], what + ": erlang shape must be an integer");
          return std::nullopt;
        }
        return ClaimLaw::erlang(static_cast<int>(*s), *r);
      }
    } else if (family == "hyperexponential") {
      auto p = numbers(params["probs"], c, what + " probs");
      auto r = numbers(params["rates"], c, what + " rates");
      if (p && r) return ClaimLaw::hyperexponential(*p, *r);
    } else if (family == "phase_type") {
      auto a = numbers(params["alpha"], c, what + " alpha");
      const YAML::Node g = params["generator"];
      if (!g.IsSequence() || g.size() == 0) {
        c.add(g, what + ": phase_type generator must be a list of rows");
        return std::nullopt;
      }
      Matrix gen(g.size(), g.size());
      bool ok = true;
      for (std::size_t r = 0; r < g.size(); ++r) {
        auto row = numbers(g[r], c, what + " generator row " + std::to_string(r + 1));
        if (!row || row->size() != g.size()) {
          if (row) c.add(g[r], what + ": generator row " + std::to_string(r + 1) + " has wrong length");
          ok = false;
          continue;
        }
        for (std::size_t k = 0; k < g.size(); ++k) gen(r, k) = (*row)[k];
      }
      if (a && ok) return ClaimLaw::phase_type(Eigen::Map<const RowVector>(a->data(), a->size()), gen);
    } else {
      auto first = scalar(it->second[0]);
      auto second = scalar(it->second[1]);
      if (first && second) {
        if (family == "pareto") return ClaimLaw::pareto(*first, *second);
        if (family == "weibull") return ClaimLaw::weibull(*first, *second);
        return ClaimLaw::lognormal(*first, *second);
      }
    }
  } catch (const InputError& e) {
    c.add(n, what + ": " + e.what());
  }
  return std::nullopt;
}

// Line of the YAML node a validation message refers to, if recognisable.
inline int line_for(const std::string& msg, const std::map<std::string, int>& lines) {
  static const std::regex row(R"(^row (\d+) )"), entry(R"(^q_matrix entry \((\d+),)"), premium(R"(^premium (\d+) )"),
      rate(R"(^arrival rate (\d+) )"), state(R"(^state (\d+) )"), diag(R"(^transition claim on the diagonal)");
  std::smatch mm;
  auto find = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? -1 : it->second;
  };
  if (std::regex_search(msg, mm, row) || std::regex_search(msg, mm, entry)) return find("q_matrix." + mm[1].str());
  if (std::regex_search(msg, mm, premium)) return find("premiums." + mm[1].str());
  if (std::regex_search(msg, mm, rate)) return find("arrival_rates." + mm[1].str());
  if (std::regex_search(msg, mm, state)) return find("state_claims." + mm[1].str());
  if (std::regex_search(msg, mm, diag)) return find("transition_claims");
  return -1;
}

}  // namespace io_detail

// Parses and validates a model, reporting every problem at once.
inline RegimeModel parse_model(const std::string& text, const std::string& source = "<model>") {
  io_detail::Collector c{source, {}};
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    c.add(e.mark.line, std::string("YAML syntax error: ") + e.msg);
    throw InputError("cannot parse " + source + ": " + c.errors.front(), c.errors);
  }
  if (!root.IsMap()) throw InputError(source + ": model file must be a YAML table", {source + ": model file must be a YAML table"});

  static const std::set<std::string> known = {"states", "q_matrix", "premiums", "arrival_rates", "state_claims",
                                              "transition_claims", "name"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) c.add(kv.first, "unknown key '" + key + "'");
  }
  for (const char* key : {"states", "q_matrix", "premiums", "arrival_rates", "state_claims"})
    if (!root[key]) c.add(root, std::string("missing key '") + key + "'");
  if (!c.errors.empty()) throw InputError("invalid model file " + source, c.errors);

  std::map<std::string, int> lines;
  std::vector<int> failed_laws;
  int n = 0;
  if (auto v = io_detail::number(root["states"], c, "states")) {
    if (*v < 1 || *v != std::floor(*v)) c.add(root["states"], "states must be a positive integer");
    else n = static_cast<int>(*v);
  }
  if (n == 0) throw InputError("invalid model file " + source, c.errors);

  RegimeModel m;
  m.q_matrix = Matrix::Zero(n, n);
  m.premiums = Vector::Zero(n);
  m.arrival_rates = Vector::Zero(n);
  m.state_claims.assign(n, std::nullopt);
  m.transition_claims.assign(n, std::vector<std::optional<ClaimLaw>>(n));

  const std::size_t before_arrays = c.errors.size();
  const YAML::Node q = root["q_matrix"];
  if (!q.IsSequence() || static_cast<int>(q.size()) != n) c.add(q, "q_matrix must have " + std::to_string(n) + " rows");
  else
    for (int i = 0; i < n; ++i) {
      lines["q_matrix." + std::to_string(i + 1)] = q[i].Mark().line;
      auto row = io_detail::numbers(q[i], c, "q_matrix row " + std::to_string(i + 1));
      if (!row) continue;
      if (static_cast<int>(row->size()) != n) {
        c.add(q[i], "q_matrix row " + std::to_string(i + 1) + " must have " + std::to_string(n) + " entries");
        continue;
      }
      for (int j = 0; j < n; ++j) m.q_matrix(i, j) = (*row)[j];
    }

  auto vector_key = [&](const char* key, Vector& out) {
    const YAML::Node v = root[key];
    auto vals = io_detail::numbers(v, c, key);
    if (!vals) return;
    if (static_cast<int>(vals->size()) != n) {
      c.add(v, std::string(key) + " must have " + std::to_string(n) + " entries");
      return;
    }
    for (int i = 0; i < n; ++i) {
      out(i) = (*vals)[i];
      lines[std::string(key) + "." + std::to_string(i + 1)] = v[i].Mark().line;
    }
  };
  vector_key("premiums", m.premiums);
  vector_key("arrival_rates", m.arrival_rates);
  const bool arrays_ok = c.errors.size() == before_arrays;

  const YAML::Node sc = root["state_claims"];
  if (!sc.IsSequence() || static_cast<int>(sc.size()) != n) c.add(sc, "state_claims must list " + std::to_string(n) + " laws");
  else
    for (int i = 0; i < n; ++i) {
      lines["state_claims." + std::to_string(i + 1)] = sc[i].Mark().line;
      if (sc[i].IsNull()) continue;
      m.state_claims[i] = io_detail::claim_law(sc[i], c, "state_claims entry " + std::to_string(i + 1));
      if (!m.state_claims[i]) failed_laws.push_back(i);
    }

  if (const YAML::Node tc = root["transition_claims"]) {
    lines["transition_claims"] = tc.Mark().line;
    if (!tc.IsSequence()) c.add(tc, "transition_claims must be a list of {from, to, family, params}");
    else
      for (std::size_t k = 0; k < tc.size(); ++k) {
        const std::string what = "transition_claims entry " + std::to_string(k + 1);
        const YAML::Node e = tc[k];
        if (!e.IsMap() || !e["from"] || !e["to"]) {
          c.add(e, what + " needs 'from' and 'to'");
          continue;
        }
        auto from = io_detail::number(e["from"], c, what + " from");
        auto to = io_detail::number(e["to"], c, what + " to");
        if (!from || !to) continue;
        const int i = static_cast<int>(*from) - 1, j = static_cast<int>(*to) - 1;
        if (i < 0 || i >= n || j < 0 || j >= n || *from != std::floor(*from) || *to != std::floor(*to)) {
          c.add(e, what + ": states must be integers in 1.." + std::to_string(n));
          continue;
        }
        if (i == j) {
          c.add(e, what + ": transition claim on the diagonal (" + std::to_string(i + 1) + "," + std::to_string(i + 1) +
                       ") is not allowed");
          continue;
        }
        if (m.transition_claims[i][j]) c.add(e, what + ": duplicate pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        auto law = io_detail::claim_law(e, c, what);
        if (law && !law->is_null()) m.transition_claims[i][j] = law;
      }
  }

  // Invariants are checked even after entry-level errors, so that a file is
  // fixed in one pass; laws that failed to parse are not reported twice.
  if (arrays_ok) {
    const ValidationReport r = check_model(m);
    for (const auto& e : r.errors) {
      bool duplicate = false;
      for (int i : failed_laws)
        duplicate = duplicate || e == "state " + std::to_string(i + 1) + " has arrival rate > 0 but no claim law";
      if (!duplicate) c.add(io_detail::line_for(e, lines), e);
    }
  }
  if (!c.errors.empty()) {
    std::string msg = "invalid model file " + source + ":";
    for (const auto& e : c.errors) msg += "\n  " + e;
    throw InputError(msg, c.errors);
  }
  return m;
}

inline RegimeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'", {"cannot open model file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), path);
}

}  // namespace mmrisk
