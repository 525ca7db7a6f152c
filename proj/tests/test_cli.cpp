#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mmrisk/cli.hpp"
#include "support.hpp"

using namespace mmrisk;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mmrisk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string model(const std::string& name) { return testing::source_path("models/" + name); }

using Rows = std::vector<std::vector<std::string>>;

// Minimal RFC 4180 reader: quoted fields may hold commas, quotes and newlines.
Rows parse_csv(const std::string& text) {
  Rows rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, started = false;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (quoted) {
      if (c == '"' && k + 1 < text.size() && text[k + 1] == '"') {
        field += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      started = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      started = false;
    } else {
      field += c;
      started = true;
    }
  }
  if (started || !row.empty()) throw std::runtime_error("csv does not end with a newline");
  return rows;
}

std::string write_csv(const Rows& rows) {
  std::string s;
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) s += (k ? "," : "") + cli::csv_field(row[k]);
    s += "\n";
  }
  return s;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::map<std::string, double> column(const Rows& rows, const std::string& name) {
  std::map<std::string, double> out;
  const auto& head = rows.at(0);
  const auto it = std::find(head.begin(), head.end(), name);
  REQUIRE(it != head.end());
  const auto k = static_cast<std::size_t>(it - head.begin());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    double v = 0;
    REQUIRE(parse_number(rows[r][k], v));
    out[rows[r][0]] = v;
  }
  return out;
}

struct Golden {
  std::string name;
  std::vector<std::string> args;
};

std::vector<Golden> golden_commands() {
  return {
      {"ruin_b", {"ruin", "--model", model("model_b.yaml"), "--x", "0:5:0.5"}},
      {"ruin_pareto", {"ruin", "--model", model("pareto.yaml"), "--x", "0,10,50"}},
      {"finite_ruin_a", {"finite-ruin", "--model", model("model_a.yaml"), "--x", "2,30,40", "--t", "10,20,30", "--n", "20000", "--seed", "3"}},
      {"gerber_shiu_b", {"gerber-shiu", "--model", model("model_b.yaml"), "--q", "0.1", "--x", "0,1,2", "--penalty", "exp:0.5"}},
      {"deficit_a", {"deficit", "--model", model("model_a.yaml"), "--x", "1", "--z", "0,0.5,1"}},
      {"parisian_a", {"parisian", "--model", model("model_a.yaml"), "--x", "0,1,2", "--zeta", "1"}},
      {"asymptotics_a", {"asymptotics", "--model", model("model_a.yaml"), "--v", "2"}},
      {"asymptotics_pareto", {"asymptotics", "--model", model("pareto.yaml")}},
      {"scale_b", {"scale", "--model", model("model_b.yaml"), "--x", "0,1,2", "--q", "0.1"}},
      {"scale_matrices_b", {"scale", "--matrices", "--model", model("model_b.yaml"), "--q", "0.1"}},
      {"simulate_ruin_b", {"simulate", "--estimator", "ruin", "--model", model("model_b.yaml"), "--x", "1", "--t", "5", "--n", "20000", "--seed", "7"}},
      {"validate_switching", {"validate", "--model", model("switching_claims.yaml")}},
  };
}

fs::path golden_path(const std::string& name) { return testing::source_path("tests/golden/" + name + ".csv"); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

struct WorkerScope {
  explicit WorkerScope(int w) { setenv("MMRISK_WORKERS", std::to_string(w).c_str(), 1); }
  ~WorkerScope() { unsetenv("MMRISK_WORKERS"); }
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mmrisk_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("ruin curve of the single exponential model") {
  const CliRun r = invoke({"ruin", "--model", model("model_a.yaml"), "--x", "0,1,2"});
  REQUIRE(r.code == 0);
  const Rows rows = parse_csv(r.out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == "x");
  const auto psi = column(rows, "psi_1");
  CHECK_THAT(psi.at("0"), WithinAbs(0.5, 1e-5));
  CHECK_THAT(psi.at("1"), WithinAbs(0.18394, 1e-5));
  CHECK_THAT(psi.at("2"), WithinAbs(0.06767, 1e-5));
}

TEST_CASE("asymptotic constants of the single exponential model") {
  const CliRun r = invoke({"asymptotics", "--model", model("model_a.yaml")});
  REQUIRE(r.code == 0);
  std::map<std::string, double> v;
  for (const auto& row : parse_csv(r.out)) {
    double d = 0;
    if (parse_number(row[3], d) && !v.count(row[0])) v[row[0]] = d;
  }
  CHECK_THAT(v.at("gamma"), WithinAbs(1.0, 1e-8));
  CHECK_THAT(v.at("cramer_constant"), WithinAbs(0.5, 1e-8));
  CHECK_THAT(v.at("segerdahl_m"), WithinAbs(1.0, 1e-8));
  CHECK_THAT(v.at("segerdahl_c2"), WithinAbs(4.0, 1e-6));
}

TEST_CASE("exit codes") {
  SECTION("unprofitable model fails validation") {
    const CliRun r = invoke({"validate", "--model", model("unprofitable.yaml")});
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("net profit violated"));
  }
  SECTION("ruin of an unprofitable model is a computational failure") {
    const CliRun r = invoke({"ruin", "--model", model("unprofitable.yaml"), "--x", "1"});
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("ruin certain"));
  }
  SECTION("row sums are checked with the row named") {
    const fs::path p = scratch("rowsum.yaml");
    std::ofstream(p) << "states: 2\nq_matrix:\n  - [-1.0, 1.0]\n  - [0.5, -0.4]\npremiums: [1, 1]\narrival_rates: [1, 1]\n"
                        "state_claims:\n  - {family: exponential, params: {rate: 2}}\n  - {family: exponential, params: {rate: 2}}\n";
    const CliRun r = invoke({"ruin", "--model", p.string(), "--x", "1"});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("row 2"));
  }
  SECTION("unknown claim family lists the supported ones") {
    const fs::path p = scratch("cauchy.yaml");
    std::ofstream(p) << "states: 1\nq_matrix: [[0.0]]\npremiums: [1]\narrival_rates: [1]\n"
                        "state_claims:\n  - {family: cauchy, params: {scale: 1}}\n";
    const CliRun r = invoke({"ruin", "--model", p.string(), "--x", "1"});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("cauchy"));
    for (const char* fam : {"exponential", "erlang", "hyperexponential", "phase_type", "pareto", "weibull", "lognormal"})
      CHECK_THAT(r.err, ContainsSubstring(fam));
  }
  SECTION("usage errors") {
    CHECK(invoke({"ruin", "--x", "1"}).code == 2);
    CHECK(invoke({"--model", model("model_a.yaml")}).code == 2);
    CHECK(invoke({"teleport", "--model", model("model_a.yaml")}).code == 2);
    CHECK(invoke({"ruin", "--model", model("model_a.yaml"), "--format", "xml"}).code == 2);
    CHECK(invoke({"ruin", "--model", model("no_such_model.yaml")}).code == 2);
    CHECK(invoke({"ruin", "--model", model("model_a.yaml"), "--x", "a,b"}).code == 2);
  }
  SECTION("help is a success") { CHECK(invoke({"--help"}).code == 0); }
}

TEST_CASE("golden outputs") {
  const bool update = std::getenv("MMRISK_UPDATE_GOLDEN") != nullptr;
  for (const auto& g : golden_commands()) {
    INFO(g.name);
    const CliRun r = invoke(g.args);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const fs::path p = golden_path(g.name);
    if (update) {
      fs::create_directories(p.parent_path());
      std::ofstream(p, std::ios::binary) << r.out;
    }
    REQUIRE(fs::exists(p));
    CHECK(r.out == slurp(p));
  }
}

TEST_CASE("CSV output round-trips") {
  for (const auto& g : golden_commands()) {
    INFO(g.name);
    const CliRun r = invoke(g.args);
    REQUIRE(r.code == 0);
    const Rows rows = parse_csv(r.out);
    REQUIRE(rows.size() >= 2);
    const auto& head = rows[0];
    CHECK(std::set<std::string>(head.begin(), head.end()).size() == head.size());
    for (const auto& row : rows) CHECK(row.size() == head.size());
    CHECK(write_csv(rows) == r.out);
    for (std::size_t k = 1; k < rows.size(); ++k)
      for (const auto& f : rows[k]) {
        double v = 0;
        if (parse_number(f, v)) CHECK((f == cli::format_double(v) || f.find_first_not_of("-0123456789") == std::string::npos));
      }
  }
}

TEST_CASE("JSON lines carry the same table") {
  for (const auto& g : golden_commands()) {
    INFO(g.name);
    const CliRun csv = invoke(g.args);
    auto args = g.args;
    args.push_back("--format");
    args.push_back("json-lines");
    const CliRun js = invoke(args);
    REQUIRE(js.code == 0);
    const Rows rows = parse_csv(csv.out);
    std::istringstream lines(js.out);
    std::size_t r = 1;
    for (std::string line; std::getline(lines, line); ++r) {
      REQUIRE(r < rows.size());
      const auto obj = nlohmann::ordered_json::parse(line);
      REQUIRE(obj.size() == rows[0].size());
      std::size_t k = 0;
      for (const auto& [key, val] : obj.items()) {
        CHECK(key == rows[0][k]);
        const std::string& cell = rows[r][k];
        if (val.is_null()) CHECK(cell.empty());
        else if (val.is_number()) {
          double v = 0;
          REQUIRE(parse_number(cell, v));
          CHECK(val.get<double>() == v);
        } else CHECK(val.get<std::string>() == cell);
        ++k;
      }
    }
    CHECK(r == rows.size());
  }
}

TEST_CASE("output file matches standard output") {
  const fs::path p = scratch("ruin_b.csv");
  const std::vector<std::string> args{"ruin", "--model", model("model_b.yaml"), "--x", "0,1,2"};
  auto with_out = args;
  with_out.push_back("--out");
  with_out.push_back(p.string());
  const CliRun r = invoke(with_out);
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  CHECK(slurp(p) == invoke(args).out);
}

TEST_CASE("reruns are byte-identical for any worker count") {
  const std::vector<std::vector<std::string>> runs{
      {"simulate", "--estimator", "ruin", "--model", model("switching_claims.yaml"), "--x", "1", "--t", "5", "--n", "20000", "--seed", "9"},
      {"simulate", "--estimator", "parisian", "--model", model("model_b.yaml"), "--x", "1", "--zeta", "0.5", "--n", "20000", "--seed", "9"},
      {"finite-ruin", "--model", model("model_b.yaml"), "--x", "1,3", "--t", "2,8", "--n", "20000", "--seed", "9"},
  };
  for (const auto& args : runs) {
    std::string one, three, again;
    {
      WorkerScope w(1);
      one = invoke(args).out;
    }
    {
      WorkerScope w(3);
      three = invoke(args).out;
      again = invoke(args).out;
    }
    CHECK(!one.empty());
    CHECK(one == three);
    CHECK(three == again);
  }
}
