#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/scenario.hpp"

using namespace rieszflow;
namespace fs = std::filesystem;

namespace {

// Minimal scenario text; `extra` lines override or add keys.
std::string scenario(const std::map<std::string, std::string>& extra = {}) {
  std::map<std::string, std::string> keys{{"s", "0.3"}, {"r", "0.3"},   {"q", "0.35"},
                                          {"n", "128"}, {"L", "8"},     {"tau", "0.001"},
                                          {"T", "0.001"}};
  for (const auto& [k, v] : extra) keys[k] = v;
  std::string text = "# minimal scenario\n";
  for (const auto& [k, v] : keys) text += k + " = " + v + "\n";
  return text;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& file, const std::string& text) const {
    const fs::path p = path / file;
    std::ofstream(p) << text;
    return p.string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(RIESZFLOW_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_SUITE("scenario") {
  TEST_CASE("parse and round trip") {
    ScenarioConfig c = parse_scenario(scenario({{"suites", "energies, crossval"}, {"backend", "entropic"}}));
    CHECK(c.cells == 128);
    CHECK(c.solver.tau == 0.001);
    CHECK(c.solver.backend == TransportBackend::entropic);
    CHECK(c.has_suite("crossval"));
    CHECK_FALSE(c.has_suite("heat"));
    const ScenarioConfig back = parse_scenario(serialize_scenario(c));
    CHECK(back == c);

    ScenarioConfig all = parse_scenario("suites = all\ninitial = uniform-bump\nedge = 0.1\n");
    CHECK(all.suites.size() == known_suites().size());
    CHECK(parse_scenario(serialize_scenario(all)) == all);
  }

  TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_scenario("tua = 0.1\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_scenario("tau = fast\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_scenario("tau 0.1\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_scenario("tau = 0.1\ntau = 0.2\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_scenario("suites = energies, nope\n"), ConfigParseError);
    CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.cfg"), IoError);
  }

  TEST_CASE("validation follows the exponent constraint") {
    ScenarioConfig c = parse_scenario(scenario());
    CHECK(validate_scenario(c).ok);
    c.exponents.q = 0.1;
    const ValidationReport low = validate_scenario(c);
    CHECK_FALSE(low.ok);
    CHECK_FALSE(low.first_violation.empty());
    c.exponents = {0.6, 0.3, 0.35};
    CHECK_FALSE(validate_scenario(c).ok);
    c = parse_scenario(scenario());
    c.initial.rho_center = 3.0;
    CHECK_FALSE(validate_scenario(c).ok);
  }

  TEST_CASE("initial families") {
    ScenarioConfig c = parse_scenario(scenario());
    const SpeciesPair two = build_initial(c);
    CHECK(integrate(two.rho) == doctest::Approx(1.0));
    CHECK(first_moment(two.rho) == doctest::Approx(-0.5).epsilon(1e-6));
    c.initial.family = InitialFamily::gaussian;
    const SpeciesPair one = build_initial(c);
    for (std::size_t i = 0; i < one.rho.size(); ++i) CHECK(one.rho[i] == one.eta[i]);
    c.initial.family = InitialFamily::uniform_bump;
    CHECK(integrate(build_initial(c).eta) == doctest::Approx(1.0));

    TempDir dir("rieszflow_scenario_csv");
    const Grid g = c.grid();
    write_density_csv((dir.path / "rho.csv").string(), g, two.rho.values());
    write_density_csv((dir.path / "eta.csv").string(), g, two.eta.values());
    const std::string cfg =
        dir.write("csv.cfg", scenario({{"initial", "csv"}, {"rho_csv", "rho.csv"}, {"eta_csv", "eta.csv"}}));
    const SpeciesPair loaded = build_initial(load_scenario(cfg));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(loaded.eta[i] == doctest::Approx(two.eta[i]).epsilon(1e-14));
  }

  TEST_CASE("exit codes") {
    CHECK(exit_code(RunStatus::ok) == 0);
    CHECK(exit_code(RunStatus::config_invalid) == 2);
    CHECK(exit_code(RunStatus::nonconvergence) == 3);
    CHECK(exit_code(RunStatus::io_error) == 4);

    TempDir dir("rieszflow_cli_codes");
    const std::string ok = dir.write("ok.cfg", scenario());
    const std::string bad = dir.write("bad.cfg", scenario({{"q", "0.1"}}));
    const std::string stiff = dir.write("stiff.cfg", scenario({{"max_inner_iter", "1"}, {"inner_tol", "1e-14"}}));
    const std::string out = (dir.path / "out").string();
    CHECK(cli("validate " + ok) == 0);
    CHECK(cli("validate " + bad) == 2);
    CHECK(cli("validate " + (dir.path / "missing.cfg").string()) == 4);
    CHECK(cli("run " + bad + " --out " + out) == 2);
    CHECK(cli("run " + stiff + " --out " + out) == 3);
    CHECK(cli("run " + ok + " --out /proc/rieszflow_cannot_write") == 4);
    CHECK(cli("run " + ok + " --out " + out) == 0);
  }

  TEST_CASE("minimal run artifacts") {
    TempDir dir("rieszflow_cli_run");
    const std::string cfg = dir.write("min.cfg", scenario({{"suites", "energies"}}));
    const fs::path out = dir.path / "out";
    REQUIRE(cli("run " + cfg + " --out " + out.string()) == 0);
    const std::string traj = slurp(out / "trajectory.csv");
    CHECK(lines(traj) == 3);
    CHECK(lines(slurp(out / "final_rho.csv")) == 129);
    CHECK(fs::exists(out / "final_eta.csv"));

    const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
    CHECK(j["status"] == "ok");
    CHECK(j["energies"]["monotone"].is_boolean());
    CHECK(j["energies"].contains("worst_violation"));
    CHECK(j["crossval"]["l1_gap"].is_null());
    for (const char* key : {"distance", "optimality", "degiorgi", "weak_form", "lp", "moments", "conservation",
                            "symmetry", "crossval", "heat", "transport"}) {
      CHECK(j.contains(key));
    }
  }

  TEST_CASE("reruns are byte identical") {
    TempDir dir("rieszflow_cli_rerun");
    const std::string cfg =
        dir.write("re.cfg", scenario({{"T", "0.004"}, {"suites", "crossval, transport"}, {"crossval_T", "0.002"}}));
    const fs::path a = dir.path / "a", b = dir.path / "b";
    REQUIRE(cli("run " + cfg + " --out " + a.string()) == 0);
    REQUIRE(cli("run " + cfg + " --out " + b.string()) == 0);
    for (const char* f : {"trajectory.csv", "final_rho.csv", "final_eta.csv", "fv_trajectory.csv", "plan_rho.csv"}) {
      CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
      CHECK(!slurp(a / f).empty());
    }
    CHECK(slurp(a / "fv_trajectory.csv").find(",solver\n") != std::string::npos);
  }

  TEST_CASE("study") {
    ScenarioConfig c = parse_scenario(scenario());
    c.solver.final_time = 0.004;
    const auto one = run_study(c, RefineAxis::tau, 1, 1);
    REQUIRE(one.size() == 1);
    CHECK_FALSE(one[0].weak_ratio.has_value());
    const auto two = run_study(c, RefineAxis::both, 2, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[1].tau == doctest::Approx(0.5 * two[0].tau));
    CHECK(two[1].cells == 2 * two[0].cells);
    CHECK(two[1].weak_ratio.has_value());
    std::ostringstream os;
    write_study_csv(os, two);
    CHECK(lines(os.str()) == 3);

    TempDir dir("rieszflow_cli_study");
    const std::string cfg = dir.write("s.cfg", scenario({{"T", "0.004"}}));
    CHECK(cli("study " + cfg + " --axis tau --levels 2 --out " + dir.path.string()) == 0);
    CHECK(fs::exists(dir.path / "study.csv"));
    CHECK(cli("study " + cfg + " --axis space --levels 2") == 2);
  }

  TEST_CASE("thread count") {
    setenv("RIESZFLOW_THREADS", "3", 1);
    CHECK(default_thread_count() == 3);
    setenv("RIESZFLOW_THREADS", "zero", 1);
    CHECK(default_thread_count() >= 1);
    unsetenv("RIESZFLOW_THREADS");
  }
}
