#include "rieszflow/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "rieszflow/heatflow.hpp"
#include "rieszflow/spectral.hpp"
#include "rieszflow/transport.hpp"

namespace rieszflow {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const char* family_name(InitialFamily f) {
  switch (f) {
    case InitialFamily::gaussian: return "gaussian";
    case InitialFamily::two_gaussian: return "two-gaussian";
    case InitialFamily::uniform_bump: return "uniform-bump";
    case InitialFamily::csv: return "csv";
  }
  return "?";
}

const char* backend_name(TransportBackend b) { return b == TransportBackend::quantile ? "quantile" : "entropic"; }

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace

const std::vector<std::string>& known_suites() {
  static const std::vector<std::string> names = {"energies", "distance",     "optimality", "degiorgi",
                                                 "weak",     "lp",           "moments",    "conservation",
                                                 "symmetry", "crossval",     "heat",       "transport"};
  return names;
}

bool ScenarioConfig::has_suite(const std::string& name) const {
  return std::find(suites.begin(), suites.end(), name) != suites.end();
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  return serialize_scenario(a) == serialize_scenario(b) && a.base_dir == b.base_dir;
}

ScenarioConfig parse_scenario(const std::string& text) {
  ScenarioConfig c;
  std::map<std::string, std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigParseError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigParseError(where + "empty key");
    if (seen.count(key)) throw ConfigParseError(where + "duplicate key '" + key + "'");
    seen[key] = value;

    auto real = [&]() {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ConfigParseError(where + key + ": expected a number, got '" + value + "'");
      return v;
    };
    auto whole = [&]() -> long long {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ConfigParseError(where + key + ": expected an integer, got '" + value + "'");
      return v;
    };
    auto count = [&]() -> std::size_t {
      const long long v = whole();
      if (v < 0) throw ConfigParseError(where + key + ": must be nonnegative");
      return static_cast<std::size_t>(v);
    };

    if (key == "s") c.exponents.s = real();
    else if (key == "r") c.exponents.r = real();
    else if (key == "q") c.exponents.q = real();
    else if (key == "n") c.cells = count();
    else if (key == "L") c.box_length = real();
    else if (key == "padding_factor") c.padding_factor = static_cast<int>(whole());
    else if (key == "initial") {
      if (value == "gaussian") c.initial.family = InitialFamily::gaussian;
      else if (value == "two-gaussian") c.initial.family = InitialFamily::two_gaussian;
      else if (value == "uniform-bump") c.initial.family = InitialFamily::uniform_bump;
      else if (value == "csv") c.initial.family = InitialFamily::csv;
      else throw ConfigParseError(where + "unknown initial family '" + value + "'");
    } else if (key == "rho_center") c.initial.rho_center = real();
    else if (key == "eta_center") c.initial.eta_center = real();
    else if (key == "rho_width") c.initial.rho_width = real();
    else if (key == "eta_width") c.initial.eta_width = real();
    else if (key == "edge") c.initial.edge = real();
    else if (key == "rho_csv") c.initial.rho_csv = value;
    else if (key == "eta_csv") c.initial.eta_csv = value;
    else if (key == "tau") c.solver.tau = real();
    else if (key == "T") c.solver.final_time = real();
    else if (key == "M") c.solver.particles = count();
    else if (key == "inner_tol") c.solver.inner_tol = real();
    else if (key == "max_inner_iter") c.solver.max_inner_iter = static_cast<int>(whole());
    else if (key == "backend") {
      if (value == "quantile") c.solver.backend = TransportBackend::quantile;
      else if (value == "entropic") c.solver.backend = TransportBackend::entropic;
      else throw ConfigParseError(where + "unknown backend '" + value + "'");
    } else if (key == "epsilon") c.solver.entropic_epsilon = real();
    else if (key == "degiorgi_points") c.solver.degiorgi_points = static_cast<int>(whole());
    else if (key == "armijo") c.solver.line_search.armijo = real();
    else if (key == "shrink") c.solver.line_search.shrink = real();
    else if (key == "wolfe") c.solver.line_search.wolfe = real();
    else if (key == "max_backtracks") c.solver.line_search.max_backtracks = static_cast<int>(whole());
    else if (key == "suites") {
      c.suites.clear();
      std::istringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        if (item == "all") {
          c.suites = known_suites();
          continue;
        }
        const auto& k = known_suites();
        if (std::find(k.begin(), k.end(), item) == k.end()) throw ConfigParseError(where + "unknown suite '" + item + "'");
        if (!c.has_suite(item)) c.suites.push_back(item);
      }
    } else if (key == "crossval_T") c.crossval_time = real();
    else if (key == "fv_cfl") c.fv_cfl = real();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(count());
    else if (key == "output") c.output = value;
    else throw ConfigParseError(where + "unknown key '" + key + "'");
  }
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c;
  try {
    c = parse_scenario(ss.str());
  } catch (const ConfigParseError& e) {
    throw ConfigParseError(path + ": " + e.what());
  }
  c.base_dir = fs::path(path).parent_path().string();
  return c;
}

std::string serialize_scenario(const ScenarioConfig& c) {
  std::ostringstream o;
  o << "# exponents\n";
  o << "s = " << num(c.exponents.s) << "\nr = " << num(c.exponents.r) << "\nq = " << num(c.exponents.q) << "\n";
  o << "# grid\n";
  o << "n = " << c.cells << "\nL = " << num(c.box_length) << "\npadding_factor = " << c.padding_factor << "\n";
  o << "# initial data\n";
  o << "initial = " << family_name(c.initial.family) << "\n";
  o << "rho_center = " << num(c.initial.rho_center) << "\neta_center = " << num(c.initial.eta_center) << "\n";
  o << "rho_width = " << num(c.initial.rho_width) << "\neta_width = " << num(c.initial.eta_width) << "\n";
  o << "edge = " << num(c.initial.edge) << "\n";
  if (!c.initial.rho_csv.empty()) o << "rho_csv = " << c.initial.rho_csv << "\n";
  if (!c.initial.eta_csv.empty()) o << "eta_csv = " << c.initial.eta_csv << "\n";
  o << "# solver\n";
  o << "tau = " << num(c.solver.tau) << "\nT = " << num(c.solver.final_time) << "\nM = " << c.solver.particles << "\n";
  o << "inner_tol = " << num(c.solver.inner_tol) << "\nmax_inner_iter = " << c.solver.max_inner_iter << "\n";
  o << "backend = " << backend_name(c.solver.backend) << "\nepsilon = " << num(c.solver.entropic_epsilon) << "\n";
  o << "degiorgi_points = " << c.solver.degiorgi_points << "\n";
  o << "armijo = " << num(c.solver.line_search.armijo) << "\nshrink = " << num(c.solver.line_search.shrink)
    << "\nwolfe = " << num(c.solver.line_search.wolfe) << "\n";
  o << "max_backtracks = " << c.solver.line_search.max_backtracks << "\n";
  o << "# diagnostics\n";
  o << "suites = " << join(c.suites) << "\n";
  o << "crossval_T = " << num(c.crossval_time) << "\nfv_cfl = " << num(c.fv_cfl) << "\n";
  o << "seed = " << c.seed << "\noutput = " << c.output << "\n";
  return o.str();
}

namespace {

std::vector<double> family_profile(const Grid& g, InitialFamily family, double center, double width, double edge) {
  std::vector<double> v(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.center(i);
    if (!g.admissible(x)) continue;
    if (family == InitialFamily::uniform_bump) {
      v[i] = 0.5 * (std::tanh((x - center + width) / edge) - std::tanh((x - center - width) / edge));
    } else {
      const double z = (x - center) / width;
      v[i] = std::exp(-0.5 * z * z);
    }
  }
  return v;
}

std::string resolve(const ScenarioConfig& c, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || c.base_dir.empty()) return p;
  return (fs::path(c.base_dir) / p).string();
}

void check_support(const DensityField& f, const char* name) {
  const Grid& g = f.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (f[i] > 0.0 && !g.admissible(g.center(i))) {
      throw InvalidArgument(std::string(name) + " has mass outside the admissible region [" + num(g.admissible_lo()) +
                            ", " + num(g.admissible_hi()) + "]");
    }
  }
}

}  // namespace

SpeciesPair build_initial(const ScenarioConfig& c) {
  const Grid g = c.grid();
  const InitialSpec& s = c.initial;
  if (s.family == InitialFamily::csv) {
    if (s.rho_csv.empty() || s.eta_csv.empty()) throw InvalidArgument("csv initial data need rho_csv and eta_csv");
    DensityField rho = read_density_csv(resolve(c, s.rho_csv), g);
    DensityField eta = read_density_csv(resolve(c, s.eta_csv), g);
    check_support(rho, "rho");
    check_support(eta, "eta");
    return SpeciesPair(std::move(rho), std::move(eta), c.exponents);
  }
  for (const auto& [name, center, width] : {std::tuple{"rho", s.rho_center, s.rho_width},
                                             std::tuple{"eta", s.eta_center, s.eta_width}}) {
    if (!g.admissible(center)) {
      throw InvalidArgument(std::string(name) + "_center = " + num(center) + " lies outside the admissible region [" +
                            num(g.admissible_lo()) + ", " + num(g.admissible_hi()) + "]");
    }
    if (!(width > 0.0)) throw InvalidArgument(std::string(name) + "_width must be positive");
  }
  if (s.family == InitialFamily::uniform_bump && !(s.edge > 0.0)) throw InvalidArgument("edge must be positive");
  if (s.family == InitialFamily::gaussian) {
    // One shared bump for both species.
    auto v = family_profile(g, s.family, s.rho_center, s.rho_width, s.edge);
    DensityField f = DensityField::normalized(g, v);
    return SpeciesPair(f, f, c.exponents);
  }
  return SpeciesPair(DensityField::normalized(g, family_profile(g, s.family, s.rho_center, s.rho_width, s.edge)),
                     DensityField::normalized(g, family_profile(g, s.family, s.eta_center, s.eta_width, s.edge)),
                     c.exponents);
}

ValidationReport validate_scenario(const ScenarioConfig& c) {
  ValidationReport rep;
  std::ostringstream t;
  auto fail = [&](const std::string& what) {
    if (rep.ok) rep.first_violation = what;
    rep.ok = false;
  };
  auto line = [&](const std::string& label, bool ok) { t << "  " << (ok ? "ok    " : "FAILED") << "  " << label << "\n"; };

  const ExponentTriple& e = c.exponents;
  const double upper = 0.5;  // min{1, d/2} for d = 1
  t << "exponents s = " << num(e.s) << ", r = " << num(e.r) << ", q = " << num(e.q) << " (d = 1)\n";
  for (const auto& [name, v] : {std::pair{"s", e.s}, std::pair{"r", e.r}, std::pair{"q", e.q}}) {
    line(std::string("0 < ") + name + " < min{1, d/2} = " + num(upper), v > 0.0 && v < upper);
  }
  const double q_lo = std::max(e.s, e.r) / 2.0;
  const double q_hi = (std::min(e.s, e.r) + 1.0) / 2.0;
  line("q > max{s/2, r/2} = " + num(q_lo), e.q > q_lo);
  line("q < min{(s+1)/2, (r+1)/2} = " + num(q_hi), e.q < q_hi);
  if (auto bad = exponent_violation(e)) fail(*bad);

  t << "grid n = " << c.cells << ", L = " << num(c.box_length) << ", padding_factor = " << c.padding_factor << "\n";
  std::optional<Grid> grid;
  try {
    grid.emplace(c.grid());
    line("n is a power of two, L > 0, padding_factor >= 1", true);
    line("admissible region [" + num(grid->admissible_lo()) + ", " + num(grid->admissible_hi()) + "]", true);
  } catch (const Error& ex) {
    line(ex.what(), false);
    fail(ex.what());
  }

  t << "solver tau = " << num(c.solver.tau) << ", T = " << num(c.solver.final_time) << "\n";
  try {
    c.solver.validate();
    line("N = ceil(T/tau) = " + std::to_string(c.solver.steps()), true);
  } catch (const Error& ex) {
    line(ex.what(), false);
    fail(ex.what());
  }
  if (!(c.crossval_time >= 0.0)) {
    line("crossval_T >= 0", false);
    fail("crossval_T must be nonnegative");
  }
  if (!(c.fv_cfl > 0.0 && c.fv_cfl <= 1.0)) {
    line("0 < fv_cfl <= 1", false);
    fail("fv_cfl must lie in (0, 1]");
  }

  t << "initial data " << family_name(c.initial.family) << "\n";
  if (grid) {
    try {
      const SpeciesPair p = build_initial(c);
      line("supports inside the admissible region", true);
      line("F(rho0, eta0) = " + num(energy(p)) + " (finite)", std::isfinite(energy(p)));
    } catch (const Error& ex) {
      line(ex.what(), false);
      fail(ex.what());
    }
  }
  t << (rep.ok ? "result: valid\n" : "result: INVALID (" + rep.first_violation + ")\n");
  rep.text = t.str();
  return rep;
}

int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return 0;
    case RunStatus::config_invalid: return 2;
    case RunStatus::nonconvergence: return 3;
    case RunStatus::io_error: return 4;
  }
  return 4;
}

namespace {

double bump(double s) { return std::abs(s) < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0; }
double bump_prime(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  const double d = 1.0 - s * s;
  return bump(s) * (-2.0 * s / (d * d));
}

double l1_distance(const DensityField& a, const DensityField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s * a.grid().spacing();
}

// max |a(x) - b(-x)| with the reflection about the box center.
double mirror_defect(const DensityField& a, const DensityField& b) {
  double s = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(a[i] - b[n - 1 - i]));
  return s;
}

double max_defect(const DensityField& a, const DensityField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

json null_summary(const ScenarioConfig& c) {
  json j;
  j["status"] = "ok";
  j["error"] = nullptr;
  j["scenario"] = {{"s", c.exponents.s},         {"r", c.exponents.r},      {"q", c.exponents.q},
                   {"n", c.cells},               {"L", c.box_length},       {"padding_factor", c.padding_factor},
                   {"initial", family_name(c.initial.family)},
                   {"tau", c.solver.tau},        {"T", c.solver.final_time}, {"M", c.solver.particles},
                   {"inner_tol", c.solver.inner_tol}, {"backend", backend_name(c.solver.backend)},
                   {"suites", c.suites},         {"seed", c.seed}};
  j["steps_planned"] = nullptr;
  j["steps_completed"] = nullptr;
  j["particles"] = nullptr;
  j["inner_tol_effective"] = nullptr;
  j["inner"] = {{"max_iterations", nullptr}, {"nonconverged_steps", nullptr}};
  j["energies"] = {{"initial", nullptr}, {"final", nullptr}, {"monotone", nullptr}, {"worst_violation", nullptr}};
  j["distance"] = {{"telescoped_sum", nullptr}, {"bound", nullptr}, {"holds", nullptr}};
  j["optimality"] = {{"median_residual", nullptr}, {"max_residual", nullptr}, {"fraction_within_5pct", nullptr}};
  j["degiorgi"] = {{"points", nullptr}, {"identity_gap", nullptr}};
  j["weak_form"] = {{"residual_rho", nullptr}, {"residual_eta", nullptr}, {"residual", nullptr}};
  j["lp"] = {{"l2_ratio_max", nullptr}, {"linf_ratio_max", nullptr}};
  j["moments"] = {{"m2_final_sum", nullptr}, {"m2_bound", nullptr}, {"holds", nullptr}};
  j["conservation"] = {{"mass_drift", nullptr}, {"com_drift", nullptr}, {"com_tolerance", nullptr}};
  j["symmetry"] = {{"exchange_l1_max", nullptr}, {"mirror_max", nullptr}};
  j["crossval"] = {{"T", nullptr}, {"l1_gap", nullptr}, {"l1_rho", nullptr}, {"l1_eta", nullptr},
                   {"fv_steps", nullptr}};
  j["heat"] = {{"dissipation_gap", nullptr}, {"evi_worst_slack", nullptr}};
  j["transport"] = {{"w2_rho_initial_final", nullptr}, {"sinkhorn_rho_initial_final", nullptr}};
  return j;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << s;
  if (!out) throw IoError("failed writing " + p.string());
}

}  // namespace

TestFunction standard_test_function(const Grid& g, double final_time) {
  const double a = 0.1 * final_time, b = 0.9 * final_time;
  const double w = g.admissible_hi() - g.admissible_lo();
  const double lo = g.admissible_lo() + 0.1 * w, hi = g.admissible_hi() - 0.1 * w;
  const double tc = 0.5 * (a + b), th = 0.5 * (b - a);
  const double xc = 0.5 * (lo + hi), xh = 0.5 * (hi - lo);
  TestFunction phi;
  phi.value = [=](double t, double x) { return bump((t - tc) / th) * bump((x - xc) / xh); };
  phi.dt = [=](double t, double x) { return bump_prime((t - tc) / th) / th * bump((x - xc) / xh); };
  phi.dx = [=](double t, double x) { return bump((t - tc) / th) * bump_prime((x - xc) / xh) / xh; };
  phi.t_lo = a;
  phi.t_hi = b;
  phi.x_lo = lo;
  phi.x_hi = hi;
  return phi;
}

RunOutcome run_scenario(const ScenarioConfig& c, const std::string& out_dir) {
  json j = null_summary(c);
  RunOutcome outcome;
  const fs::path dir(out_dir);
  auto finish = [&](RunStatus st, const std::string& msg) {
    outcome.status = st;
    outcome.message = msg;
    const char* names[] = {"ok", "config_invalid", "solver_nonconvergence", "io_error"};
    j["status"] = names[static_cast<int>(st)];
    if (!msg.empty()) j["error"] = msg;
    try {
      write_text(dir / "summary.json", j.dump(2) + "\n");
    } catch (const IoError& e) {
      outcome.status = RunStatus::io_error;
      outcome.message = e.what();
    }
    return outcome;
  };

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    outcome.status = RunStatus::io_error;
    outcome.message = "cannot create " + out_dir + ": " + ec.message();
    return outcome;
  }

  const ValidationReport v = validate_scenario(c);
  if (!v.ok) return finish(RunStatus::config_invalid, v.first_violation);

  std::optional<SpeciesPair> initial;
  try {
    initial.emplace(build_initial(c));
  } catch (const IoError& e) {
    return finish(RunStatus::io_error, e.what());
  } catch (const Error& e) {
    return finish(RunStatus::config_invalid, e.what());
  }
  const Grid grid = c.grid();
  const SolverConfig& sc = c.solver;
  const std::size_t m = sc.particle_count(grid);
  j["steps_planned"] = sc.steps();
  j["particles"] = m;
  j["inner_tol_effective"] = sc.tolerance(m);

  std::vector<StepDiagnostics> rows;
  std::optional<Trajectory> traj;
  RunStatus status = RunStatus::ok;
  std::string message;
  try {
    traj.emplace(run_trajectory(*initial, sc, [&](std::size_t, const StepDiagnostics& d) { rows.push_back(d); }));
  } catch (const IoError& e) {
    status = RunStatus::io_error;
    message = e.what();
  } catch (const Error& e) {
    status = RunStatus::nonconvergence;
    message = e.what();
  }
  j["steps_completed"] = rows.empty() ? 0 : rows.size() - 1;

  try {
    std::ostringstream csv;
    write_trajectory_csv(csv, rows);
    write_text(dir / "trajectory.csv", csv.str());
  } catch (const IoError& e) {
    return finish(RunStatus::io_error, e.what());
  }
  if (!rows.empty()) {
    int worst_it = 0;
    std::size_t bad = 0;
    for (std::size_t n = 1; n < rows.size(); ++n) {
      worst_it = std::max(worst_it, rows[n].inner_iterations);
      bad += rows[n].converged ? 0 : 1;
    }
    j["inner"]["max_iterations"] = worst_it;
    j["inner"]["nonconverged_steps"] = bad;
    if (bad > 0 && status == RunStatus::ok) {
      status = RunStatus::nonconvergence;
      message = std::to_string(bad) + " step(s) reached max_inner_iter before the gradient tolerance";
    }
  }
  if (!traj) return finish(status, message);

  const double tol = sc.tolerance(m);
  const double e0 = rows.front().energy;
  try {
    const SpeciesPair& fin = traj->iterates.back().pair;
    write_density_csv((dir / "final_rho.csv").string(), grid, fin.rho.values());
    write_density_csv((dir / "final_eta.csv").string(), grid, fin.eta.values());

    if (c.has_suite("energies")) {
      double worst = 0.0;
      for (std::size_t n = 1; n < rows.size(); ++n) worst = std::max(worst, rows[n].energy - rows[n - 1].energy);
      j["energies"] = {{"initial", e0}, {"final", rows.back().energy}, {"monotone", worst <= tol},
                       {"worst_violation", worst}};
    }
    if (c.has_suite("distance")) {
      double sum = 0.0;
      for (std::size_t n = 1; n < rows.size(); ++n) sum += rows[n].w2sq_step;
      sum /= 2.0 * sc.tau;
      const double bound = e0 * (1.0 + 1e-6) + static_cast<double>(rows.size() - 1) * tol;
      j["distance"] = {{"telescoped_sum", sum}, {"bound", bound}, {"holds", sum <= bound}};
    }
    if (c.has_suite("optimality")) {
      std::vector<double> res;
      for (std::size_t n = 1; n < rows.size(); ++n) {
        res.push_back(rows[n].res_rho);
        res.push_back(rows[n].res_eta);
      }
      const double within = static_cast<double>(std::count_if(res.begin(), res.end(), [](double r) { return r <= 0.05; }));
      j["optimality"] = {{"median_residual", median(res)},
                         {"max_residual", res.empty() ? 0.0 : *std::max_element(res.begin(), res.end())},
                         {"fraction_within_5pct", res.empty() ? 1.0 : within / static_cast<double>(res.size())}};
    }
    if (c.has_suite("degiorgi")) {
      const auto samples = degiorgi_samples(*traj, sc, sc.degiorgi_points);
      j["degiorgi"] = {{"points", sc.degiorgi_points}, {"identity_gap", discrete_energy_identity(*traj, samples)}};
    }
    if (c.has_suite("weak") && traj->steps() >= 2) {
      const WeakFormResidual w = weak_form_residuals(*traj, standard_test_function(grid, sc.final_time));
      j["weak_form"] = {{"residual_rho", w.rho}, {"residual_eta", w.eta}, {"residual", w.max()}};
    }
    if (c.has_suite("lp")) {
      double r2 = 0.0, ri = 0.0;
      const double b2 = rows.front().l2_rho + rows.front().l2_eta;
      const double bi = rows.front().linf_rho + rows.front().linf_eta;
      for (const auto& d : rows) {
        r2 = std::max(r2, (d.l2_rho + d.l2_eta) / b2);
        ri = std::max(ri, (d.linf_rho + d.linf_eta) / bi);
      }
      j["lp"] = {{"l2_ratio_max", r2}, {"linf_ratio_max", ri}};
    }
    if (c.has_suite("moments")) {
      const double lhs = rows.back().m2_rho + rows.back().m2_eta;
      const double bound = 4.0 * sc.final_time * e0 + 2.0 * (rows.front().m2_rho + rows.front().m2_eta);
      j["moments"] = {{"m2_final_sum", lhs}, {"m2_bound", bound}, {"holds", lhs <= bound}};
    }
    if (c.has_suite("conservation")) {
      double mass = 0.0, com = 0.0;
      for (const auto& it : traj->iterates) {
        mass = std::max({mass, std::abs(integrate(it.pair.rho) - 1.0), std::abs(integrate(it.pair.eta) - 1.0)});
      }
      for (const auto& d : rows) com = std::max(com, std::abs(d.com_joint - rows.front().com_joint));
      j["conservation"] = {{"mass_drift", mass}, {"com_drift", com}, {"com_tolerance", 10.0 * grid.spacing()}};
    }
    if (c.has_suite("symmetry")) {
      // Only symmetries carried by the initial data and the exponents are checked.
      const SpeciesPair& p0 = *initial;
      const double scale = 1e-12 * std::max(lp_norm(p0.rho, INFINITY), lp_norm(p0.eta, INFINITY));
      const bool same_orders = c.exponents.s == c.exponents.r;
      const bool exchange = same_orders && max_defect(p0.rho, p0.eta) <= scale;
      const bool each_mirror = mirror_defect(p0.rho, p0.rho) <= scale && mirror_defect(p0.eta, p0.eta) <= scale;
      const bool cross_mirror = same_orders && mirror_defect(p0.rho, p0.eta) <= scale;
      double ex = 0.0, mir = 0.0;
      for (const auto& it : traj->iterates) {
        if (exchange) ex = std::max(ex, l1_distance(it.pair.rho, it.pair.eta));
        if (each_mirror) mir = std::max({mir, mirror_defect(it.pair.rho, it.pair.rho), mirror_defect(it.pair.eta, it.pair.eta)});
        if (cross_mirror) mir = std::max(mir, mirror_defect(it.pair.rho, it.pair.eta));
      }
      if (exchange) j["symmetry"]["exchange_l1_max"] = ex;
      if (each_mirror || cross_mirror) j["symmetry"]["mirror_max"] = mir;
    }
    if (c.has_suite("crossval")) {
      const FvRun fv = fv_run(*initial, c.crossval_time, FvConfig{c.fv_cfl});
      std::ostringstream csv;
      write_trajectory_csv(csv, fv.rows, "fv");
      write_text(dir / "fv_trajectory.csv", csv.str());
      const CrossValidation cv = cross_validate(*initial, c.crossval_time, sc, FvConfig{c.fv_cfl});
      j["crossval"] = {{"T", c.crossval_time}, {"l1_gap", cv.l1_gap}, {"l1_rho", cv.l1_rho}, {"l1_eta", cv.l1_eta},
                       {"fv_steps", fv.rows.size() - 1}};
    }
    if (c.has_suite("heat")) {
      const DissipationCheck dc = dissipation_identity_check(*initial);
      const SpeciesPair ref = heat_evolve(*initial, 0.05).pair;
      const double ts[] = {0.0, 0.01, 0.02, 0.03, 0.04};
      j["heat"] = {{"dissipation_gap", dc.gap}, {"evi_worst_slack", evi_check(*initial, ref, ts).worst_slack}};
    }
    if (c.has_suite("transport")) {
      SinkhornOptions so;
      so.epsilon = sc.entropic_epsilon;
      const SinkhornResult sk = sinkhorn_w2(initial->rho, fin.rho, so);
      std::ostringstream csv;
      write_plan_csv(csv, sk.plan);
      write_text(dir / "plan_rho.csv", csv.str());
      j["transport"] = {{"w2_rho_initial_final", w2_1d(initial->rho, fin.rho).distance},
                        {"sinkhorn_rho_initial_final", sk.distance}};
    }
  } catch (const IoError& e) {
    return finish(RunStatus::io_error, e.what());
  } catch (const Error& e) {
    return finish(RunStatus::nonconvergence, e.what());
  }
  return finish(status, message);
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("RIESZFLOW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<StudyRow> run_study(const ScenarioConfig& base, RefineAxis axis, std::size_t levels, unsigned threads) {
  if (levels == 0) throw InvalidArgument("a study needs at least one level");
  if (threads == 0) threads = default_thread_count();
  const ValidationReport v = validate_scenario(base);
  if (!v.ok) throw InvalidArgument(v.first_violation);

  std::vector<StudyRow> rows(levels);
  std::vector<std::exception_ptr> errors(levels);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t k = next++; k < levels; k = next++) {
      try {
        ScenarioConfig c = base;
        const double f = std::ldexp(1.0, -static_cast<int>(k));
        if (axis != RefineAxis::grid) c.solver.tau *= f;
        if (axis != RefineAxis::tau) {
          c.cells <<= k;
          if (c.solver.particles > 0) c.solver.particles <<= k;
        }
        const SpeciesPair init = build_initial(c);
        const Trajectory traj = run_trajectory(init, c.solver);
        StudyRow& r = rows[k];
        r.level = k;
        r.tau = c.solver.tau;
        r.cells = c.cells;
        r.particles = c.solver.particle_count(c.grid());
        r.final_energy = traj.diagnostics.back().energy;
        r.weak_residual = weak_form_residual(traj, standard_test_function(c.grid(), c.solver.final_time));
        std::vector<double> res;
        for (std::size_t n = 1; n < traj.diagnostics.size(); ++n) {
          res.push_back(traj.diagnostics[n].res_rho);
          res.push_back(traj.diagnostics[n].res_eta);
        }
        r.median_optimality = median(res);
        if (axis == RefineAxis::both || base.has_suite("crossval")) {
          r.crossval_gap = cross_validate(init, c.crossval_time, c.solver, FvConfig{c.fv_cfl}).l1_gap;
        }
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, levels));
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t k = 1; k < levels; ++k) {
    rows[k].weak_ratio = rows[k].weak_residual / rows[k - 1].weak_residual;
    if (rows[k].crossval_gap && rows[k - 1].crossval_gap) {
      rows[k].crossval_ratio = *rows[k].crossval_gap / *rows[k - 1].crossval_gap;
    }
  }
  return rows;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "level,tau,n,M,final_energy,weak_residual,median_optimality,crossval_gap,weak_ratio,crossval_ratio\n";
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const StudyRow& r : rows) {
    out << r.level << ',' << num(r.tau) << ',' << r.cells << ',' << r.particles << ',' << num(r.final_energy) << ','
        << num(r.weak_residual) << ',' << num(r.median_optimality) << ',' << opt(r.crossval_gap) << ','
        << opt(r.weak_ratio) << ',' << opt(r.crossval_ratio) << '\n';
  }
}

}  // namespace rieszflow
