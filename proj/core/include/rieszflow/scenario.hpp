#pragma once

// Scenario files, initial-data families and the batch drivers behind the CLI.
//
// A scenario is flat "key = value" text; '#' starts a comment. Unknown keys are
// rejected so typos cannot silently fall back to defaults.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rieszflow/errors.hpp"
#include "rieszflow/grid.hpp"
#include "rieszflow/jko.hpp"
#include "rieszflow/refsolver.hpp"

namespace rieszflow {

/// Malformed scenario text (syntax, unknown key, unreadable number).
class ConfigParseError : public IoError {
 public:
  using IoError::IoError;
};

enum class InitialFamily { gaussian, two_gaussian, uniform_bump, csv };

struct InitialSpec {
  InitialFamily family = InitialFamily::two_gaussian;
  double rho_center = -0.5;
  double eta_center = 0.5;
  double rho_width = 0.3;  ///< Gaussian standard deviation or plateau half-width
  double eta_width = 0.3;
  double edge = 0.05;      ///< plateau edge width (uniform-bump)
  std::string rho_csv;
  std::string eta_csv;
};

struct ScenarioConfig {
  ExponentTriple exponents;
  std::size_t cells = 512;
  double box_length = 8.0;
  int padding_factor = 2;
  InitialSpec initial;
  SolverConfig solver;
  std::vector<std::string> suites;
  double crossval_time = 0.1;
  double fv_cfl = 0.4;
  std::uint64_t seed = 20240607;
  std::string output = "out";
  /// Directory of the scenario file; relative CSV paths resolve against it.
  std::string base_dir;

  Grid grid() const { return Grid(cells, box_length, padding_factor); }
  bool has_suite(const std::string& name) const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&);
};

/// Suite names accepted in the "suites" key ("all" expands to every suite).
const std::vector<std::string>& known_suites();

ScenarioConfig parse_scenario(const std::string& text);
/// Reads and parses a file. Throws IoError when unreadable, ConfigParseError when malformed.
ScenarioConfig load_scenario(const std::string& path);
std::string serialize_scenario(const ScenarioConfig& cfg);

/// Builds the initial pair; throws InvalidArgument when the data leave the admissible region.
SpeciesPair build_initial(const ScenarioConfig& cfg);

struct ValidationReport {
  bool ok = true;
  std::string first_violation;  ///< empty when ok
  std::string text;             ///< human-readable constraint report
};

ValidationReport validate_scenario(const ScenarioConfig& cfg);

enum class RunStatus { ok, config_invalid, nonconvergence, io_error };

/// Exit code for a status: 0, 2, 3, 4.
int exit_code(RunStatus status);

struct RunOutcome {
  RunStatus status = RunStatus::ok;
  std::string message;
};

/// Runs the scenario into out_dir (created if missing): trajectory.csv,
/// final_rho.csv, final_eta.csv, summary.json, plus fv_trajectory.csv and
/// plan_rho.csv for the crossval and transport suites.
RunOutcome run_scenario(const ScenarioConfig& cfg, const std::string& out_dir);

enum class RefineAxis { tau, grid, both };

struct StudyRow {
  std::size_t level = 0;
  double tau = 0.0;
  std::size_t cells = 0;
  std::size_t particles = 0;
  double final_energy = 0.0;
  double weak_residual = 0.0;
  double median_optimality = 0.0;
  std::optional<double> crossval_gap;
  std::optional<double> weak_ratio;       ///< this level over the previous one
  std::optional<double> crossval_ratio;
};

/// Bump test function on (0.1 T, 0.9 T) x (inner region of the admissible box).
TestFunction standard_test_function(const Grid& grid, double final_time);

/// Refinement study: level k halves tau, h, or both k times. Levels run
/// concurrently on `threads` workers (0 = RIESZFLOW_THREADS or hardware concurrency).
std::vector<StudyRow> run_study(const ScenarioConfig& cfg, RefineAxis axis, std::size_t levels,
                                unsigned threads = 0);
void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);

/// Worker count from RIESZFLOW_THREADS, else std::thread::hardware_concurrency (at least 1).
unsigned default_thread_count();

}  // namespace rieszflow
