// rieszflow: batch driver for scenario validation, runs and refinement studies.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "rieszflow/scenario.hpp"

namespace {

using namespace rieszflow;

int cmd_validate(const std::string& path) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::io_error);
  }
  const ValidationReport rep = validate_scenario(cfg);
  std::cout << rep.text;
  if (!rep.ok) {
    std::cerr << "invalid: " << rep.first_violation << "\n";
    return exit_code(RunStatus::config_invalid);
  }
  return 0;
}

int cmd_run(const std::string& path, const std::string& out) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::io_error);
  }
  const std::string dir = out.empty() ? cfg.output : out;
  const RunOutcome res = run_scenario(cfg, dir);
  if (res.status != RunStatus::ok) std::cerr << "error: " << res.message << "\n";
  std::cout << "wrote " << dir << " (" << (res.status == RunStatus::ok ? "ok" : "failed") << ")\n";
  return exit_code(res.status);
}

int cmd_study(const std::string& path, const std::string& axis_name, std::size_t levels, const std::string& out,
              unsigned threads) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::io_error);
  }
  const RefineAxis axis = axis_name == "tau" ? RefineAxis::tau : axis_name == "grid" ? RefineAxis::grid : RefineAxis::both;
  try {
    const auto rows = run_study(cfg, axis, levels, threads);
    std::ostringstream csv;
    write_study_csv(csv, rows);
    std::cout << csv.str();
    const std::filesystem::path dir(out.empty() ? cfg.output : out);
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "study.csv", std::ios::binary);
    if (!(f << csv.str())) throw IoError("cannot write " + (dir / "study.csv").string());
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::io_error);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::io_error);
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return exit_code(RunStatus::config_invalid);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(RunStatus::nonconvergence);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-species Riesz interaction flows via minimizing movements"};
  app.require_subcommand(1);

  std::string path, out, axis = "tau";
  std::size_t levels = 1;
  unsigned threads = 0;

  auto* validate = app.add_subcommand("validate", "Check a scenario file against the well-posedness constraints");
  validate->add_option("path", path, "Scenario file")->required();

  auto* run = app.add_subcommand("run", "Run a scenario and write CSV and JSON artifacts");
  run->add_option("path", path, "Scenario file")->required();
  run->add_option("--out", out, "Output directory (default: the scenario's output key)");

  auto* study = app.add_subcommand("study", "Refinement study over tau, the grid, or both");
  study->add_option("path", path, "Scenario file")->required();
  study->add_option("--axis", axis, "Refinement axis")->check(CLI::IsMember({"tau", "grid", "both"}));
  study->add_option("--levels", levels, "Number of refinement levels")->check(CLI::PositiveNumber);
  study->add_option("--out", out, "Output directory for study.csv");
  study->add_option("--threads", threads, "Worker threads (default: RIESZFLOW_THREADS or all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*validate) return cmd_validate(path);
  if (*run) return cmd_run(path, out);
  return cmd_study(path, axis, levels, out, threads);
}
