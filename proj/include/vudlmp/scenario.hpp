#pragma once

// Scenario execution and report files shared by the command-line tool, the
// acceptance runner and the Python module.

#include "vudlmp/dlmp.hpp"
#include "vudlmp/ipsolver.hpp"
#include "vudlmp/netmodel.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vudlmp {

enum class SweepParameter { kNone, kPenalty, kLimit };

struct ReportToggles {
  bool dlmp = true;
  bool sensitivity = true;
  bool plot_data = true;
};

struct ScenarioConfig {
  std::filesystem::path network;
  std::string case_id;
  std::optional<UnbalanceConfig> unbalance;  // defaults to the network's own block
  SolverSettings solver;
  std::filesystem::path output_dir;
  ReportToggles reports;
  SweepParameter sweep = SweepParameter::kNone;
  std::vector<double> sweep_values;
  int jobs = 0;        // 0: number of hardware threads
  bool timing = true;  // false leaves wall_ms empty so outputs are byte-stable
};

/// Reads a scenario document. Relative paths resolve against `base_dir`.
/// Throws ParseError or ValidationError.
ScenarioConfig parse_scenario_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario_config(const std::filesystem::path& path);
/// Throws ValidationError when a sweep is requested without values, or values are out of range.
void validate(const ScenarioConfig& cfg);

struct StageTimes {
  double powerflow_ms = 0.0;
  double build_ms = 0.0;
  double solve_ms = 0.0;
  double decompose_ms = 0.0;
  double sensitivity_ms = 0.0;
  [[nodiscard]] double total() const { return powerflow_ms + build_ms + solve_ms + decompose_ms + sensitivity_ms; }
};

inline constexpr const char* kFailedStatus = "infeasible-or-nonconverged";

struct ScenarioResult {
  std::string case_id;
  UnbalanceConfig unbalance;
  SolveStatus solve_status = SolveStatus::kNumericalFailure;
  bool ok = false;
  std::string message;
  double total_gen_cost_eur = 0.0;  // one hour of operation
  double penalty_eur = 0.0;
  double total_losses_kw = 0.0;
  double highest_vuf_pct = 0.0;
  std::string vuf_bus;
  int iterations = 0;
  KktResiduals residuals;
  std::vector<DlmpBreakdown> dlmp;
  std::vector<SensitivityReport> sensitivity;
  StageTimes times;

  /// "success" or kFailedStatus.
  [[nodiscard]] std::string status() const { return ok ? "success" : kFailedStatus; }
};

/// Power-flow warm start, OPF build and solve, price decomposition and,
/// optionally, the sensitivity report at the optimum. Never throws for a
/// failed solve; the result carries the failure.
ScenarioResult run_scenario(const NetworkSpec& net, const UnbalanceConfig& unbalance, const SolverSettings& solver,
                            const std::string& case_id, bool with_sensitivity);

/// Independent runs over the sweep values, executed by a pool of `jobs`
/// workers. Results come back in sweep order.
std::vector<ScenarioResult> run_sweep(const NetworkSpec& net, const UnbalanceConfig& base, SweepParameter parameter,
                                      const std::vector<double>& values, const SolverSettings& solver,
                                      const std::string& case_id, int jobs, bool with_sensitivity);

/// Highest VUF over the unbalance subset, percent, and the bus id holding it.
std::pair<double, std::string> highest_vuf(const NetworkSpec& net, const std::vector<PhasorSet>& v);

// Report files. All CSV output is UTF-8 with LF line endings.
void write_summary_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results, bool timing);
void write_dlmp_csv(const std::filesystem::path& path, const NetworkSpec& net,
                    const std::vector<ScenarioResult>& results, PowerKind kind);
void write_sensitivity_csv(const std::filesystem::path& path, const NetworkSpec& net,
                           const std::vector<SensitivityReport>& rows);
/// Long-format (bus, phase, component, value) files for the active and
/// reactive prices of one successful result.
void emit_plot_data(const std::filesystem::path& dir, const NetworkSpec& net, const ScenarioResult& result);
void write_timings_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results);
/// Plain-text notes on units and the decomposition convention.
void write_report_notes(const std::filesystem::path& path, const NetworkSpec& net);

/// Writes every enabled report for the results into `dir`.
void write_outputs(const std::filesystem::path& dir, const NetworkSpec& net, const std::vector<ScenarioResult>& results,
                   const ReportToggles& reports, bool timing);

/// Number formatting used in every CSV: shortest round-trip representation.
std::string format_number(double v);

}  // namespace vudlmp
