// vudlmp: power flow, OPF with unbalance pricing, sweeps and sensitivity reports.
//
// Exit codes: 0 success, 1 configuration or parse error, 2 solver failure.

#include "vudlmp/scenario.hpp"
#include "vudlmp/sequence.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace vudlmp;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSolver = 2;

struct OpfArgs {
  std::string network;
  std::string mode;
  std::optional<double> limit;
  std::optional<double> penalty;
  std::string penalty_on;
  std::string out;
  std::string case_id;
  bool no_timing = false;
  bool no_sensitivity = false;
  double kkt_tol = SolverSettings{}.kkt_tol;
  int max_iter = SolverSettings{}.max_iter;
  bool verbose = false;
};

void print_result(const ScenarioResult& r) {
  std::printf("%-28s %-27s", r.case_id.c_str(), r.status().c_str());
  if (r.ok)
    std::printf(" cost %10.4f EUR  losses %8.4f kW  max VUF %7.4f %% at bus %s  (%d iterations)", r.total_gen_cost_eur,
                r.total_losses_kw, r.highest_vuf_pct, r.vuf_bus.c_str(), r.iterations);
  else
    std::printf(" %s (%s)", to_string(r.solve_status).c_str(), r.message.c_str());
  std::printf("\n");
}

int cmd_pf(const std::string& path, const std::string& out) {
  const NetworkSpec net = load_network(path);
  OperatingPoint pt;
  try {
    pt = solve_pf(net, nominal_injections(net));
  } catch (const PowerFlowError& e) {
    std::fprintf(stderr, "power flow failed: %s\n", e.what());
    return kExitSolver;
  }
  std::ofstream file;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    file.open(std::filesystem::path(out) / "pf.csv", std::ios::binary);
    file << "bus,vmag_a,vmag_b,vmag_c,vang_a_deg,vang_b_deg,vang_c_deg,vuf_pct\n";
  }
  std::printf("%-8s %9s %9s %9s %9s\n", "bus", "|va|", "|vb|", "|vc|", "VUF %");
  for (std::size_t b = 0; b < net.num_buses(); ++b) {
    const auto& v = pt.v[b];
    std::printf("%-8s %9.5f %9.5f %9.5f %9.5f\n", net.buses[b].id.c_str(), std::abs(v.va), std::abs(v.vb), std::abs(v.vc),
                vuf(v));
    if (file.is_open()) {
      constexpr double kDeg = 180.0 / 3.14159265358979323846;
      file << net.buses[b].id << ',' << format_number(std::abs(v.va)) << ',' << format_number(std::abs(v.vb)) << ','
           << format_number(std::abs(v.vc)) << ',' << format_number(std::arg(v.va) * kDeg) << ','
           << format_number(std::arg(v.vb) * kDeg) << ',' << format_number(std::arg(v.vc) * kDeg) << ','
           << format_number(vuf(v)) << '\n';
    }
  }
  std::printf("losses %.4f kW, %d iterations, mismatch %.2e pu\n", pt.losses * net.base_kva, pt.iterations, pt.mismatch);
  return kExitOk;
}

int cmd_opf(const OpfArgs& a) {
  const NetworkSpec net = load_network(a.network);
  UnbalanceConfig cfg = net.unbalance;
  if (!a.mode.empty()) cfg.mode = parse_mode(a.mode);
  if (a.limit) cfg.vuf_limit_pct = *a.limit;
  if (a.penalty) cfg.penalty_weight = *a.penalty;
  if (!a.penalty_on.empty()) cfg.penalty_on = parse_penalty_on(a.penalty_on);
  SolverSettings s;
  s.kkt_tol = a.kkt_tol;
  s.max_iter = a.max_iter;
  s.verbose = a.verbose;
  s.validate();
  const std::string id = a.case_id.empty() ? std::filesystem::path(a.network).stem().stem().string() + "_" + to_string(cfg.mode)
                                           : a.case_id;
  const ScenarioResult r = run_scenario(net, cfg, s, id, !a.no_sensitivity);
  print_result(r);
  if (!a.out.empty()) {
    ReportToggles t;
    t.sensitivity = !a.no_sensitivity;
    write_outputs(a.out, net, {r}, t, !a.no_timing);
  }
  return r.ok ? kExitOk : kExitSolver;
}

int cmd_sweep(const std::string& path, const std::string& out, std::optional<int> jobs, bool no_timing) {
  ScenarioConfig cfg = load_scenario_config(path);
  if (!out.empty()) cfg.output_dir = out;
  if (jobs) cfg.jobs = *jobs;
  if (no_timing) cfg.timing = false;
  if (cfg.sweep == SweepParameter::kNone) throw ValidationError("scenario has no 'sweep' block");
  validate(cfg);
  const NetworkSpec net = load_network(cfg.network);
  const UnbalanceConfig base = cfg.unbalance.value_or(net.unbalance);
  const auto results = run_sweep(net, base, cfg.sweep, cfg.sweep_values, cfg.solver, cfg.case_id, cfg.jobs,
                                 cfg.reports.sensitivity);
  for (const auto& r : results) print_result(r);
  write_outputs(cfg.output_dir, net, results, cfg.reports, cfg.timing);
  for (const auto& r : results)
    if (!r.ok) return kExitSolver;
  return kExitOk;
}

int cmd_sens(const std::string& path, const std::string& out) {
  const NetworkSpec net = load_network(path);
  std::vector<SensitivityReport> rows;
  try {
    rows = sensitivity_report(net, solve_pf(net, nominal_injections(net)));
  } catch (const PowerFlowError& e) {
    std::fprintf(stderr, "power flow failed: %s\n", e.what());
    return kExitSolver;
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_sensitivity_csv(std::filesystem::path(out) / "sensitivity.csv", net, rows);
  }
  int defined = 0, agree = 0;
  double worst = 0.0;
  std::printf("%-8s %-5s %-4s %12s %12s %12s %9s\n", "bus", "phase", "kind", "closed_form", "current_only", "fd", "gap %");
  for (const auto& r : rows) {
    const char* kind = r.kind == PowerKind::kActive ? "P" : "Q";
    if (!r.defined) {
      std::printf("%-8s %-5c %-4s %12s %12s %12.5f %9s\n", net.buses[r.bus].id.c_str(), "abc"[r.phase], kind, "null",
                  "null", r.finite_difference, "null");
      continue;
    }
    ++defined;
    agree += r.sign_agrees ? 1 : 0;
    worst = std::max(worst, r.relative_gap);
    std::printf("%-8s %-5c %-4s %12.5f %12.5f %12.5f %9.2f\n", net.buses[r.bus].id.c_str(), "abc"[r.phase], kind,
                r.closed_form, r.current_only, r.finite_difference, 100.0 * r.relative_gap);
  }
  std::printf("defined %d of %zu, sign agreement %d of %d, largest gap %.2f %%\n", defined, rows.size(), agree, defined,
              100.0 * worst);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-phase OPF with voltage-unbalance-aware nodal prices"};
  app.require_subcommand(1);

  std::string pf_net, pf_out;
  auto* pf = app.add_subcommand("pf", "Power flow at the default dispatch");
  pf->add_option("network", pf_net, "Network JSON")->required();
  pf->add_option("--out", pf_out, "Directory for pf.csv");

  OpfArgs oa;
  auto* opf = app.add_subcommand("opf", "Solve one OPF and decompose its prices");
  opf->add_option("network", oa.network, "Network JSON")->required();
  opf->add_option("--mode", oa.mode, "none, hard or soft (default: the network's own setting)")
      ->check(CLI::IsMember({"none", "hard", "soft"}));
  opf->add_option("--limit", oa.limit, "Hard-mode VUF limit, percent");
  opf->add_option("--penalty", oa.penalty, "Soft-mode weight, EUR/h per squared percent (per percent with --penalty-on=vuf)");
  opf->add_option("--penalty-on", oa.penalty_on, "Penalized quantity: f (VUF squared) or vuf")
      ->check(CLI::IsMember({"f", "vuf"}));
  opf->add_option("--out", oa.out, "Output directory");
  opf->add_option("--case-id", oa.case_id, "Case label in summary.csv");
  opf->add_option("--kkt-tol", oa.kkt_tol, "KKT residual tolerance");
  opf->add_option("--max-iter", oa.max_iter, "Interior-point iteration limit");
  opf->add_flag("--no-timing", oa.no_timing, "Leave wall_ms empty for byte-stable output");
  opf->add_flag("--no-sensitivity", oa.no_sensitivity, "Skip the sensitivity report");
  opf->add_flag("--verbose", oa.verbose, "Print the iteration log");

  std::string sw_cfg, sw_out;
  std::optional<int> sw_jobs;
  bool sw_no_timing = false;
  auto* sweep = app.add_subcommand("sweep", "Run a penalty-weight or VUF-limit sweep from a scenario file");
  sweep->add_option("config", sw_cfg, "Scenario JSON")->required();
  sweep->add_option("--out", sw_out, "Output directory (overrides the scenario)");
  sweep->add_option("--jobs", sw_jobs, "Worker threads (default: all cores)");
  sweep->add_flag("--no-timing", sw_no_timing, "Leave wall_ms empty for byte-stable output");

  std::string se_net, se_out;
  auto* sens = app.add_subcommand("sens", "Unbalance sensitivities at the default dispatch against finite differences");
  sens->add_option("network", se_net, "Network JSON")->required();
  sens->add_option("--out", se_out, "Directory for sensitivity.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pf) return cmd_pf(pf_net, pf_out);
    if (*opf) return cmd_opf(oa);
    if (*sweep) return cmd_sweep(sw_cfg, sw_out, sw_jobs, sw_no_timing);
    if (*sens) return cmd_sens(se_net, se_out);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return kExitSolver;
  }
  return kExitConfig;
}
