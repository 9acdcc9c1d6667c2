#include "vudlmp/scenario.hpp"

#include "vudlmp/sequence.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace vudlmp {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

const char* phase_name(int k) { return k == 0 ? "a" : k == 1 ? "b" : "c"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string nullable(double v) { return std::isfinite(v) ? format_number(v) : "null"; }

UnbalanceConfig parse_unbalance(const json& u, UnbalanceConfig cfg) {
  if (u.contains("mode")) cfg.mode = parse_mode(u.at("mode").get<std::string>());
  if (u.contains("limit_pct")) cfg.vuf_limit_pct = u.at("limit_pct").get<double>();
  if (u.contains("penalty")) cfg.penalty_weight = u.at("penalty").get<double>();
  if (u.contains("penalty_on")) cfg.penalty_on = parse_penalty_on(u.at("penalty_on").get<std::string>());
  if (u.contains("buses")) {
    cfg.buses.clear();
    for (const auto& b : u.at("buses")) cfg.buses.push_back(b.is_string() ? b.get<std::string>() : b.dump());
  }
  return cfg;
}

std::string sweep_case_id(const std::string& base, SweepParameter p, double value) {
  return base + (p == SweepParameter::kLimit ? "_limit=" : "_penalty=") + format_number(value);
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ScenarioConfig parse_scenario_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    if (!doc.is_object()) throw ParseError("scenario document must be an object");
    if (!doc.contains("network")) throw ParseError("scenario needs a 'network' path");
    cfg.network = resolve(doc.at("network").get<std::string>());
    cfg.case_id = doc.value("case_id", cfg.network.stem().stem().string());
    if (doc.contains("unbalance")) cfg.unbalance = parse_unbalance(doc.at("unbalance"), UnbalanceConfig{});
    if (doc.contains("solver")) {
      const auto& s = doc.at("solver");
      cfg.solver.kkt_tol = s.value("kkt_tol", cfg.solver.kkt_tol);
      cfg.solver.mu0 = s.value("mu0", cfg.solver.mu0);
      cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
      cfg.solver.verbose = s.value("verbose", cfg.solver.verbose);
    }
    cfg.output_dir = resolve(doc.value("output", std::string("out")));
    if (doc.contains("reports")) {
      const auto& r = doc.at("reports");
      cfg.reports.dlmp = r.value("dlmp", cfg.reports.dlmp);
      cfg.reports.sensitivity = r.value("sensitivity", cfg.reports.sensitivity);
      cfg.reports.plot_data = r.value("plot_data", cfg.reports.plot_data);
    }
    if (doc.contains("sweep")) {
      const auto& s = doc.at("sweep");
      const std::string param = s.value("parameter", std::string("penalty"));
      if (param == "penalty")
        cfg.sweep = SweepParameter::kPenalty;
      else if (param == "limit")
        cfg.sweep = SweepParameter::kLimit;
      else
        throw ParseError("sweep parameter must be 'penalty' or 'limit'");
      if (!s.contains("values") || !s.at("values").is_array()) throw ParseError("sweep needs a 'values' array");
      cfg.sweep_values = s.at("values").get<std::vector<double>>();
    }
    cfg.jobs = doc.value("jobs", 0);
    cfg.timing = doc.value("timing", true);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario schema error: ") + e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_config(ss.str(), path.parent_path());
}

void validate(const ScenarioConfig& cfg) {
  cfg.solver.validate();
  if (cfg.jobs < 0) throw ValidationError("jobs must be nonnegative");
  if (cfg.sweep == SweepParameter::kNone) return;
  if (cfg.sweep_values.empty()) throw ValidationError("sweep value list is empty");
  for (double v : cfg.sweep_values) {
    if (!std::isfinite(v)) throw ValidationError("sweep values must be finite");
    if (cfg.sweep == SweepParameter::kPenalty && v < 0.0) throw ValidationError("penalty weights must be >= 0");
    if (cfg.sweep == SweepParameter::kLimit && v <= 0.0) throw ValidationError("VUF limits must be > 0");
  }
}

std::pair<double, std::string> highest_vuf(const NetworkSpec& net, const std::vector<PhasorSet>& v) {
  double best = -1.0;
  std::string bus;
  for (int b : net.vuf_bus_indices()) {
    const double u = vuf(v[b]);
    if (u > best) {
      best = u;
      bus = net.buses[b].id;
    }
  }
  return {std::max(best, 0.0), bus};
}

ScenarioResult run_scenario(const NetworkSpec& net, const UnbalanceConfig& unbalance, const SolverSettings& solver,
                            const std::string& case_id, bool with_sensitivity) {
  ScenarioResult res;
  res.case_id = case_id;
  res.unbalance = unbalance;
  if (res.unbalance.buses.empty()) res.unbalance.buses = net.unbalance.buses;

  auto t0 = Clock::now();
  std::optional<OperatingPoint> warm;
  try {
    warm = solve_pf(net, nominal_injections(net));
  } catch (const PowerFlowError&) {
    // The solver falls back to a flat start.
  }
  res.times.powerflow_ms = ms_since(t0);

  t0 = Clock::now();
  const OpfProblem prob = build_problem(net, res.unbalance);
  res.times.build_ms = ms_since(t0);

  t0 = Clock::now();
  const OpfSolution sol = solve(prob, warm ? &*warm : nullptr, solver);
  res.times.solve_ms = ms_since(t0);
  res.solve_status = sol.status;
  res.iterations = sol.iterations;
  res.residuals = sol.residuals;
  res.message = sol.message;
  res.ok = sol.success();
  if (!res.ok) return res;

  std::vector<PhasorSet> v;
  v.reserve(net.num_buses());
  for (int b = 0; b < static_cast<int>(net.num_buses()); ++b) v.push_back(prob.bus_voltage(sol.x, b));
  const OperatingPoint point = point_from_voltages(net, v);
  res.total_gen_cost_eur = prob.generation_cost(sol.x);
  res.penalty_eur = prob.penalty_cost(sol.x);
  res.total_losses_kw = point.losses * net.base_kva;
  NetworkSpec scoped = net;
  scoped.unbalance.buses = res.unbalance.buses;
  std::tie(res.highest_vuf_pct, res.vuf_bus) = highest_vuf(scoped, v);

  t0 = Clock::now();
  try {
    res.dlmp = decompose(sol, prob);
  } catch (const std::exception& e) {
    res.ok = false;
    res.message = std::string("decomposition failed: ") + e.what();
  }
  res.times.decompose_ms = ms_since(t0);

  if (res.ok && with_sensitivity) {
    t0 = Clock::now();
    try {
      res.sensitivity = sensitivity_report(net, point);
    } catch (const PowerFlowError& e) {
      res.message = std::string("sensitivity report incomplete: ") + e.what();
    }
    res.times.sensitivity_ms = ms_since(t0);
  }
  return res;
}

std::vector<ScenarioResult> run_sweep(const NetworkSpec& net, const UnbalanceConfig& base, SweepParameter parameter,
                                      const std::vector<double>& values, const SolverSettings& solver,
                                      const std::string& case_id, int jobs, bool with_sensitivity) {
  if (values.empty()) throw ValidationError("sweep value list is empty");
  std::vector<ScenarioResult> out(values.size());
  auto run_one = [&](std::size_t i) {
    UnbalanceConfig cfg = base;
    if (parameter == SweepParameter::kLimit) {
      cfg.mode = UnbalanceMode::kHard;
      cfg.vuf_limit_pct = values[i];
    } else {
      cfg.mode = UnbalanceMode::kSoft;
      cfg.penalty_weight = values[i];
    }
    const std::string id = sweep_case_id(case_id, parameter, values[i]);
    try {
      out[i] = run_scenario(net, cfg, solver, id, with_sensitivity);
    } catch (const std::exception& e) {
      out[i] = ScenarioResult{};
      out[i].case_id = id;
      out[i].unbalance = cfg;
      out[i].message = e.what();
    }
  };
  int workers = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(values.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) run_one(i);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results, bool timing) {
  auto out = open_out(path);
  out << "case_id,total_gen_cost_eur,total_losses_kw,highest_vuf_pct,vuf_bus,status,wall_ms\n";
  for (const auto& r : results) {
    out << r.case_id << ',';
    if (r.ok)
      out << format_number(r.total_gen_cost_eur) << ',' << format_number(r.total_losses_kw) << ','
          << format_number(r.highest_vuf_pct) << ',' << r.vuf_bus;
    else
      out << ",,,";
    out << ',' << r.status() << ',';
    if (timing) out << format_number(std::round(r.times.total() * 1000.0) / 1000.0);
    out << '\n';
  }
}

void write_dlmp_csv(const std::filesystem::path& path, const NetworkSpec& net,
                    const std::vector<ScenarioResult>& results, PowerKind kind) {
  auto out = open_out(path);
  out << "case_id,bus,phase,total,energy,loss,congestion,voltage_limit,unbalance,residual\n";
  for (const auto& r : results)
    for (const auto& d : r.dlmp) {
      if (d.kind != kind) continue;
      out << r.case_id << ',' << net.buses[d.bus].id << ',' << phase_name(d.phase) << ',' << format_number(d.total)
          << ',' << format_number(d.energy) << ',' << format_number(d.loss) << ',' << format_number(d.congestion)
          << ',' << format_number(d.voltage_limit) << ',' << format_number(d.unbalance) << ','
          << format_number(d.residual) << '\n';
    }
}

void write_sensitivity_csv(const std::filesystem::path& path, const NetworkSpec& net,
                           const std::vector<SensitivityReport>& rows) {
  auto out = open_out(path);
  out << "bus,phase,kind,current_pu,closed_form,current_only,finite_difference,relative_gap,sign_agrees\n";
  for (const auto& r : rows) {
    out << net.buses[r.bus].id << ',' << phase_name(r.phase) << ',' << (r.kind == PowerKind::kActive ? "P" : "Q")
        << ',' << format_number(r.current_magnitude) << ',' << nullable(r.closed_form) << ','
        << nullable(r.current_only) << ',' << nullable(r.finite_difference) << ',' << nullable(r.relative_gap) << ','
        << (r.defined ? (r.sign_agrees ? "true" : "false") : "null") << '\n';
  }
}

void emit_plot_data(const std::filesystem::path& dir, const NetworkSpec& net, const ScenarioResult& result) {
  std::filesystem::create_directories(dir);
  for (PowerKind kind : {PowerKind::kActive, PowerKind::kReactive}) {
    auto out = open_out(dir / (kind == PowerKind::kActive ? "plot_active.csv" : "plot_reactive.csv"));
    out << "bus,phase,component,value\n";
    for (const auto& d : result.dlmp) {
      if (d.kind != kind) continue;
      const std::pair<const char*, double> parts[] = {{"energy", d.energy},
                                                      {"loss", d.loss},
                                                      {"congestion", d.congestion},
                                                      {"voltage_limit", d.voltage_limit},
                                                      {"unbalance", d.unbalance},
                                                      {"total", d.total}};
      for (const auto& [name, value] : parts)
        out << net.buses[d.bus].id << ',' << phase_name(d.phase) << ',' << name << ',' << format_number(value) << '\n';
    }
  }
}

void write_timings_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results) {
  auto out = open_out(path);
  out << "case_id,stage,wall_ms\n";
  for (const auto& r : results) {
    const std::pair<const char*, double> stages[] = {{"powerflow", r.times.powerflow_ms},
                                                     {"build", r.times.build_ms},
                                                     {"solve", r.times.solve_ms},
                                                     {"decompose", r.times.decompose_ms},
                                                     {"sensitivity", r.times.sensitivity_ms}};
    for (const auto& [name, ms] : stages) out << r.case_id << ',' << name << ',' << format_number(ms) << '\n';
  }
}

void write_report_notes(const std::filesystem::path& path, const NetworkSpec& net) {
  auto out = open_out(path);
  out << "Units\n"
      << "  base power per phase: " << format_number(net.base_kva) << " kVA\n"
      << "  base voltage (line to neutral): " << format_number(net.base_volt_ln) << " V\n"
      << "  prices: balance multiplier in EUR/h per pu divided by " << format_number(net.base_kva)
      << " gives EUR/kWh (EUR/kvarh for reactive)\n"
      << "  VUF in percent; f = VUF^2 in squared percent\n"
      << "  sensitivities: squared percent per pu of demand; divide by " << format_number(net.base_kva)
      << " for squared percent per kW\n"
      << "\n"
      << "Price decomposition\n"
      << "  A unit of extra demand at (bus, phase) is served by the substation with all other\n"
      << "  generation fixed. energy is the substation price on the same phase; loss is the rest\n"
      << "  of the substation cost of serving the increment; congestion, voltage_limit and\n"
      << "  unbalance are the thermal, voltage-magnitude and VUF multipliers (or the penalty\n"
      << "  slope) times the change of their constraint. residual = total - sum of components.\n";
}

void write_outputs(const std::filesystem::path& dir, const NetworkSpec& net, const std::vector<ScenarioResult>& results,
                   const ReportToggles& reports, bool timing) {
  std::filesystem::create_directories(dir);
  write_summary_csv(dir / "summary.csv", results, timing);
  if (reports.dlmp) {
    write_dlmp_csv(dir / "dlmp_active.csv", net, results, PowerKind::kActive);
    write_dlmp_csv(dir / "dlmp_reactive.csv", net, results, PowerKind::kReactive);
  }
  if (reports.sensitivity) {
    if (results.size() == 1) {
      write_sensitivity_csv(dir / "sensitivity.csv", net, results.front().sensitivity);
    } else {
      for (const auto& r : results) {
        std::filesystem::create_directories(dir / r.case_id);
        write_sensitivity_csv(dir / r.case_id / "sensitivity.csv", net, r.sensitivity);
      }
    }
  }
  if (reports.plot_data) {
    if (results.size() == 1) {
      if (results.front().ok) emit_plot_data(dir, net, results.front());
    } else {
      for (const auto& r : results) {
        if (!r.ok) continue;
        std::filesystem::create_directories(dir / r.case_id);
        emit_plot_data(dir / r.case_id, net, r);
      }
    }
  }
  if (timing) write_timings_csv(dir / "timings.csv", results);
  write_report_notes(dir / "README.txt", net);
}

}  // namespace vudlmp
