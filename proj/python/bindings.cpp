#include "vudlmp/scenario.hpp"

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

namespace py = pybind11;
using namespace vudlmp;

namespace {

PhasorSet phasors(const std::array<Complex, 3>& v) { return {v[0], v[1], v[2]}; }

const char* kind_name(PowerKind k) { return k == PowerKind::kActive ? "P" : "Q"; }

py::dict dlmp_row(const NetworkSpec& net, const DlmpBreakdown& d) {
  py::dict r;
  r["bus"] = net.buses[d.bus].id;
  r["phase"] = std::string(1, "abc"[d.phase]);
  r["kind"] = kind_name(d.kind);
  r["total"] = d.total;
  r["energy"] = d.energy;
  r["loss"] = d.loss;
  r["congestion"] = d.congestion;
  r["voltage_limit"] = d.voltage_limit;
  r["unbalance"] = d.unbalance;
  r["residual"] = d.residual;
  return r;
}

py::dict sensitivity_row(const NetworkSpec& net, const SensitivityReport& s) {
  py::dict r;
  r["bus"] = net.buses[s.bus].id;
  r["phase"] = std::string(1, "abc"[s.phase]);
  r["kind"] = kind_name(s.kind);
  r["defined"] = s.defined;
  r["current_pu"] = s.current_magnitude;
  r["closed_form"] = s.defined ? py::cast(s.closed_form) : py::none();
  r["current_only"] = s.defined ? py::cast(s.current_only) : py::none();
  r["finite_difference"] = s.finite_difference;
  r["relative_gap"] = s.defined ? py::cast(s.relative_gap) : py::none();
  r["sign_agrees"] = s.defined ? py::cast(s.sign_agrees) : py::none();
  return r;
}

py::dict result_dict(const NetworkSpec& net, const ScenarioResult& res) {
  py::dict r;
  r["case_id"] = res.case_id;
  r["status"] = res.status();
  r["solver_status"] = to_string(res.solve_status);
  r["message"] = res.message;
  r["iterations"] = res.iterations;
  r["total_gen_cost_eur"] = res.total_gen_cost_eur;
  r["penalty_eur"] = res.penalty_eur;
  r["total_losses_kw"] = res.total_losses_kw;
  r["highest_vuf_pct"] = res.highest_vuf_pct;
  r["vuf_bus"] = res.vuf_bus;
  py::dict kkt;
  kkt["stationarity"] = res.residuals.stationarity;
  kkt["feasibility"] = res.residuals.feasibility;
  kkt["complementarity"] = res.residuals.complementarity;
  r["kkt"] = kkt;
  py::list dlmp, sens;
  for (const auto& d : res.dlmp) dlmp.append(dlmp_row(net, d));
  for (const auto& s : res.sensitivity) sens.append(sensitivity_row(net, s));
  r["dlmp"] = dlmp;
  r["sensitivity"] = sens;
  return r;
}

UnbalanceConfig override_unbalance(const NetworkSpec& net, const std::optional<std::string>& mode,
                                   std::optional<double> limit, std::optional<double> penalty,
                                   const std::optional<std::string>& penalty_on) {
  UnbalanceConfig cfg = net.unbalance;
  if (mode) cfg.mode = parse_mode(*mode);
  if (limit) cfg.vuf_limit_pct = *limit;
  if (penalty) cfg.penalty_weight = *penalty;
  if (penalty_on) cfg.penalty_on = parse_penalty_on(*penalty_on);
  return cfg;
}

SolverSettings settings(double kkt_tol, int max_iter) {
  SolverSettings s;
  s.kkt_tol = kkt_tol;
  s.max_iter = max_iter;
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Three-phase OPF with voltage-unbalance-aware nodal prices";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<PowerFlowError>(m, "PowerFlowError", PyExc_RuntimeError);
  py::register_exception<DegeneratePointError>(m, "DegeneratePointError", PyExc_ValueError);

  m.def("vuf", [](const std::array<Complex, 3>& v) { return vuf(phasors(v)); }, py::arg("v"),
        "Voltage unbalance factor of (va, vb, vc), percent.");
  m.def("f_metric", [](const std::array<Complex, 3>& v) { return f_metric(phasors(v)); }, py::arg("v"),
        "VUF squared, squared percent.");
  m.def("grad_f", [](const std::array<Complex, 3>& v) { return grad_f(phasors(v)).grad; }, py::arg("v"),
        "df/dRe(v_k) + j df/dIm(v_k) for each phase.");

  py::class_<NetworkSpec>(m, "Network")
      .def_static("load", [](const std::filesystem::path& p) { return load_network(p); }, py::arg("path"))
      .def_static("from_json", &parse_network, py::arg("text"))
      .def("to_json", &serialize_network)
      .def_readonly("base_kva", &NetworkSpec::base_kva)
      .def_readonly("base_volt_ln", &NetworkSpec::base_volt_ln)
      .def_readonly("substation_bus", &NetworkSpec::substation_bus)
      .def_property_readonly("buses",
                             [](const NetworkSpec& n) {
                               std::vector<std::string> ids;
                               for (const auto& b : n.buses) ids.push_back(b.id);
                               return ids;
                             })
      .def_property_readonly("unbalance_buses", [](const NetworkSpec& n) { return n.unbalance.buses; })
      .def("__repr__", [](const NetworkSpec& n) {
        return "<Network " + std::to_string(n.num_buses()) + " buses, " + std::to_string(n.lines.size()) + " lines>";
      });

  m.def(
      "power_flow",
      [](const NetworkSpec& net) {
        const OperatingPoint pt = solve_pf(net, nominal_injections(net));
        py::dict volts;
        for (std::size_t b = 0; b < net.num_buses(); ++b)
          volts[py::str(net.buses[b].id)] = std::array<Complex, 3>{pt.v[b].va, pt.v[b].vb, pt.v[b].vc};
        py::dict r;
        r["voltages"] = volts;
        r["losses_kw"] = pt.losses * net.base_kva;
        r["iterations"] = pt.iterations;
        return r;
      },
      py::arg("network"), "Power flow at the default dispatch. Voltages in per-unit.");

  m.def(
      "opf",
      [](const NetworkSpec& net, std::optional<std::string> mode, std::optional<double> limit,
         std::optional<double> penalty, std::optional<std::string> penalty_on, bool sensitivity, double kkt_tol,
         int max_iter, std::string case_id) {
        const UnbalanceConfig cfg = override_unbalance(net, mode, limit, penalty, penalty_on);
        const SolverSettings s = settings(kkt_tol, max_iter);
        ScenarioResult res;
        {
          py::gil_scoped_release release;
          res = run_scenario(net, cfg, s, case_id, sensitivity);
        }
        return result_dict(net, res);
      },
      py::arg("network"), py::arg("mode") = py::none(), py::arg("limit") = py::none(),
      py::arg("penalty") = py::none(), py::arg("penalty_on") = py::none(), py::arg("sensitivity") = false,
      py::arg("kkt_tol") = SolverSettings{}.kkt_tol, py::arg("max_iter") = SolverSettings{}.max_iter,
      py::arg("case_id") = "case",
      "Solve one OPF. Prices are EUR/kWh (EUR/kvarh for reactive); a failed solve has status "
      "'infeasible-or-nonconverged' and empty price lists.");

  m.def(
      "sweep",
      [](const NetworkSpec& net, const std::string& parameter, const std::vector<double>& values,
         std::optional<std::string> penalty_on, int jobs, std::string case_id) {
        SweepParameter p;
        if (parameter == "penalty")
          p = SweepParameter::kPenalty;
        else if (parameter == "limit")
          p = SweepParameter::kLimit;
        else
          throw ValidationError("sweep parameter must be 'penalty' or 'limit'");
        UnbalanceConfig base = net.unbalance;
        if (penalty_on) base.penalty_on = parse_penalty_on(*penalty_on);
        std::vector<ScenarioResult> results;
        {
          py::gil_scoped_release release;
          results = run_sweep(net, base, p, values, SolverSettings{}, case_id, jobs, false);
        }
        py::list out;
        for (const auto& r : results) out.append(result_dict(net, r));
        return out;
      },
      py::arg("network"), py::arg("parameter"), py::arg("values"), py::arg("penalty_on") = py::none(),
      py::arg("jobs") = 0, py::arg("case_id") = "case");

  m.def(
      "sensitivity",
      [](const NetworkSpec& net) {
        std::vector<SensitivityReport> rows;
        {
          py::gil_scoped_release release;
          rows = sensitivity_report(net, solve_pf(net, nominal_injections(net)));
        }
        py::list out;
        for (const auto& r : rows) out.append(sensitivity_row(net, r));
        return out;
      },
      py::arg("network"), "df/dP and df/dQ at the default dispatch, closed form against finite differences.");
}
