#pragma once

#include "vudlmp/ipsolver.hpp"
#include "vudlmp/netmodel.hpp"
#include "vudlmp/opf.hpp"
#include "vudlmp/sequence.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace vudlmp::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(VUDLMP_DATA_DIR) / name;
}

inline NetworkSpec simple5() { return load_network(data_path("simple5.net.json")); }
inline NetworkSpec eulv117() { return load_network(data_path("eulv117.net.json")); }

inline nlohmann::json simple5_doc() {
  return nlohmann::json::parse(serialize_network(simple5()));
}

/// Seed for randomized cases; VUDLMP_SEED overrides the default.
inline std::uint64_t seed() {
  if (const char* s = std::getenv("VUDLMP_SEED")) return std::strtoull(s, nullptr, 10);
  return 20240611ULL;
}

inline Complex random_complex(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

/// Balanced set plus a random perturbation of relative size `spread`.
inline PhasorSet random_phasors(std::mt19937_64& rng, double spread = 0.2) {
  std::uniform_real_distribution<double> mag(0.5, 1.5), ang(-3.14159, 3.14159);
  PhasorSet v = PhasorSet::balanced(mag(rng), ang(rng));
  for (int k = 0; k < 3; ++k) v[k] += random_complex(rng, spread * std::abs(v[k]));
  return v;
}

inline nlohmann::json cable_line(const std::string& from, const std::string& to, double r, double x, double rm,
                                 double xm, const nlohmann::json& rating = nullptr) {
  nlohmann::json zr = nlohmann::json::array(), zi = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    nlohmann::json rr = nlohmann::json::array(), ri = nlohmann::json::array();
    for (int j = 0; j < 3; ++j) {
      rr.push_back(i == j ? r : rm);
      ri.push_back(i == j ? x : xm);
    }
    zr.push_back(rr);
    zi.push_back(ri);
  }
  return {{"from", from}, {"to", to}, {"z_real", zr}, {"z_imag", zi}, {"s_rating", rating}};
}

inline nlohmann::json substation(const std::string& bus, double cost = 1.0) {
  return {{"bus", bus},
          {"phases", "abc"},
          {"pmin", {nullptr, nullptr, nullptr}},
          {"pmax", {nullptr, nullptr, nullptr}},
          {"qmin", {nullptr, nullptr, nullptr}},
          {"qmax", {nullptr, nullptr, nullptr}},
          {"cost", cost},
          {"is_substation", true}};
}

/// Substation plus one load bus over a short cable with weak mutual coupling.
inline nlohmann::json two_bus_doc(std::array<double, 3> p_kw, std::array<double, 3> q_kvar) {
  nlohmann::json doc;
  doc["base_kva"] = 50.0;
  doc["base_volt_ln"] = 230.0;
  doc["buses"] = {{{"id", "s"}}, {{"id", "n"}}};
  doc["lines"] = {cable_line("s", "n", 0.02, 0.008, 0.0005, 0.002)};
  doc["loads"] = {{{"bus", "n"}, {"p", p_kw}, {"q", q_kvar}}};
  doc["gens"] = {substation("s")};
  return doc;
}

/// Random radial feeder with `n` buses (bus "0" is the substation).
inline nlohmann::json random_feeder_doc(int n, std::uint64_t s) {
  std::mt19937_64 rng(s);
  std::uniform_real_distribution<double> len(0.01, 0.04), kw(0.0, 6.0), pf(0.2, 0.5);
  nlohmann::json doc;
  doc["base_kva"] = 50.0;
  doc["base_volt_ln"] = 230.0;
  doc["buses"] = nlohmann::json::array();
  doc["lines"] = nlohmann::json::array();
  doc["loads"] = nlohmann::json::array();
  for (int i = 0; i < n; ++i) doc["buses"].push_back({{"id", std::to_string(i)}});
  for (int i = 1; i < n; ++i) {
    const int parent = std::uniform_int_distribution<int>(0, i - 1)(rng);
    const double l = len(rng);
    doc["lines"].push_back(cable_line(std::to_string(parent), std::to_string(i), 0.32 * l, 0.30 * l, 0.05 * l,
                                      0.12 * l));
    std::array<double, 3> p{}, q{};
    for (int k = 0; k < 3; ++k) {
      p[k] = kw(rng);
      q[k] = p[k] * pf(rng);
    }
    doc["loads"].push_back({{"bus", std::to_string(i)}, {"p", p}, {"q", q}});
  }
  doc["gens"] = {substation("0")};
  return doc;
}

/// Copy of `net` with extra demand at one (bus, phase), per-unit.
inline NetworkSpec with_extra_demand(const NetworkSpec& net, int bus, int phase, PowerKind kind, double delta) {
  NetworkSpec out = net;
  LoadSpec extra;
  extra.bus = net.buses[bus].id;
  (kind == PowerKind::kActive ? extra.p : extra.q)[phase] = delta;
  out.loads.push_back(extra);
  finalize_network(out);
  return out;
}

/// Inequality rows within `tol` of their bound.
inline std::vector<int> active_set(const OpfProblem& prob, const Eigen::VectorXd& x, double tol = 1e-5) {
  const Eigen::VectorXd c = eval_constraints(prob, x);
  std::vector<int> out;
  for (int i = 0; i < prob.num_constraints(); ++i)
    if (!prob.constraints[i].equality && c(i) > -tol) out.push_back(i);
  return out;
}

struct ShadowPriceCheck {
  double dual = 0.0;         // balance multiplier, EUR/h per pu
  double difference = 0.0;   // central difference of the optimal objective, EUR/h per pu
  bool active_set_changed = false;
  bool solved = false;
};

/// Compares the balance multiplier at (bus, phase) with re-solves under
/// +-eps of extra demand.
inline ShadowPriceCheck shadow_price(const NetworkSpec& net, const UnbalanceConfig& cfg, const SolverSettings& s,
                                     int bus, int phase, PowerKind kind, double eps = 1e-4) {
  ShadowPriceCheck out;
  const OpfProblem base = build_problem(net, cfg);
  const OpfSolution sol = solve(base, nullptr, s);
  if (!sol.success()) return out;
  out.dual = sol.multiplier(base, kind == PowerKind::kActive ? ConstraintKind::kPBalance : ConstraintKind::kQBalance,
                            bus, phase);
  const auto ref = active_set(base, sol.x);
  double obj[2] = {0.0, 0.0};
  for (int side = 0; side < 2; ++side) {
    const OpfProblem p = build_problem(with_extra_demand(net, bus, phase, kind, side == 0 ? eps : -eps), cfg);
    const OpfSolution r = solve(p, nullptr, s);
    if (!r.success()) return out;
    obj[side] = r.objective;
    if (active_set(p, r.x) != ref) out.active_set_changed = true;
  }
  out.difference = (obj[0] - obj[1]) / (2.0 * eps);
  out.solved = true;
  return out;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace vudlmp::test
