#pragma once

#include "vudlmp/netmodel.hpp"
#include "vudlmp/sequence.hpp"

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <vector>

namespace vudlmp {

/// Net complex power injection (generation minus demand) per bus and phase, per-unit.
using Injections = std::vector<std::array<Complex, 3>>;

enum class PowerKind { kActive, kReactive };

class PowerFlowError : public std::runtime_error {
 public:
  enum class Reason { kDiverged, kSingular };
  PowerFlowError(Reason reason, double last_mismatch, const std::string& what)
      : std::runtime_error(what), reason_(reason), last_mismatch_(last_mismatch) {}
  [[nodiscard]] Reason reason() const { return reason_; }
  [[nodiscard]] double last_mismatch() const { return last_mismatch_; }

 private:
  Reason reason_;
  double last_mismatch_;
};

struct PowerFlowSettings {
  double tol = 1e-10;  // max |power mismatch|, per-unit
  int max_iter = 50;
};

struct LineState {
  std::array<Complex, 3> i_from;  // current leaving the from-bus into the line
  std::array<Complex, 3> s_from;  // p + jq leaving the from-bus
  std::array<Complex, 3> s_to;    // p + jq leaving the to-bus
};

struct OperatingPoint {
  std::vector<PhasorSet> v;  // indexed like NetworkSpec::buses
  std::vector<LineState> lines;
  double losses = 0.0;  // total active losses, per-unit
  int iterations = 0;
  double mismatch = 0.0;

  /// Sum of currents leaving `bus` on `phase` through its incident lines.
  [[nodiscard]] Complex incident_current(const NetworkSpec& net, int bus, int phase) const;
  /// Complex power leaving `bus` on `phase` through its lines (generation minus demand).
  [[nodiscard]] Complex injected_power(const NetworkSpec& net, int bus, int phase) const;
};

/// Series admittance Y = Z^-1 of every line, per-unit.
std::vector<Eigen::Matrix3cd> line_admittances(const NetworkSpec& net);

/// Demand of every load, negated, plus nothing else.
Injections load_injections(const NetworkSpec& net);

/// Loads plus a default dispatch of the non-substation generators: units
/// cheaper than the substation at pmax, the rest at the point of their box
/// closest to zero; reactive output at the point of its box closest to zero.
Injections nominal_injections(const NetworkSpec& net);

/// Per-phase output of one non-substation generator under that default dispatch.
std::array<Complex, 3> nominal_output(const NetworkSpec& net, const GenSpec& gen);

/// Operating point implied by a set of bus voltages (flows, currents, losses).
OperatingPoint point_from_voltages(const NetworkSpec& net, std::vector<PhasorSet> v);

/// Newton power flow on complex nodal voltages in rectangular coordinates,
/// current-injection form. The substation is an ideal balanced 1 pu source.
OperatingPoint solve_pf(const NetworkSpec& net, const Injections& injections, const PowerFlowSettings& settings = {},
                        const OperatingPoint* initial = nullptr);

struct PerturbResult {
  OperatingPoint point;
  double delta_f;  // change of f at the perturbed bus, squared percent
};

/// Re-solves with the demand at (bus, phase) raised by `delta_demand` per-unit
/// of active or reactive power and reports the change of f at that bus.
PerturbResult perturb_and_resolve(const NetworkSpec& net, const Injections& injections, int bus, int phase,
                                  PowerKind kind, double delta_demand, const PowerFlowSettings& settings = {});

}  // namespace vudlmp
