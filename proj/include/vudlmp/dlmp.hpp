#pragma once

// DLMP extraction and decomposition, and the VUF-to-demand sensitivities.
//
// Decomposition convention: a unit of extra demand at (bus, phase) is served
// by the substation with all other generation held fixed. Projecting the
// stationarity conditions of the solved OPF onto the linearized network
// response splits the balance multiplier exactly into
//   energy        the substation price on the same phase,
//   loss          the remaining substation cost of serving the increment,
//   congestion    2 * sum(eta * (p dp + q dq)),
//   voltage_limit sum((sigma_plus - sigma_minus) * d|v|^2),
//   unbalance     sum(psi * df)        (hard), or the penalty slope * df (soft).
// The residual is what the inexact KKT point leaves over.

#include "vudlmp/ipsolver.hpp"
#include "vudlmp/opf.hpp"
#include "vudlmp/powerflow.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace vudlmp {

class DlmpError : public std::runtime_error {
 public:
  DlmpError(SolveStatus status, const std::string& what) : std::runtime_error(what), status_(status) {}
  [[nodiscard]] SolveStatus status() const { return status_; }

 private:
  SolveStatus status_;
};

struct DlmpBreakdown {
  int bus = -1;
  int phase = -1;
  PowerKind kind = PowerKind::kActive;
  // EUR/kWh (EUR/kvarh for reactive).
  double total = 0.0;
  double energy = 0.0;
  double loss = 0.0;
  double congestion = 0.0;
  double voltage_limit = 0.0;
  double unbalance = 0.0;
  double residual = 0.0;

  [[nodiscard]] double component_sum() const { return energy + loss + congestion + voltage_limit + unbalance; }
};

/// Linearized response of the network to a unit demand increment at one
/// (bus, phase) with all generation but the substation's held fixed.
class DemandResponse {
 public:
  DemandResponse(const OpfProblem& prob, const Eigen::VectorXd& x);
  ~DemandResponse();
  DemandResponse(const DemandResponse&) = delete;
  DemandResponse& operator=(const DemandResponse&) = delete;

  /// Direction dx in the full variable space (zero on generator variables).
  [[nodiscard]] Eigen::VectorXd direction(int bus, int phase, PowerKind kind) const;
  /// Change of f at every bus along `dx`, squared percent per pu (0 at the substation).
  [[nodiscard]] std::vector<double> f_change(const Eigen::VectorXd& dx) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One breakdown per (bus, phase, kind), active first, buses in network order.
/// Throws DlmpError when the solve did not succeed.
std::vector<DlmpBreakdown> decompose(const OpfSolution& sol, const OpfProblem& prob);

inline constexpr double kEpsCurrent = 1e-8;

struct SensitivityReport {
  int bus = -1;
  int phase = -1;
  PowerKind kind = PowerKind::kActive;
  bool defined = false;            // false when the incident current is below kEpsCurrent
  double current_magnitude = 0.0;  // |sum of incident currents|, pu
  // df/dP^c (or dQ^c), squared percent per pu of demand.
  double closed_form = 0.0;   // response through the bus Thevenin impedance, see sensitivity_closed_form
  double current_only = 0.0;  // projection on the incident-current gradient alone
  double finite_difference = 0.0;
  double relative_gap = 0.0;  // |closed_form - fd| / |fd|
  bool sign_agrees = false;
};

/// Closed-form sensitivity at one (bus, phase). FD fields are left empty.
///
/// closed_form projects the f gradient on the voltage change caused by the
/// demand increment, with the network upstream reduced to its Thevenin
/// impedance and the constant-power injections fed through the bus (its own
/// and, on radial feeders, those downstream) responding to that same change.
/// Effects through side branches are neglected. current_only is the projection
/// on the incident-current gradient alone.
SensitivityReport sensitivity_closed_form(const NetworkSpec& net, const OperatingPoint& point, int bus, int phase,
                                          PowerKind kind);

inline constexpr double kSensitivityStep = 1e-5;

/// Closed form and central finite differences for every non-substation
/// (bus, phase, kind) at a converged point. Injections are recovered from
/// the point itself.
std::vector<SensitivityReport> sensitivity_report(const NetworkSpec& net, const OperatingPoint& point,
                                                  double step = kSensitivityStep);

}  // namespace vudlmp
