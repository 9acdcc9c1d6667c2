#pragma once

// Primal-dual interior-point method for OpfProblem.
//
// Multipliers follow the Lagrangian L = objective + lambda' g + mu' h with
// mu >= 0, in EUR/h per unit of constraint violation. A balance multiplier in
// EUR/h per pu converts to EUR/kWh by dividing by base_kva.

#include "vudlmp/opf.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace vudlmp {

struct SolverSettings {
  double kkt_tol = 1e-6;
  double mu0 = 0.1;
  double mu_factor = 0.2;
  double tau = 0.995;
  int max_iter = 300;
  double reg_init = 1e-8;
  bool verbose = false;

  /// Throws std::invalid_argument unless every field is in range.
  void validate() const;
};

enum class SolveStatus { kSuccess, kMaxIter, kInfeasible, kVufInfeasible, kNumericalFailure };
std::string to_string(SolveStatus status);

struct KktResiduals {
  double stationarity = 0.0;     // inf-norm of the Lagrangian gradient
  double feasibility = 0.0;      // inf-norm of equality residuals and inequality violations
  double complementarity = 0.0;  // max |mu_k * h_k|
  double min_inequality_multiplier = 0.0;

  [[nodiscard]] bool within(double tol) const {
    return stationarity < tol && feasibility < tol && complementarity < tol;
  }
};

struct OpfSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  std::string message;
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint, in problem order
  double objective = 0.0;
  KktResiduals residuals;
  int iterations = 0;

  [[nodiscard]] bool success() const { return status == SolveStatus::kSuccess; }
  [[nodiscard]] double multiplier(const OpfProblem& prob, ConstraintKind kind, int bus, int phase) const;
};

/// Residuals at (x, multipliers) recomputed from opf::eval alone.
KktResiduals kkt_residuals(const OpfProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd& multipliers);

/// Starts from a power flow at nominal_injections() unless `warm` is given.
OpfSolution solve(const OpfProblem& prob, const OperatingPoint* warm = nullptr, const SolverSettings& settings = {});

}  // namespace vudlmp
