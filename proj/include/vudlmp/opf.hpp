#pragma once

// Nonlinear program for the three-phase OPF with an optional voltage-unbalance
// term, either as a hard bound on f = VUF^2 per bus or as a penalty in the
// objective.
//
// Conventions: minimize objective(x) subject to g(x) = 0 and h(x) <= 0, with
// Lagrangian L = objective + sum(lambda * g) + sum(mu * h), mu >= 0. The nodal
// balances are written as  P^c - P^g + sum_j p_ij = 0,  so their multiplier is
// the marginal cost of demand at that bus and phase directly.

#include "vudlmp/netmodel.hpp"
#include "vudlmp/powerflow.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <optional>
#include <string>
#include <vector>

namespace vudlmp {

enum class ConstraintKind {
  kPBalance,
  kQBalance,
  kVMagLo,
  kVMagHi,
  kPgLo,
  kPgHi,
  kQgLo,
  kQgHi,
  kThermal,
  kVufLimit,
  kFlowDefinition,
};

/// Multiplier symbol for each kind. Total over ConstraintKind.
std::string multiplier_symbol(ConstraintKind kind);
std::string to_string(ConstraintKind kind);

/// Polynomial of degree <= 2: constant + sum(c_i x_i) + sum(c_ij x_i x_j).
struct QuadExpr {
  struct Term {
    int i;
    int j;
    double c;
  };
  double constant = 0.0;
  std::vector<std::pair<int, double>> linear;
  std::vector<Term> quad;

  [[nodiscard]] double value(const Eigen::VectorXd& x) const;
  /// Adds scale * gradient entries as (variable, value) pairs.
  void gradient(const Eigen::VectorXd& x, double scale, std::vector<std::pair<int, double>>& out) const;
  /// Adds scale * Hessian, lower triangle only.
  void hessian(double scale, std::vector<Eigen::Triplet<double>>& out) const;
};

struct Constraint {
  ConstraintKind kind;
  bool equality = false;
  int bus = -1;
  int phase = -1;
  int line = -1;
  int end = -1;  // 0 = from-end, 1 = to-end
  int gen = -1;
  bool reactive = false;        // flow definitions: q instead of p
  bool on_fixed_variable = false;  // bound rows of a variable with lower == upper
  QuadExpr expr;                // unused for kVufLimit
  double vuf_bound = 0.0;       // kVufLimit: bound on f, squared percent

  [[nodiscard]] std::string label(const NetworkSpec& net) const;
};

struct VariableLayout {
  int size = 0;
  std::vector<std::array<int, 3>> e;   // per bus, real part of voltage (-1 at the substation)
  std::vector<std::array<int, 3>> f;   // per bus, imaginary part
  std::vector<std::array<int, 3>> pg;  // per generator
  std::vector<std::array<int, 3>> qg;
  std::vector<std::array<std::array<int, 2>, 3>> p;  // per line [phase][end]
  std::vector<std::array<std::array<int, 2>, 3>> q;
  std::vector<std::string> names;
};

struct OpfProblem {
  NetworkSpec net;
  UnbalanceConfig cfg;
  VariableLayout layout;
  std::vector<Constraint> constraints;
  std::vector<std::optional<double>> fixed;  // per variable
  Eigen::VectorXd linear_cost;               // EUR/h per unit of each variable
  std::vector<int> vuf_buses;                // buses carrying the unbalance term

  [[nodiscard]] int num_variables() const { return layout.size; }
  [[nodiscard]] int num_constraints() const { return static_cast<int>(constraints.size()); }
  /// Indices of constraints of the given kind, in build order.
  [[nodiscard]] std::vector<int> constraints_of(ConstraintKind kind) const;
  /// Phasors of a bus read from x (substation is the fixed balanced source).
  [[nodiscard]] PhasorSet bus_voltage(const Eigen::VectorXd& x, int bus) const;
  /// Soft-mode penalty alone, EUR/h.
  [[nodiscard]] double penalty_cost(const Eigen::VectorXd& x) const;
  /// Generation cost alone, EUR/h.
  [[nodiscard]] double generation_cost(const Eigen::VectorXd& x) const;
};

/// Throws ValidationError on infeasible box bounds or an unbalance config that
/// fails its invariants.
OpfProblem build_problem(const NetworkSpec& net, const UnbalanceConfig& cfg);

/// Starting point from a power-flow solution solved with nominal_injections().
Eigen::VectorXd initial_point(const OpfProblem& prob, const OperatingPoint& point);
Eigen::VectorXd flat_start(const OpfProblem& prob);

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OpfEvaluation {
  double objective = 0.0;
  Eigen::VectorXd objective_gradient;
  Eigen::VectorXd constraints;
  Eigen::SparseMatrix<double> jacobian;  // num_constraints x num_variables
  Eigen::SparseMatrix<double> hessian;   // lower triangle of the Lagrangian Hessian; empty without multipliers
};

double eval_objective(const OpfProblem& prob, const Eigen::VectorXd& x);
Eigen::VectorXd eval_objective_gradient(const OpfProblem& prob, const Eigen::VectorXd& x);
Eigen::VectorXd eval_constraints(const OpfProblem& prob, const Eigen::VectorXd& x);
/// Triplets of the constraint Jacobian. The sparsity pattern does not depend on x.
void eval_jacobian(const OpfProblem& prob, const Eigen::VectorXd& x, std::vector<Eigen::Triplet<double>>& out);
/// Lower-triangle triplets of obj_factor * Hessian(objective) + sum(m_k * Hessian(c_k)).
/// The pattern does not depend on x or the multipliers.
void eval_hessian(const OpfProblem& prob, const Eigen::VectorXd& x, double obj_factor,
                  const Eigen::VectorXd& multipliers, std::vector<Eigen::Triplet<double>>& out);

/// Everything at once. Throws EvaluationError naming the first non-finite constraint.
OpfEvaluation eval(const OpfProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd* multipliers = nullptr);

}  // namespace vudlmp
