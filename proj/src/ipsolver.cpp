#include "vudlmp/ipsolver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace vudlmp {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr double kSlackFloor = 1e-2;
constexpr double kZResetBound = 1e10;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 30;
constexpr double kMaxRegularization = 1e40;
constexpr double kObjGradTarget = 100.0;
constexpr double kZeroPivot = 1e-30;

// The problem seen by the iteration: fixed variables removed, rows scaled.
class ReducedProblem {
 public:
  ReducedProblem(const OpfProblem& prob, Eigen::VectorXd x_full) : prob_(prob), x_base_(std::move(x_full)) {
    const int n_full = prob.num_variables();
    col_.assign(n_full, -1);
    for (int i = 0; i < n_full; ++i)
      if (!prob.fixed[i]) {
        col_[i] = static_cast<int>(free_.size());
        free_.push_back(i);
      } else {
        x_base_(i) = *prob.fixed[i];
      }
    row_.assign(prob.num_constraints(), -1);
    for (int k = 0; k < prob.num_constraints(); ++k) {
      const auto& c = prob.constraints[k];
      if (c.equality) {
        row_[k] = static_cast<int>(eq_.size());
        eq_.push_back(k);
      }
    }
    for (int k = 0; k < prob.num_constraints(); ++k) {
      const auto& c = prob.constraints[k];
      if (!c.equality && !c.on_fixed_variable) {
        row_[k] = static_cast<int>(in_.size());
        in_.push_back(k);
      }
    }
    scale_.setOnes(prob.num_constraints());
  }

  [[nodiscard]] int n() const { return static_cast<int>(free_.size()); }
  [[nodiscard]] int m_eq() const { return static_cast<int>(eq_.size()); }
  [[nodiscard]] int m_in() const { return static_cast<int>(in_.size()); }
  [[nodiscard]] double obj_scale() const { return obj_scale_; }
  [[nodiscard]] const Eigen::VectorXd& row_scale() const { return scale_; }
  [[nodiscard]] const std::vector<int>& eq_rows() const { return eq_; }
  [[nodiscard]] const std::vector<int>& in_rows() const { return in_; }

  [[nodiscard]] Eigen::VectorXd reduce(const Eigen::VectorXd& x_full) const {
    Eigen::VectorXd x(n());
    for (int i = 0; i < n(); ++i) x(i) = x_full(free_[i]);
    return x;
  }

  [[nodiscard]] Eigen::VectorXd expand(const Eigen::VectorXd& x) const {
    Eigen::VectorXd full = x_base_;
    for (int i = 0; i < n(); ++i) full(free_[i]) = x(i);
    return full;
  }

  // Gradient-based scaling at the starting point.
  void compute_scaling(const Eigen::VectorXd& x) {
    const Eigen::VectorXd full = expand(x);
    const Eigen::VectorXd g = eval_objective_gradient(prob_, full);
    double gmax = 0.0;
    for (int i = 0; i < n(); ++i) gmax = std::max(gmax, std::abs(g(free_[i])));
    obj_scale_ = gmax > kObjGradTarget ? kObjGradTarget / gmax : 1.0;
    Triplets trip;
    eval_jacobian(prob_, full, trip);
    Eigen::VectorXd row_max = Eigen::VectorXd::Zero(prob_.num_constraints());
    for (const auto& t : trip)
      if (col_[t.col()] >= 0) row_max(t.row()) = std::max(row_max(t.row()), std::abs(t.value()));
    for (int k = 0; k < prob_.num_constraints(); ++k) scale_(k) = 1.0 / std::max(1.0, row_max(k));
  }

  struct Values {
    double f = 0.0;
    Eigen::VectorXd grad;
    Eigen::VectorXd c_eq;
    Eigen::VectorXd c_in;
  };

  [[nodiscard]] double objective(const Eigen::VectorXd& x) const {
    return obj_scale_ * eval_objective(prob_, expand(x));
  }

  [[nodiscard]] Values values(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd full = expand(x);
    Values v;
    v.f = obj_scale_ * eval_objective(prob_, full);
    const Eigen::VectorXd g = eval_objective_gradient(prob_, full);
    v.grad.resize(n());
    for (int i = 0; i < n(); ++i) v.grad(i) = obj_scale_ * g(free_[i]);
    const Eigen::VectorXd c = eval_constraints(prob_, full);
    v.c_eq.resize(m_eq());
    v.c_in.resize(m_in());
    for (int r = 0; r < m_eq(); ++r) v.c_eq(r) = scale_(eq_[r]) * c(eq_[r]);
    for (int r = 0; r < m_in(); ++r) v.c_in(r) = scale_(in_[r]) * c(in_[r]);
    for (int r = 0; r < m_eq(); ++r)
      if (!std::isfinite(v.c_eq(r))) throw EvaluationError("non-finite " + prob_.constraints[eq_[r]].label(prob_.net));
    for (int r = 0; r < m_in(); ++r)
      if (!std::isfinite(v.c_in(r))) throw EvaluationError("non-finite " + prob_.constraints[in_[r]].label(prob_.net));
    if (!std::isfinite(v.f)) throw EvaluationError("non-finite objective");
    return v;
  }

  void jacobians(const Eigen::VectorXd& x, SpMat& j_eq, SpMat& j_in) const {
    Triplets trip, te, ti;
    eval_jacobian(prob_, expand(x), trip);
    for (const auto& t : trip) {
      const int c = col_[t.col()];
      if (c < 0) continue;
      const int k = t.row();
      const int r = row_[k];
      if (r < 0) continue;
      (prob_.constraints[k].equality ? te : ti).emplace_back(r, c, scale_(k) * t.value());
    }
    j_eq.resize(m_eq(), n());
    j_in.resize(m_in(), n());
    j_eq.setFromTriplets(te.begin(), te.end());
    j_in.setFromTriplets(ti.begin(), ti.end());
  }

  // Lower-triangle Hessian of the scaled Lagrangian, offset into `out`.
  void hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z, Triplets& out) const {
    Eigen::VectorXd mult = Eigen::VectorXd::Zero(prob_.num_constraints());
    for (int r = 0; r < m_eq(); ++r) mult(eq_[r]) = scale_(eq_[r]) * y(r);
    for (int r = 0; r < m_in(); ++r) mult(in_[r]) = scale_(in_[r]) * z(r);
    Triplets trip;
    eval_hessian(prob_, expand(x), obj_scale_, mult, trip);
    for (const auto& t : trip) {
      const int r = col_[t.row()];
      const int c = col_[t.col()];
      if (r < 0 || c < 0) continue;
      out.emplace_back(std::max(r, c), std::min(r, c), t.value());
    }
  }

  // Multipliers in problem order and units; bound rows of fixed variables
  // take whatever closes stationarity in their variable.
  [[nodiscard]] Eigen::VectorXd full_multipliers(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd& z) const {
    Eigen::VectorXd mult = Eigen::VectorXd::Zero(prob_.num_constraints());
    for (int r = 0; r < m_eq(); ++r) mult(eq_[r]) = scale_(eq_[r]) * y(r) / obj_scale_;
    for (int r = 0; r < m_in(); ++r) mult(in_[r]) = scale_(in_[r]) * z(r) / obj_scale_;
    const Eigen::VectorXd full = expand(x);
    Eigen::VectorXd grad = eval_objective_gradient(prob_, full);
    Triplets trip;
    eval_jacobian(prob_, full, trip);
    for (const auto& t : trip)
      if (col_[t.col()] < 0 && !prob_.constraints[t.row()].on_fixed_variable)
        grad(t.col()) += mult(t.row()) * t.value();
    for (int k = 0; k < prob_.num_constraints(); ++k) {
      const auto& c = prob_.constraints[k];
      if (!c.on_fixed_variable) continue;
      const int var = c.expr.linear.front().first;
      const double r = grad(var);
      const bool lower = c.expr.linear.front().second < 0.0;
      mult(k) = lower ? std::max(r, 0.0) : std::max(-r, 0.0);
    }
    return mult;
  }

 private:
  const OpfProblem& prob_;
  Eigen::VectorXd x_base_;
  std::vector<int> free_;
  std::vector<int> col_;
  std::vector<int> eq_;
  std::vector<int> in_;
  std::vector<int> row_;
  Eigen::VectorXd scale_;
  double obj_scale_ = 1.0;
};

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double tau) {
  double alpha = 1.0;
  for (int i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) alpha = std::min(alpha, -tau * v(i) / dv(i));
  return alpha;
}

struct Iterate {
  Eigen::VectorXd x, s, y, z;
};

class KktSystem {
 public:
  KktSystem(int n, int m_eq, int m_in) : n_(n), me_(m_eq), mi_(m_in) {}

  // Returns false when the regularization ran away.
  bool factor(const Triplets& hess, const SpMat& j_eq, const SpMat& j_in, const Eigen::VectorXd& sigma_inv,
              double reg_init, double mu) {
    const int dim = n_ + me_ + mi_;
    double delta_w = 0.0;
    double delta_c = 0.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      Triplets trip = hess;
      trip.reserve(hess.size() + j_eq.nonZeros() + j_in.nonZeros() + dim);
      for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, delta_w);
      for (int k = 0; k < j_eq.outerSize(); ++k)
        for (SpMat::InnerIterator it(j_eq, k); it; ++it) trip.emplace_back(n_ + it.row(), it.col(), it.value());
      for (int k = 0; k < j_in.outerSize(); ++k)
        for (SpMat::InnerIterator it(j_in, k); it; ++it) trip.emplace_back(n_ + me_ + it.row(), it.col(), it.value());
      for (int r = 0; r < me_; ++r) trip.emplace_back(n_ + r, n_ + r, -delta_c);
      for (int r = 0; r < mi_; ++r) trip.emplace_back(n_ + me_ + r, n_ + me_ + r, -sigma_inv(r) - delta_c);
      mat_.resize(dim, dim);
      mat_.setFromTriplets(trip.begin(), trip.end());
      if (!analyzed_) {
        ldlt_.analyzePattern(mat_);
        analyzed_ = true;
      }
      ldlt_.factorize(mat_);
      int pos = 0, neg = 0, zero = 0;
      if (ldlt_.info() == Eigen::Success) {
        const Eigen::VectorXd d = ldlt_.vectorD();
        for (int i = 0; i < d.size(); ++i) {
          if (std::abs(d(i)) <= kZeroPivot) {
            ++zero;
          } else if (d(i) > 0.0) {
            ++pos;
          } else {
            ++neg;
          }
        }
      } else {
        zero = 1;
      }
      if (std::getenv("VUDLMP_DEBUG_KKT")) std::fprintf(stderr, "  kkt dw %.1e dc %.1e pos %d/%d neg %d/%d zero %d info %d\n", delta_w, delta_c, pos, n_, neg, me_ + mi_, zero, int(ldlt_.info()));
      if (zero == 0 && pos == n_ && neg == me_ + mi_) {
        if (delta_w > 0.0) last_delta_w_ = delta_w;
        return true;
      }
      if (zero > 0 && delta_c == 0.0) {
        delta_c = 1e-8 * std::pow(mu, 0.25);
        continue;
      }
      if (delta_w == 0.0) {
        delta_w = last_delta_w_ > 0.0 ? std::max(reg_init, last_delta_w_ / 3.0) : reg_init;
      } else {
        delta_w *= 2.0;
      }
      if (delta_w > kMaxRegularization) return false;
    }
    return false;
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    for (int refine = 0; refine < 2; ++refine) {
      const Eigen::VectorXd resid = rhs - mat_.selfadjointView<Eigen::Lower>() * sol;
      if (inf_norm(resid) <= 1e-14 * std::max(1.0, inf_norm(rhs))) break;
      sol += ldlt_.solve(resid);
    }
    return sol;
  }

 private:
  int n_, me_, mi_;
  SpMat mat_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
  double last_delta_w_ = 0.0;
};

// Least-squares equality multipliers at the start.
Eigen::VectorXd initial_multipliers(int n, const SpMat& j_eq, const Eigen::VectorXd& rhs_x) {
  const int me = static_cast<int>(j_eq.rows());
  Triplets trip;
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
  for (int k = 0; k < j_eq.outerSize(); ++k)
    for (SpMat::InnerIterator it(j_eq, k); it; ++it) trip.emplace_back(n + it.row(), it.col(), it.value());
  for (int r = 0; r < me; ++r) trip.emplace_back(n + r, n + r, -1e-8);
  SpMat mat(n + me, n + me);
  mat.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(mat);
  if (ldlt.info() != Eigen::Success) return Eigen::VectorXd::Zero(me);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + me);
  rhs.head(n) = rhs_x;
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  Eigen::VectorXd y = sol.tail(me);
  if (!y.allFinite() || inf_norm(y) > 1e3) y.setZero();
  return y;
}

}  // namespace

void SolverSettings::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(kkt_tol) || kkt_tol >= 1.0) throw std::invalid_argument("kkt_tol must be in (0, 1)");
  if (!positive(mu0)) throw std::invalid_argument("mu0 must be positive");
  if (!positive(mu_factor) || mu_factor >= 1.0) throw std::invalid_argument("mu_factor must be in (0, 1)");
  if (!positive(tau) || tau >= 1.0) throw std::invalid_argument("tau must be in (0, 1)");
  if (max_iter <= 0) throw std::invalid_argument("max_iter must be positive");
  if (!positive(reg_init)) throw std::invalid_argument("reg_init must be positive");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kSuccess: return "success";
    case SolveStatus::kMaxIter: return "max-iter";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kVufInfeasible: return "vuf-infeasible";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "?";
}

double OpfSolution::multiplier(const OpfProblem& prob, ConstraintKind kind, int bus, int phase) const {
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const auto& c = prob.constraints[k];
    if (c.kind == kind && c.bus == bus && c.phase == phase) return multipliers(k);
  }
  throw std::out_of_range("no " + to_string(kind) + " constraint at that bus and phase");
}

KktResiduals kkt_residuals(const OpfProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd& multipliers) {
  const OpfEvaluation ev = eval(prob, x);
  KktResiduals res;
  const Eigen::VectorXd grad = ev.objective_gradient + ev.jacobian.transpose() * multipliers;
  res.stationarity = inf_norm(grad);
  res.min_inequality_multiplier = kInf;
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const double c = ev.constraints(k);
    if (prob.constraints[k].equality) {
      res.feasibility = std::max(res.feasibility, std::abs(c));
    } else {
      res.feasibility = std::max(res.feasibility, std::max(c, 0.0));
      res.complementarity = std::max(res.complementarity, std::abs(multipliers(k) * c));
      res.min_inequality_multiplier = std::min(res.min_inequality_multiplier, multipliers(k));
    }
  }
  if (!std::isfinite(res.min_inequality_multiplier)) res.min_inequality_multiplier = 0.0;
  return res;
}

OpfSolution solve(const OpfProblem& prob, const OperatingPoint* warm, const SolverSettings& settings) {
  settings.validate();
  OpfSolution out;

  Eigen::VectorXd x_full;
  try {
    if (warm != nullptr) {
      x_full = initial_point(prob, *warm);
    } else {
      const OperatingPoint pf = solve_pf(prob.net, nominal_injections(prob.net));
      x_full = initial_point(prob, pf);
    }
  } catch (const PowerFlowError&) {
    x_full = flat_start(prob);
  }

  ReducedProblem rp(prob, x_full);
  const int n = rp.n();
  const int me = rp.m_eq();
  const int mi = rp.m_in();

  Iterate it;
  it.x = rp.reduce(x_full);
  ReducedProblem::Values val;
  try {
    rp.compute_scaling(it.x);
    val = rp.values(it.x);
  } catch (const std::exception& e) {
    out.status = SolveStatus::kNumericalFailure;
    out.message = std::string("cannot evaluate the starting point: ") + e.what();
    out.x = x_full;
    out.multipliers = Eigen::VectorXd::Zero(prob.num_constraints());
    return out;
  }

  double mu = settings.mu0;
  const double mu_min = settings.kkt_tol * std::min(1.0, rp.obj_scale()) / 10.0;
  it.s = (-val.c_in).cwiseMax(kSlackFloor);
  it.z = (mu / it.s.array()).matrix();

  SpMat j_eq, j_in;
  rp.jacobians(it.x, j_eq, j_in);
  it.y = initial_multipliers(n, j_eq, -(val.grad + j_in.transpose() * it.z));

  KktSystem kkt(n, me, mi);
  double nu = 1.0;
  int tiny_steps = 0;
  const bool has_vuf_rows = !prob.constraints_of(ConstraintKind::kVufLimit).empty();

  auto finish = [&](SolveStatus status, std::string message) {
    out.status = status;
    out.message = std::move(message);
    out.x = rp.expand(it.x);
    try {
      out.multipliers = rp.full_multipliers(it.x, it.y, it.z);
      out.objective = eval_objective(prob, out.x);
      out.residuals = kkt_residuals(prob, out.x, out.multipliers);
    } catch (const std::exception& e) {
      out.multipliers = Eigen::VectorXd::Zero(prob.num_constraints());
      out.status = SolveStatus::kNumericalFailure;
      out.message += std::string("; final evaluation failed: ") + e.what();
    }
    return out;
  };

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd r_d = val.grad + j_eq.transpose() * it.y + j_in.transpose() * it.z;
    const Eigen::VectorXd r_p = val.c_in + it.s;

    // Convergence on unscaled quantities.
    const double os = rp.obj_scale();
    double feas = 0.0;
    for (int r = 0; r < me; ++r) feas = std::max(feas, std::abs(val.c_eq(r)) / rp.row_scale()(rp.eq_rows()[r]));
    double comp = 0.0;
    for (int r = 0; r < mi; ++r) {
      const double d = rp.row_scale()(rp.in_rows()[r]);
      feas = std::max(feas, std::max(val.c_in(r), 0.0) / d);
      comp = std::max(comp, std::abs(it.z(r) * val.c_in(r)) / os);
    }
    const double stat = inf_norm(r_d) / os;
    if (settings.verbose)
      std::fprintf(stderr, "iter %3d  obj %.10e  stat %.2e  feas %.2e  comp %.2e  mu %.1e\n", iter, val.f / os, stat,
                   feas, comp, mu);
    if (stat < settings.kkt_tol && feas < settings.kkt_tol && comp < settings.kkt_tol) {
      const auto res = kkt_residuals(prob, rp.expand(it.x), rp.full_multipliers(it.x, it.y, it.z));
      if (res.within(settings.kkt_tol)) return finish(SolveStatus::kSuccess, "converged");
    }
    if (iter == settings.max_iter) break;

    // Barrier parameter update.
    auto barrier_error = [&](double m) {
      const double smax = 100.0;
      const double sd = std::max(smax, (it.y.lpNorm<1>() + it.z.lpNorm<1>()) / std::max(1, me + mi)) / smax;
      const double sc = std::max(smax, it.z.lpNorm<1>() / std::max(1, mi)) / smax;
      Eigen::VectorXd rc = (it.s.array() * it.z.array() - m).matrix();
      return std::max({inf_norm(r_d) / sd, inf_norm(val.c_eq), inf_norm(r_p), inf_norm(rc) / sc});
    };
    while (mu > mu_min && barrier_error(mu) <= 10.0 * mu)
      mu = std::max(mu_min, std::min(settings.mu_factor * mu, std::pow(mu, 1.5)));
    const double tau = std::max(settings.tau, 1.0 - mu);

    // Newton step.
    Triplets hess;
    try {
      rp.hessian(it.x, it.y, it.z, hess);
    } catch (const std::exception& e) {
      return finish(SolveStatus::kNumericalFailure, std::string("Hessian evaluation failed: ") + e.what());
    }
    const Eigen::VectorXd sigma_inv = (it.s.array() / it.z.array()).matrix();
    if (!kkt.factor(hess, j_eq, j_in, sigma_inv, settings.reg_init, mu))
      return finish(SolveStatus::kNumericalFailure, "KKT regularization diverged");
    const Eigen::VectorXd r_c = (it.s.array() * it.z.array() - mu).matrix();
    Eigen::VectorXd rhs(n + me + mi);
    rhs.head(n) = -r_d;
    rhs.segment(n, me) = -val.c_eq;
    rhs.tail(mi) = -r_p + (r_c.array() / it.z.array()).matrix();
    const Eigen::VectorXd sol = kkt.solve(rhs);
    if (!sol.allFinite()) return finish(SolveStatus::kNumericalFailure, "non-finite Newton step");
    const Eigen::VectorXd dx = sol.head(n);
    const Eigen::VectorXd dy = sol.segment(n, me);
    const Eigen::VectorXd dz = sol.tail(mi);
    const Eigen::VectorXd ds = -r_p - j_in * dx;

    const double alpha_p_max = max_step(it.s, ds, tau);
    const double alpha_d = max_step(it.z, dz, tau);

    // l1 merit line search.
    const double mult_max = std::max(inf_norm(it.y + dy), inf_norm(it.z + dz));
    if (nu < 1.1 * mult_max) nu = std::max(2.0 * nu, 1.1 * mult_max);
    auto merit = [&](double f, const Eigen::VectorXd& c_eq, const Eigen::VectorXd& c_in, const Eigen::VectorXd& s) {
      return f - mu * s.array().log().sum() + nu * (c_eq.lpNorm<1>() + (c_in + s).lpNorm<1>());
    };
    const double phi0 = merit(val.f, val.c_eq, val.c_in, it.s);
    const double dphi = val.grad.dot(dx) - mu * (ds.array() / it.s.array()).sum() -
                        nu * (val.c_eq.lpNorm<1>() + r_p.lpNorm<1>());
    double alpha = alpha_p_max;
    bool accepted = false;
    ReducedProblem::Values trial;
    Eigen::VectorXd x_trial, s_trial;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_trial = it.x + alpha * dx;
      s_trial = it.s + alpha * ds;
      try {
        trial = rp.values(x_trial);
        const double phi = merit(trial.f, trial.c_eq, trial.c_in, s_trial);
        if (std::isfinite(phi) && (dphi >= 0.0 || phi <= phi0 + kArmijo * alpha * dphi)) {
          accepted = true;
          break;
        }
      } catch (const EvaluationError&) {
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Fall back to the full fraction-to-boundary step.
      alpha = alpha_p_max;
      x_trial = it.x + alpha * dx;
      s_trial = it.s + alpha * ds;
      try {
        trial = rp.values(x_trial);
      } catch (const EvaluationError& e) {
        return finish(SolveStatus::kNumericalFailure, std::string("step leaves the evaluation domain: ") + e.what());
      }
    }
    tiny_steps = alpha * inf_norm(dx) < 1e-14 * std::max(1.0, inf_norm(it.x)) ? tiny_steps + 1 : 0;

    it.x = x_trial;
    it.s = s_trial;
    it.y += alpha * dy;
    it.z += alpha_d * dz;
    for (int r = 0; r < mi; ++r)
      it.z(r) = std::clamp(it.z(r), mu / (kZResetBound * it.s(r)), kZResetBound * mu / it.s(r));
    val = std::move(trial);
    rp.jacobians(it.x, j_eq, j_in);

    if (tiny_steps >= 10) break;
  }

  // Classify the failure.
  double infeas = 0.0;
  bool vuf_violated = false;
  const Eigen::VectorXd c = eval_constraints(prob, rp.expand(it.x));
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const auto& con = prob.constraints[k];
    const double v = con.equality ? std::abs(c(k)) : std::max(c(k), 0.0);
    infeas = std::max(infeas, v);
    if (con.kind == ConstraintKind::kVufLimit && v > settings.kkt_tol) vuf_violated = true;
  }
  if (infeas > 1e-4) {
    if (has_vuf_rows && vuf_violated)
      return finish(SolveStatus::kVufInfeasible, "VUF limit appears infeasible (constraint violation persists)");
    return finish(SolveStatus::kInfeasible, "problem appears infeasible (constraint violation persists)");
  }
  return finish(SolveStatus::kMaxIter, tiny_steps >= 10 ? "step size collapsed" : "iteration limit reached");
}

}  // namespace vudlmp
