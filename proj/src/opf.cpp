#include "vudlmp/opf.hpp"

#include "vudlmp/sequence.hpp"

#include <algorithm>
#include <cmath>

namespace vudlmp {

namespace {

const char* kPhaseNames[] = {"a", "b", "c"};

// A factor of a bilinear product: either variable `var` or the constant `value`.
struct Ref {
  int var = -1;
  double value = 0.0;
};

void add_product(QuadExpr& e, Ref a, Ref b, double c) {
  if (c == 0.0) return;
  if (a.var >= 0 && b.var >= 0) {
    e.quad.push_back({std::max(a.var, b.var), std::min(a.var, b.var), c});
  } else if (a.var >= 0) {
    e.linear.emplace_back(a.var, c * b.value);
  } else if (b.var >= 0) {
    e.linear.emplace_back(b.var, c * a.value);
  } else {
    e.constant += c * a.value * b.value;
  }
}

constexpr double kSqrtFloor = 1e-12;

// Soft-penalty value, first and second derivative scale with respect to f.
struct PenaltyShape {
  double value;
  double d1;
  double d2;
};

PenaltyShape penalty_shape(PenaltyOn on, double weight, double f) {
  if (on == PenaltyOn::kSquared) return {weight * f, weight, 0.0};
  const double fs = std::max(f, kSqrtFloor);
  const double r = std::sqrt(fs);
  return {weight * std::sqrt(std::max(f, 0.0)), weight / (2.0 * r), -weight / (4.0 * fs * r)};
}

std::array<int, 6> voltage_vars(const OpfProblem& prob, int bus) {
  const auto& e = prob.layout.e[bus];
  const auto& f = prob.layout.f[bus];
  return {e[0], f[0], e[1], f[1], e[2], f[2]};
}

void add_vuf_gradient(const OpfProblem& prob, int bus, const PhasorSet& v, double scale,
                      std::vector<std::pair<int, double>>& out) {
  const auto vars = voltage_vars(prob, bus);
  if (vars[0] < 0) return;
  const auto g = grad_f(v);
  for (int k = 0; k < 3; ++k) {
    out.emplace_back(vars[2 * k], scale * g.grad[k].real());
    out.emplace_back(vars[2 * k + 1], scale * g.grad[k].imag());
  }
}

// scale_h * hess(f) + scale_gg * grad(f) grad(f)^T, lower triangle.
void add_vuf_hessian(const OpfProblem& prob, int bus, const PhasorSet& v, double scale_h, double scale_gg,
                     std::vector<Eigen::Triplet<double>>& out) {
  const auto vars = voltage_vars(prob, bus);
  if (vars[0] < 0) return;
  Eigen::Matrix<double, 6, 6> h = scale_h * hess_f(v);
  if (scale_gg != 0.0) {
    const auto g = grad_f(v);
    Eigen::Matrix<double, 6, 1> gv;
    for (int k = 0; k < 3; ++k) {
      gv(2 * k) = g.grad[k].real();
      gv(2 * k + 1) = g.grad[k].imag();
    }
    h += scale_gg * gv * gv.transpose();
  }
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      const int vr = vars[r];
      const int vc = vars[c];
      if (vr >= vc) out.emplace_back(vr, vc, h(r, c));
    }
}

double constraint_value(const OpfProblem& prob, const Constraint& con, const Eigen::VectorXd& x) {
  if (con.kind == ConstraintKind::kVufLimit) {
    if (prob.layout.e[con.bus][0] < 0) return -con.vuf_bound;
    return f_metric(prob.bus_voltage(x, con.bus)) - con.vuf_bound;
  }
  return con.expr.value(x);
}

}  // namespace

std::string multiplier_symbol(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kPBalance: return "phi_p";
    case ConstraintKind::kQBalance: return "phi_q";
    case ConstraintKind::kVMagLo: return "sigma_minus";
    case ConstraintKind::kVMagHi: return "sigma_plus";
    case ConstraintKind::kPgLo: return "delta_minus";
    case ConstraintKind::kPgHi: return "delta_plus";
    case ConstraintKind::kQgLo: return "theta_minus";
    case ConstraintKind::kQgHi: return "theta_plus";
    case ConstraintKind::kThermal: return "eta";
    case ConstraintKind::kVufLimit: return "psi";
    case ConstraintKind::kFlowDefinition: return "kappa";
  }
  return "?";
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kPBalance: return "p_balance";
    case ConstraintKind::kQBalance: return "q_balance";
    case ConstraintKind::kVMagLo: return "v_mag_lo";
    case ConstraintKind::kVMagHi: return "v_mag_hi";
    case ConstraintKind::kPgLo: return "pg_lo";
    case ConstraintKind::kPgHi: return "pg_hi";
    case ConstraintKind::kQgLo: return "qg_lo";
    case ConstraintKind::kQgHi: return "qg_hi";
    case ConstraintKind::kThermal: return "thermal";
    case ConstraintKind::kVufLimit: return "vuf_limit";
    case ConstraintKind::kFlowDefinition: return "flow_definition";
  }
  return "?";
}

double QuadExpr::value(const Eigen::VectorXd& x) const {
  double v = constant;
  for (const auto& [i, c] : linear) v += c * x(i);
  for (const auto& t : quad) v += t.c * x(t.i) * x(t.j);
  return v;
}

void QuadExpr::gradient(const Eigen::VectorXd& x, double scale, std::vector<std::pair<int, double>>& out) const {
  for (const auto& [i, c] : linear) out.emplace_back(i, scale * c);
  for (const auto& t : quad) {
    if (t.i == t.j) {
      out.emplace_back(t.i, scale * 2.0 * t.c * x(t.i));
    } else {
      out.emplace_back(t.i, scale * t.c * x(t.j));
      out.emplace_back(t.j, scale * t.c * x(t.i));
    }
  }
}

void QuadExpr::hessian(double scale, std::vector<Eigen::Triplet<double>>& out) const {
  for (const auto& t : quad) out.emplace_back(t.i, t.j, scale * (t.i == t.j ? 2.0 * t.c : t.c));
}

std::string Constraint::label(const NetworkSpec& net) const {
  std::string s = to_string(kind) + "(";
  if (line >= 0) {
    const auto& l = net.lines[line];
    s += end == 0 ? l.from + "->" + l.to : l.to + "->" + l.from;
  } else if (bus >= 0) {
    s += "bus=" + net.buses[bus].id;
  }
  if (gen >= 0) s += ",gen=" + std::to_string(gen);
  if (phase >= 0) s += std::string(",phase=") + kPhaseNames[phase];
  if (kind == ConstraintKind::kFlowDefinition) s += reactive ? ",q" : ",p";
  return s + ")";
}

std::vector<int> OpfProblem::constraints_of(ConstraintKind kind) const {
  std::vector<int> out;
  for (int k = 0; k < num_constraints(); ++k)
    if (constraints[k].kind == kind) out.push_back(k);
  return out;
}

PhasorSet OpfProblem::bus_voltage(const Eigen::VectorXd& x, int bus) const {
  if (layout.e[bus][0] < 0) return PhasorSet::balanced();
  PhasorSet v;
  for (int k = 0; k < 3; ++k) v[k] = Complex(x(layout.e[bus][k]), x(layout.f[bus][k]));
  return v;
}

double OpfProblem::generation_cost(const Eigen::VectorXd& x) const { return linear_cost.dot(x); }

double OpfProblem::penalty_cost(const Eigen::VectorXd& x) const {
  if (cfg.mode != UnbalanceMode::kSoft) return 0.0;
  double total = 0.0;
  for (int b : vuf_buses) {
    if (layout.e[b][0] < 0) continue;
    total += penalty_shape(cfg.penalty_on, cfg.penalty_weight, f_metric(bus_voltage(x, b))).value;
  }
  return total;
}

OpfProblem build_problem(const NetworkSpec& net, const UnbalanceConfig& cfg) {
  if (cfg.mode == UnbalanceMode::kHard && !(cfg.vuf_limit_pct > 0.0))
    throw ValidationError("hard unbalance mode requires a positive VUF limit");
  if (cfg.mode == UnbalanceMode::kSoft && !(cfg.penalty_weight >= 0.0 && std::isfinite(cfg.penalty_weight)))
    throw ValidationError("soft unbalance mode requires a nonnegative penalty weight");
  for (std::size_t gi = 0; gi < net.gens.size(); ++gi)
    for (int k = 0; k < 3; ++k)
      if (net.gens[gi].pmin[k] > net.gens[gi].pmax[k] || net.gens[gi].qmin[k] > net.gens[gi].qmax[k])
        throw ValidationError("generator " + std::to_string(gi) + " at bus '" + net.gens[gi].bus +
                              "': infeasible box bounds on phase " + kPhaseNames[k]);

  OpfProblem prob;
  prob.net = net;
  prob.cfg = cfg;
  auto& lay = prob.layout;
  const int nb = static_cast<int>(net.num_buses());
  const int sub = net.substation_index;

  auto new_var = [&](std::string name) {
    lay.names.push_back(std::move(name));
    return lay.size++;
  };
  lay.e.assign(nb, {-1, -1, -1});
  lay.f.assign(nb, {-1, -1, -1});
  for (int b = 0; b < nb; ++b) {
    if (b == sub) continue;
    for (int k = 0; k < 3; ++k) {
      lay.e[b][k] = new_var("e[" + net.buses[b].id + "," + kPhaseNames[k] + "]");
      lay.f[b][k] = new_var("f[" + net.buses[b].id + "," + kPhaseNames[k] + "]");
    }
  }
  lay.pg.resize(net.gens.size());
  lay.qg.resize(net.gens.size());
  for (std::size_t g = 0; g < net.gens.size(); ++g) {
    if (net.gens[g].balanced) {
      const int pv = new_var("pg[" + std::to_string(g) + "]");
      const int qv = new_var("qg[" + std::to_string(g) + "]");
      lay.pg[g] = {pv, pv, pv};
      lay.qg[g] = {qv, qv, qv};
      continue;
    }
    for (int k = 0; k < 3; ++k) {
      lay.pg[g][k] = new_var("pg[" + std::to_string(g) + "," + kPhaseNames[k] + "]");
      lay.qg[g][k] = new_var("qg[" + std::to_string(g) + "," + kPhaseNames[k] + "]");
    }
  }
  lay.p.resize(net.lines.size());
  lay.q.resize(net.lines.size());
  for (std::size_t l = 0; l < net.lines.size(); ++l)
    for (int k = 0; k < 3; ++k)
      for (int end = 0; end < 2; ++end) {
        const std::string tag = std::to_string(l) + "," + kPhaseNames[k] + "," + (end == 0 ? "from" : "to");
        lay.p[l][k][end] = new_var("p[" + tag + "]");
        lay.q[l][k][end] = new_var("q[" + tag + "]");
      }

  prob.fixed.assign(lay.size, std::nullopt);
  prob.linear_cost = Eigen::VectorXd::Zero(lay.size);
  for (std::size_t g = 0; g < net.gens.size(); ++g)
    for (int k = 0; k < 3; ++k) prob.linear_cost(lay.pg[g][k]) += net.gens[g].marginal_cost * net.base_kva;

  auto e_ref = [&](int bus, int k) {
    if (bus == sub) return Ref{-1, PhasorSet::balanced()[k].real()};
    return Ref{lay.e[bus][k], 0.0};
  };
  auto f_ref = [&](int bus, int k) {
    if (bus == sub) return Ref{-1, PhasorSet::balanced()[k].imag()};
    return Ref{lay.f[bus][k], 0.0};
  };

  auto& cons = prob.constraints;
  std::vector<Phase3> pc(nb, Phase3{0, 0, 0}), qc(nb, Phase3{0, 0, 0});
  for (const auto& load : net.loads) {
    const int b = net.bus_index(load.bus);
    for (int k = 0; k < 3; ++k) {
      pc[b][k] += load.p[k];
      qc[b][k] += load.q[k];
    }
  }

  // Nodal balances.
  for (int b = 0; b < nb; ++b)
    for (int reactive = 0; reactive < 2; ++reactive)
      for (int k = 0; k < 3; ++k) {
        Constraint c;
        c.kind = reactive ? ConstraintKind::kQBalance : ConstraintKind::kPBalance;
        c.equality = true;
        c.bus = b;
        c.phase = k;
        c.expr.constant = reactive ? qc[b][k] : pc[b][k];
        for (std::size_t g = 0; g < net.gens.size(); ++g)
          if (net.bus_index(net.gens[g].bus) == b)
            c.expr.linear.emplace_back(reactive ? lay.qg[g][k] : lay.pg[g][k], -1.0);
        for (std::size_t l = 0; l < net.lines.size(); ++l) {
          const auto& var = reactive ? lay.q[l][k] : lay.p[l][k];
          if (net.bus_index(net.lines[l].from) == b) c.expr.linear.emplace_back(var[0], 1.0);
          if (net.bus_index(net.lines[l].to) == b) c.expr.linear.emplace_back(var[1], 1.0);
        }
        cons.push_back(std::move(c));
      }

  // Flow definitions: s = v_i * conj(Y (v_i - v_j)) at each end.
  const auto ys = line_admittances(net);
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int from = net.bus_index(net.lines[l].from);
    const int to = net.bus_index(net.lines[l].to);
    for (int end = 0; end < 2; ++end) {
      const int own = end == 0 ? from : to;
      const int other = end == 0 ? to : from;
      for (int k = 0; k < 3; ++k) {
        Constraint cp, cq;
        cp.kind = cq.kind = ConstraintKind::kFlowDefinition;
        cp.equality = cq.equality = true;
        cp.line = cq.line = static_cast<int>(l);
        cp.end = cq.end = end;
        cp.phase = cq.phase = k;
        cq.reactive = true;
        cp.expr.linear.emplace_back(lay.p[l][k][end], 1.0);
        cq.expr.linear.emplace_back(lay.q[l][k][end], 1.0);
        const Ref e1 = e_ref(own, k);
        const Ref f1 = f_ref(own, k);
        for (int m = 0; m < 3; ++m) {
          const double g = ys[l](k, m).real();
          const double b = ys[l](k, m).imag();
          for (int side = 0; side < 2; ++side) {
            const int u = side == 0 ? own : other;
            const double sign = side == 0 ? -1.0 : 1.0;  // constraint is x_p - p(v)
            const Ref e2 = e_ref(u, m);
            const Ref f2 = f_ref(u, m);
            // Re: G(e1 e2 + f1 f2) + B(f1 e2 - e1 f2)
            add_product(cp.expr, e1, e2, sign * g);
            add_product(cp.expr, f1, f2, sign * g);
            add_product(cp.expr, f1, e2, sign * b);
            add_product(cp.expr, e1, f2, -sign * b);
            // Im: G(f1 e2 - e1 f2) - B(e1 e2 + f1 f2)
            add_product(cq.expr, f1, e2, sign * g);
            add_product(cq.expr, e1, f2, -sign * g);
            add_product(cq.expr, e1, e2, -sign * b);
            add_product(cq.expr, f1, f2, -sign * b);
          }
        }
        cons.push_back(std::move(cp));
        cons.push_back(std::move(cq));
      }
    }
  }

  // Voltage magnitude bounds on |v|^2.
  for (int b = 0; b < nb; ++b) {
    if (b == sub) continue;
    for (int k = 0; k < 3; ++k) {
      const double lo = net.buses[b].vmin;
      const double hi = net.buses[b].vmax;
      Constraint clo, chi;
      clo.kind = ConstraintKind::kVMagLo;
      chi.kind = ConstraintKind::kVMagHi;
      clo.bus = chi.bus = b;
      clo.phase = chi.phase = k;
      clo.expr.constant = lo * lo;
      clo.expr.quad = {{lay.e[b][k], lay.e[b][k], -1.0}, {lay.f[b][k], lay.f[b][k], -1.0}};
      chi.expr.constant = -hi * hi;
      chi.expr.quad = {{lay.e[b][k], lay.e[b][k], 1.0}, {lay.f[b][k], lay.f[b][k], 1.0}};
      cons.push_back(std::move(clo));
      cons.push_back(std::move(chi));
    }
  }

  // Generator boxes. A degenerate box fixes the variable.
  for (std::size_t g = 0; g < net.gens.size(); ++g) {
    const auto& gen = net.gens[g];
    for (int reactive = 0; reactive < 2; ++reactive)
      for (int k = 0; k < (gen.balanced ? 1 : 3); ++k) {
        const double lo = reactive ? gen.qmin[k] : gen.pmin[k];
        const double hi = reactive ? gen.qmax[k] : gen.pmax[k];
        const int var = reactive ? lay.qg[g][k] : lay.pg[g][k];
        const bool fixed = std::isfinite(lo) && lo == hi;
        if (fixed) prob.fixed[var] = lo;
        if (std::isfinite(lo)) {
          Constraint c;
          c.kind = reactive ? ConstraintKind::kQgLo : ConstraintKind::kPgLo;
          c.bus = net.bus_index(gen.bus);
          c.gen = static_cast<int>(g);
          c.phase = gen.balanced ? -1 : k;
          c.on_fixed_variable = fixed;
          c.expr.constant = lo;
          c.expr.linear.emplace_back(var, -1.0);
          cons.push_back(std::move(c));
        }
        if (std::isfinite(hi)) {
          Constraint c;
          c.kind = reactive ? ConstraintKind::kQgHi : ConstraintKind::kPgHi;
          c.bus = net.bus_index(gen.bus);
          c.gen = static_cast<int>(g);
          c.phase = gen.balanced ? -1 : k;
          c.on_fixed_variable = fixed;
          c.expr.constant = -hi;
          c.expr.linear.emplace_back(var, 1.0);
          cons.push_back(std::move(c));
        }
      }
  }

  // Thermal limits at both ends.
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const double s = net.lines[l].s_rating;
    if (!std::isfinite(s)) continue;
    for (int end = 0; end < 2; ++end)
      for (int k = 0; k < 3; ++k) {
        Constraint c;
        c.kind = ConstraintKind::kThermal;
        c.line = static_cast<int>(l);
        c.end = end;
        c.phase = k;
        c.bus = net.bus_index(end == 0 ? net.lines[l].from : net.lines[l].to);
        c.expr.constant = -s * s;
        c.expr.quad = {{lay.p[l][k][end], lay.p[l][k][end], 1.0}, {lay.q[l][k][end], lay.q[l][k][end], 1.0}};
        cons.push_back(std::move(c));
      }
  }

  if (cfg.mode != UnbalanceMode::kNone)
    for (const auto& id : cfg.buses) prob.vuf_buses.push_back(net.bus_index(id));
  if (cfg.mode == UnbalanceMode::kHard)
    for (int b : prob.vuf_buses) {
      Constraint c;
      c.kind = ConstraintKind::kVufLimit;
      c.bus = b;
      c.vuf_bound = cfg.vuf_limit_pct * cfg.vuf_limit_pct;
      cons.push_back(std::move(c));
    }
  return prob;
}

Eigen::VectorXd flat_start(const OpfProblem& prob) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.num_variables());
  const auto bal = PhasorSet::balanced();
  for (std::size_t b = 0; b < prob.layout.e.size(); ++b)
    for (int k = 0; k < 3; ++k) {
      if (prob.layout.e[b][k] < 0) continue;
      x(prob.layout.e[b][k]) = bal[k].real();
      x(prob.layout.f[b][k]) = bal[k].imag();
    }
  for (int i = 0; i < prob.num_variables(); ++i)
    if (prob.fixed[i]) x(i) = *prob.fixed[i];
  return x;
}

Eigen::VectorXd initial_point(const OpfProblem& prob, const OperatingPoint& point) {
  const auto& net = prob.net;
  const auto& lay = prob.layout;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.num_variables());
  for (std::size_t b = 0; b < lay.e.size(); ++b)
    for (int k = 0; k < 3; ++k) {
      if (lay.e[b][k] < 0) continue;
      x(lay.e[b][k]) = point.v[b][k].real();
      x(lay.f[b][k]) = point.v[b][k].imag();
    }
  for (std::size_t l = 0; l < net.lines.size(); ++l)
    for (int k = 0; k < 3; ++k) {
      x(lay.p[l][k][0]) = point.lines[l].s_from[k].real();
      x(lay.q[l][k][0]) = point.lines[l].s_from[k].imag();
      x(lay.p[l][k][1]) = point.lines[l].s_to[k].real();
      x(lay.q[l][k][1]) = point.lines[l].s_to[k].imag();
    }
  std::vector<Phase3> pc(net.num_buses(), Phase3{0, 0, 0}), qc(net.num_buses(), Phase3{0, 0, 0});
  for (const auto& load : net.loads) {
    const int b = net.bus_index(load.bus);
    for (int k = 0; k < 3; ++k) {
      pc[b][k] += load.p[k];
      qc[b][k] += load.q[k];
    }
  }
  for (std::size_t g = 0; g < net.gens.size(); ++g) {
    const auto& gen = net.gens[g];
    if (gen.is_substation) {
      const int b = net.substation_index;
      for (int k = 0; k < 3; ++k) {
        const Complex s = point.injected_power(net, b, k);
        x(lay.pg[g][k]) = s.real() + pc[b][k];
        x(lay.qg[g][k]) = s.imag() + qc[b][k];
      }
    } else {
      const auto out = nominal_output(net, gen);
      for (int k = 0; k < 3; ++k) {
        x(lay.pg[g][k]) = out[k].real();
        x(lay.qg[g][k]) = out[k].imag();
      }
    }
  }
  for (int i = 0; i < prob.num_variables(); ++i)
    if (prob.fixed[i]) x(i) = *prob.fixed[i];
  return x;
}

double eval_objective(const OpfProblem& prob, const Eigen::VectorXd& x) {
  return prob.generation_cost(x) + prob.penalty_cost(x);
}

Eigen::VectorXd eval_objective_gradient(const OpfProblem& prob, const Eigen::VectorXd& x) {
  Eigen::VectorXd g = prob.linear_cost;
  if (prob.cfg.mode == UnbalanceMode::kSoft) {
    std::vector<std::pair<int, double>> entries;
    for (int b : prob.vuf_buses) {
      if (prob.layout.e[b][0] < 0) continue;
      const PhasorSet v = prob.bus_voltage(x, b);
      const auto shape = penalty_shape(prob.cfg.penalty_on, prob.cfg.penalty_weight, f_metric(v));
      add_vuf_gradient(prob, b, v, shape.d1, entries);
    }
    for (const auto& [i, val] : entries) g(i) += val;
  }
  return g;
}

Eigen::VectorXd eval_constraints(const OpfProblem& prob, const Eigen::VectorXd& x) {
  Eigen::VectorXd c(prob.num_constraints());
  for (int k = 0; k < prob.num_constraints(); ++k) c(k) = constraint_value(prob, prob.constraints[k], x);
  return c;
}

void eval_jacobian(const OpfProblem& prob, const Eigen::VectorXd& x, std::vector<Eigen::Triplet<double>>& out) {
  std::vector<std::pair<int, double>> row;
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const auto& con = prob.constraints[k];
    row.clear();
    if (con.kind == ConstraintKind::kVufLimit) {
      add_vuf_gradient(prob, con.bus, prob.bus_voltage(x, con.bus), 1.0, row);
    } else {
      con.expr.gradient(x, 1.0, row);
    }
    for (const auto& [i, v] : row) out.emplace_back(k, i, v);
  }
}

void eval_hessian(const OpfProblem& prob, const Eigen::VectorXd& x, double obj_factor,
                  const Eigen::VectorXd& multipliers, std::vector<Eigen::Triplet<double>>& out) {
  if (prob.cfg.mode == UnbalanceMode::kSoft)
    for (int b : prob.vuf_buses) {
      if (prob.layout.e[b][0] < 0) continue;
      const PhasorSet v = prob.bus_voltage(x, b);
      const auto shape = penalty_shape(prob.cfg.penalty_on, prob.cfg.penalty_weight, f_metric(v));
      add_vuf_hessian(prob, b, v, obj_factor * shape.d1, obj_factor * shape.d2, out);
    }
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const auto& con = prob.constraints[k];
    if (con.kind == ConstraintKind::kVufLimit) {
      add_vuf_hessian(prob, con.bus, prob.bus_voltage(x, con.bus), multipliers(k), 0.0, out);
    } else {
      con.expr.hessian(multipliers(k), out);
    }
  }
}

OpfEvaluation eval(const OpfProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd* multipliers) {
  if (x.size() != prob.num_variables()) throw std::invalid_argument("x does not match the variable layout");
  OpfEvaluation ev;
  try {
    ev.objective = eval_objective(prob, x);
    ev.objective_gradient = eval_objective_gradient(prob, x);
    ev.constraints = eval_constraints(prob, x);
    std::vector<Eigen::Triplet<double>> trip;
    eval_jacobian(prob, x, trip);
    ev.jacobian.resize(prob.num_constraints(), prob.num_variables());
    ev.jacobian.setFromTriplets(trip.begin(), trip.end());
    if (multipliers != nullptr) {
      trip.clear();
      eval_hessian(prob, x, 1.0, *multipliers, trip);
      ev.hessian.resize(prob.num_variables(), prob.num_variables());
      ev.hessian.setFromTriplets(trip.begin(), trip.end());
    }
  } catch (const DegeneratePointError& e) {
    throw EvaluationError(std::string("unbalance term undefined: ") + e.what());
  }
  if (!std::isfinite(ev.objective)) throw EvaluationError("objective is not finite");
  for (int k = 0; k < ev.constraints.size(); ++k)
    if (!std::isfinite(ev.constraints(k)))
      throw EvaluationError("constraint " + prob.constraints[k].label(prob.net) + " is not finite");
  return ev;
}

}  // namespace vudlmp
