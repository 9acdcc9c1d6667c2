#include "vudlmp/dlmp.hpp"

#include "vudlmp/sequence.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>

namespace vudlmp {

namespace {

double directional(const Complex& gradient, const Complex& direction) {
  return (gradient * std::conj(direction)).real();
}

bool same_sign(double a, double b) {
  constexpr double kTiny = 1e-12;
  if (std::abs(a) < kTiny && std::abs(b) < kTiny) return true;
  return (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0);
}

}  // namespace

struct DemandResponse::Impl {
  const OpfProblem& prob;
  Eigen::VectorXd x;
  std::vector<int> cols;      // variable index of each column
  std::vector<int> col_of;    // per variable, -1 if not a network variable
  std::vector<int> row_of;    // per constraint, -1 if not part of the system
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;

  Impl(const OpfProblem& p, const Eigen::VectorXd& x_in) : prob(p), x(x_in) {
    const auto& lay = prob.layout;
    col_of.assign(prob.num_variables(), -1);
    auto add_col = [&](int var) {
      if (var < 0 || col_of[var] >= 0) return;
      col_of[var] = static_cast<int>(cols.size());
      cols.push_back(var);
    };
    for (std::size_t b = 0; b < lay.e.size(); ++b)
      for (int k = 0; k < 3; ++k) {
        add_col(lay.e[b][k]);
        add_col(lay.f[b][k]);
      }
    for (std::size_t l = 0; l < lay.p.size(); ++l)
      for (int k = 0; k < 3; ++k)
        for (int end = 0; end < 2; ++end) {
          add_col(lay.p[l][k][end]);
          add_col(lay.q[l][k][end]);
        }
    row_of.assign(prob.num_constraints(), -1);
    int rows = 0;
    for (int k = 0; k < prob.num_constraints(); ++k) {
      const auto& c = prob.constraints[k];
      const bool balance = c.kind == ConstraintKind::kPBalance || c.kind == ConstraintKind::kQBalance;
      if (c.kind == ConstraintKind::kFlowDefinition || (balance && c.bus != prob.net.substation_index))
        row_of[k] = rows++;
    }
    if (rows != static_cast<int>(cols.size()))
      throw std::logic_error("linearized network system is not square");

    std::vector<Eigen::Triplet<double>> trip, sys;
    eval_jacobian(prob, x, trip);
    for (const auto& t : trip) {
      const int r = row_of[t.row()];
      const int c = col_of[t.col()];
      if (r >= 0 && c >= 0) sys.emplace_back(r, c, t.value());
    }
    Eigen::SparseMatrix<double> a(rows, rows);
    a.setFromTriplets(sys.begin(), sys.end());
    a.makeCompressed();
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw std::runtime_error("linearized network is singular at this point");
  }
};

DemandResponse::DemandResponse(const OpfProblem& prob, const Eigen::VectorXd& x)
    : impl_(std::make_unique<Impl>(prob, x)) {}

DemandResponse::~DemandResponse() = default;

Eigen::VectorXd DemandResponse::direction(int bus, int phase, PowerKind kind) const {
  const auto& prob = impl_->prob;
  const ConstraintKind target = kind == PowerKind::kActive ? ConstraintKind::kPBalance : ConstraintKind::kQBalance;
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(prob.num_variables());
  if (bus == prob.net.substation_index) return dx;  // served on the spot
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<int>(impl_->cols.size()));
  bool found = false;
  for (int k = 0; k < prob.num_constraints(); ++k) {
    const auto& c = prob.constraints[k];
    if (c.kind == target && c.bus == bus && c.phase == phase) {
      rhs(impl_->row_of[k]) = -1.0;
      found = true;
      break;
    }
  }
  if (!found) throw std::out_of_range("no balance row at that bus and phase");
  const Eigen::VectorXd sol = impl_->lu.solve(rhs);
  for (std::size_t i = 0; i < impl_->cols.size(); ++i) dx(impl_->cols[i]) = sol(static_cast<int>(i));
  return dx;
}

std::vector<double> DemandResponse::f_change(const Eigen::VectorXd& dx) const {
  const auto& prob = impl_->prob;
  const auto& lay = prob.layout;
  std::vector<double> out(lay.e.size(), 0.0);
  for (std::size_t b = 0; b < lay.e.size(); ++b) {
    if (lay.e[b][0] < 0) continue;
    const auto g = grad_f(prob.bus_voltage(impl_->x, static_cast<int>(b)));
    for (int k = 0; k < 3; ++k)
      out[b] += g.grad[k].real() * dx(lay.e[b][k]) + g.grad[k].imag() * dx(lay.f[b][k]);
  }
  return out;
}

std::vector<DlmpBreakdown> decompose(const OpfSolution& sol, const OpfProblem& prob) {
  if (!sol.success())
    throw DlmpError(sol.status, "cannot decompose prices of an unsuccessful solve (" + to_string(sol.status) + ")");
  const auto& net = prob.net;
  const int sub = net.substation_index;
  const OpfEvaluation ev = eval(prob, sol.x);
  const DemandResponse response(prob, sol.x);
  const double to_kwh = 1.0 / net.base_kva;

  std::vector<DlmpBreakdown> out;
  for (PowerKind kind : {PowerKind::kActive, PowerKind::kReactive}) {
    const ConstraintKind target = kind == PowerKind::kActive ? ConstraintKind::kPBalance : ConstraintKind::kQBalance;
    for (int b = 0; b < static_cast<int>(net.num_buses()); ++b)
      for (int ph = 0; ph < 3; ++ph) {
        DlmpBreakdown d;
        d.bus = b;
        d.phase = ph;
        d.kind = kind;
        d.total = sol.multiplier(prob, target, b, ph) * to_kwh;
        d.energy = sol.multiplier(prob, target, sub, ph) * to_kwh;
        if (b == sub) {
          d.residual = d.total - d.component_sum();
          out.push_back(d);
          continue;
        }
        const Eigen::VectorXd dx = response.direction(b, ph, kind);
        const Eigen::VectorXd jd = ev.jacobian * dx;
        double served = 0.0;
        for (int k = 0; k < prob.num_constraints(); ++k) {
          const auto& c = prob.constraints[k];
          const double term = sol.multipliers(k) * jd(k) * to_kwh;
          switch (c.kind) {
            case ConstraintKind::kPBalance:
            case ConstraintKind::kQBalance:
              if (c.bus == sub) served += term;
              break;
            case ConstraintKind::kThermal: d.congestion += term; break;
            case ConstraintKind::kVMagLo:
            case ConstraintKind::kVMagHi: d.voltage_limit += term; break;
            case ConstraintKind::kVufLimit: d.unbalance += term; break;
            default: break;
          }
        }
        // Only the soft penalty depends on network variables in the objective.
        d.unbalance += ev.objective_gradient.dot(dx) * to_kwh;
        d.loss = served - d.energy;
        d.residual = d.total - d.component_sum();
        out.push_back(d);
      }
  }
  return out;
}

namespace {

// Thevenin impedance seen at each bus with the substation as the source.
class TheveninImpedances {
 public:
  explicit TheveninImpedances(const NetworkSpec& net) : sub_(net.substation_index) {
    const int n = static_cast<int>(net.num_buses());
    slot_.assign(n, -1);
    int next = 0;
    for (int b = 0; b < n; ++b)
      if (b != sub_) slot_[b] = next++;
    const auto ys = line_admittances(net);
    std::vector<Eigen::Triplet<Complex>> trip;
    auto stamp = [&](int bi, int bj, const Eigen::Matrix3cd& y) {
      if (slot_[bi] < 0 || slot_[bj] < 0) return;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trip.emplace_back(3 * slot_[bi] + r, 3 * slot_[bj] + c, y(r, c));
    };
    for (std::size_t l = 0; l < net.lines.size(); ++l) {
      const int i = net.bus_index(net.lines[l].from);
      const int j = net.bus_index(net.lines[l].to);
      stamp(i, i, ys[l]);
      stamp(j, j, ys[l]);
      stamp(i, j, -ys[l]);
      stamp(j, i, -ys[l]);
    }
    Eigen::SparseMatrix<Complex> y(3 * next, 3 * next);
    y.setFromTriplets(trip.begin(), trip.end());
    y.makeCompressed();
    lu_.compute(y);
    if (lu_.info() != Eigen::Success) throw std::runtime_error("bus admittance matrix is singular");
  }

  [[nodiscard]] Eigen::Matrix3cd at(int bus) const {
    if (bus == sub_) return Eigen::Matrix3cd::Zero();
    Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(lu_.rows(), 3);
    for (int k = 0; k < 3; ++k) rhs(3 * slot_[bus] + k, k) = 1.0;
    const Eigen::MatrixXcd cols = lu_.solve(rhs);
    return cols.block(3 * slot_[bus], 0, 3, 3);
  }

 private:
  int sub_;
  std::vector<int> slot_;
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> lu_;
};

// Buses fed through each bus on a radial feeder, the bus itself included.
// On a meshed network every bus only carries itself.
std::vector<std::vector<int>> fed_through(const NetworkSpec& net) {
  const int n = static_cast<int>(net.num_buses());
  std::vector<std::vector<int>> out(n);
  for (int b = 0; b < n; ++b) out[b] = {b};
  if (static_cast<int>(net.lines.size()) != n - 1) return out;
  std::vector<std::vector<int>> adj(n);
  for (const auto& l : net.lines) {
    const int i = net.bus_index(l.from);
    const int j = net.bus_index(l.to);
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<int> parent(n, -1), order{net.substation_index};
  parent[net.substation_index] = net.substation_index;
  for (std::size_t k = 0; k < order.size(); ++k)
    for (int c : adj[order[k]])
      if (parent[c] < 0) {
        parent[c] = order[k];
        order.push_back(c);
      }
  for (int b = 0; b < n; ++b)
    for (int up = parent[b]; b != net.substation_index && up != net.substation_index; up = parent[up])
      out[up].push_back(b);
  return out;
}

// Voltage response of `bus` to a unit demand increment on `phase`. The rest of
// the network is a fixed Thevenin source; the constant-power injections fed
// through the bus see the same voltage change and respond to it.
Eigen::Matrix<double, 6, 1> local_response(const NetworkSpec& net, const OperatingPoint& point, int bus, int phase,
                                           PowerKind kind, const Eigen::Matrix3cd& z, const std::vector<int>& fed) {
  const auto& v = point.v[bus];
  const Complex ds = kind == PowerKind::kActive ? Complex(1.0, 0.0) : Complex(0.0, 1.0);
  // dv = Z (a + diag(b) conj(dv)), with I = conj(S / v) injected into the network.
  Eigen::Vector3cd a = Eigen::Vector3cd::Zero();
  a(phase) = std::conj(-ds / v[phase]);
  std::array<Complex, 3> b{};
  for (int m : fed)
    for (int k = 0; k < 3; ++k) b[k] -= std::conj(point.injected_power(net, m, k) / (point.v[m][k] * point.v[m][k]));
  const Eigen::Vector3cd za = z * a;
  Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Identity();
  Eigen::Matrix<double, 6, 1> rhs;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i) {
      const Complex c = z(i, k) * b[k];  // c * conj(dv_k) = c * (de_k - j df_k)
      m(i, k) -= c.real();
      m(i, 3 + k) -= c.imag();
      m(3 + i, k) -= c.imag();
      m(3 + i, 3 + k) += c.real();
    }
  for (int i = 0; i < 3; ++i) {
    rhs(i) = za(i).real();
    rhs(3 + i) = za(i).imag();
  }
  return m.partialPivLu().solve(rhs);
}

SensitivityReport closed_form_entry(const NetworkSpec& net, const OperatingPoint& point, int bus, int phase,
                                    PowerKind kind, const TheveninImpedances& zth,
                                    const std::vector<std::vector<int>>& fed) {
  if (bus < 0 || bus >= static_cast<int>(net.num_buses()) || phase < 0 || phase > 2)
    throw std::out_of_range("sensitivity target out of range");
  SensitivityReport r;
  r.bus = bus;
  r.phase = phase;
  r.kind = kind;
  r.finite_difference = std::numeric_limits<double>::quiet_NaN();
  r.relative_gap = std::numeric_limits<double>::quiet_NaN();
  const Complex current = point.incident_current(net, bus, phase);
  r.current_magnitude = std::abs(current);
  if (!(r.current_magnitude > kEpsCurrent)) {
    r.closed_form = r.current_only = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.defined = true;

  const auto grad = grad_f(point.v[bus]).grad;
  const auto dv = local_response(net, point, bus, phase, kind, zth.at(bus), fed[bus]);
  r.closed_form = 0.0;
  for (int k = 0; k < 3; ++k) r.closed_form += grad[k].real() * dv(k) + grad[k].imag() * dv(3 + k);

  // Projection on the incident-current gradient of the injection; demand is its negation.
  const Complex literal = kind == PowerKind::kActive ? current : Complex(0.0, 1.0) * current;
  r.current_only = -directional(grad[phase], literal) / std::norm(literal);
  return r;
}

}  // namespace

SensitivityReport sensitivity_closed_form(const NetworkSpec& net, const OperatingPoint& point, int bus, int phase,
                                          PowerKind kind) {
  return closed_form_entry(net, point, bus, phase, kind, TheveninImpedances(net), fed_through(net));
}

std::vector<SensitivityReport> sensitivity_report(const NetworkSpec& net, const OperatingPoint& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Injections inj(net.num_buses(), {Complex{}, Complex{}, Complex{}});
  for (int b = 0; b < static_cast<int>(net.num_buses()); ++b)
    for (int k = 0; k < 3; ++k) inj[b][k] = point.injected_power(net, b, k);
  const TheveninImpedances zth(net);
  const auto fed = fed_through(net);

  std::vector<SensitivityReport> out;
  for (PowerKind kind : {PowerKind::kActive, PowerKind::kReactive})
    for (int b = 0; b < static_cast<int>(net.num_buses()); ++b) {
      if (b == net.substation_index) continue;
      for (int ph = 0; ph < 3; ++ph) {
        SensitivityReport r = closed_form_entry(net, point, b, ph, kind, zth, fed);
        const double up = perturb_and_resolve(net, inj, b, ph, kind, step).delta_f;
        const double down = perturb_and_resolve(net, inj, b, ph, kind, -step).delta_f;
        r.finite_difference = (up - down) / (2.0 * step);
        if (r.defined) {
          r.relative_gap = std::abs(r.closed_form - r.finite_difference) / std::abs(r.finite_difference);
          r.sign_agrees = same_sign(r.closed_form, r.finite_difference);
        }
        out.push_back(r);
      }
    }
  return out;
}

}  // namespace vudlmp
