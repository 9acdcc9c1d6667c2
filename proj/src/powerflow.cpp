#include "vudlmp/powerflow.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>

namespace vudlmp {

namespace {

double clamp_to_box(double lo, double hi, double target) {
  if (!std::isfinite(lo) && !std::isfinite(hi)) return target;
  return std::clamp(target, std::isfinite(lo) ? lo : -1e300, std::isfinite(hi) ? hi : 1e300);
}

// Complex nodal currents I = Y v over all buses.
std::vector<std::array<Complex, 3>> nodal_currents(const NetworkSpec& net, const std::vector<Eigen::Matrix3cd>& ys,
                                                   const std::vector<PhasorSet>& v) {
  std::vector<std::array<Complex, 3>> cur(net.num_buses(), {Complex{}, Complex{}, Complex{}});
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = net.bus_lookup.at(net.lines[l].from);
    const int j = net.bus_lookup.at(net.lines[l].to);
    Eigen::Vector3cd dv;
    for (int k = 0; k < 3; ++k) dv(k) = v[i][k] - v[j][k];
    const Eigen::Vector3cd il = ys[l] * dv;
    for (int k = 0; k < 3; ++k) {
      cur[i][k] += il(k);
      cur[j][k] -= il(k);
    }
  }
  return cur;
}

}  // namespace

Complex OperatingPoint::incident_current(const NetworkSpec& net, int bus, int phase) const {
  Complex sum{};
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (net.bus_lookup.at(net.lines[l].from) == bus) sum += lines[l].i_from[phase];
    if (net.bus_lookup.at(net.lines[l].to) == bus) sum -= lines[l].i_from[phase];
  }
  return sum;
}

Complex OperatingPoint::injected_power(const NetworkSpec& net, int bus, int phase) const {
  Complex sum{};
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (net.bus_lookup.at(net.lines[l].from) == bus) sum += lines[l].s_from[phase];
    if (net.bus_lookup.at(net.lines[l].to) == bus) sum += lines[l].s_to[phase];
  }
  return sum;
}

std::vector<Eigen::Matrix3cd> line_admittances(const NetworkSpec& net) {
  std::vector<Eigen::Matrix3cd> out;
  out.reserve(net.lines.size());
  for (const auto& line : net.lines) out.push_back(line.z.inverse());
  return out;
}

Injections load_injections(const NetworkSpec& net) {
  Injections inj(net.num_buses(), {Complex{}, Complex{}, Complex{}});
  for (const auto& load : net.loads) {
    const int b = net.bus_index(load.bus);
    for (int k = 0; k < 3; ++k) inj[b][k] -= Complex(load.p[k], load.q[k]);
  }
  return inj;
}

std::array<Complex, 3> nominal_output(const NetworkSpec& net, const GenSpec& g) {
  std::array<Complex, 3> out{};
  const double sub_cost = net.substation_cost();
  for (int k = 0; k < 3; ++k) {
    if (!g.phases[k]) continue;
    const double p = (g.marginal_cost < sub_cost && std::isfinite(g.pmax[k])) ? g.pmax[k]
                                                                               : clamp_to_box(g.pmin[k], g.pmax[k], 0.0);
    out[k] = Complex(p, clamp_to_box(g.qmin[k], g.qmax[k], 0.0));
  }
  return out;
}

Injections nominal_injections(const NetworkSpec& net) {
  Injections inj = load_injections(net);
  for (const auto& g : net.gens) {
    if (g.is_substation) continue;
    const int b = net.bus_index(g.bus);
    const auto out = nominal_output(net, g);
    for (int k = 0; k < 3; ++k) inj[b][k] += out[k];
  }
  return inj;
}

OperatingPoint point_from_voltages(const NetworkSpec& net, std::vector<PhasorSet> v) {
  OperatingPoint op;
  op.v = std::move(v);
  const auto ys = line_admittances(net);
  op.lines.resize(net.lines.size());
  op.losses = 0.0;
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = net.bus_lookup.at(net.lines[l].from);
    const int j = net.bus_lookup.at(net.lines[l].to);
    Eigen::Vector3cd dv;
    for (int k = 0; k < 3; ++k) dv(k) = op.v[i][k] - op.v[j][k];
    const Eigen::Vector3cd il = ys[l] * dv;
    auto& st = op.lines[l];
    for (int k = 0; k < 3; ++k) {
      st.i_from[k] = il(k);
      st.s_from[k] = op.v[i][k] * std::conj(il(k));
      st.s_to[k] = op.v[j][k] * std::conj(-il(k));
      op.losses += st.s_from[k].real() + st.s_to[k].real();
    }
  }
  return op;
}

OperatingPoint solve_pf(const NetworkSpec& net, const Injections& injections, const PowerFlowSettings& settings,
                        const OperatingPoint* initial) {
  const int nb = static_cast<int>(net.num_buses());
  if (static_cast<int>(injections.size()) != nb)
    throw std::invalid_argument("injection vector does not match the bus count");
  for (const auto& row : injections)
    for (const auto& s : row)
      if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
        throw std::invalid_argument("injections must be finite");

  const int sub = net.substation_index;
  std::vector<int> pos(nb, -1);
  int nu = 0;
  for (int b = 0; b < nb; ++b)
    if (b != sub) pos[b] = nu++;

  std::vector<PhasorSet> v(nb, PhasorSet::balanced());
  if (initial != nullptr && static_cast<int>(initial->v.size()) == nb) v = initial->v;
  v[sub] = PhasorSet::balanced();

  const auto ys = line_admittances(net);
  const int dim = 6 * nu;

  // Constant admittance part of the real Jacobian.
  std::vector<Eigen::Triplet<double>> y_trip;
  auto add_block = [&](int bi, int bj, const Eigen::Matrix3cd& y, double sign) {
    if (pos[bi] < 0 || pos[bj] < 0) return;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        const double g = sign * y(r, c).real();
        const double b = sign * y(r, c).imag();
        const int row = 6 * pos[bi] + 2 * r;
        const int col = 6 * pos[bj] + 2 * c;
        y_trip.emplace_back(row, col, g);
        y_trip.emplace_back(row, col + 1, -b);
        y_trip.emplace_back(row + 1, col, b);
        y_trip.emplace_back(row + 1, col + 1, g);
      }
  };
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = net.bus_lookup.at(net.lines[l].from);
    const int j = net.bus_lookup.at(net.lines[l].to);
    add_block(i, i, ys[l], 1.0);
    add_block(j, j, ys[l], 1.0);
    add_block(i, j, ys[l], -1.0);
    add_block(j, i, ys[l], -1.0);
  }

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  double mismatch = 0.0;
  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    const auto cur = nodal_currents(net, ys, v);
    mismatch = 0.0;
    for (int b = 0; b < nb; ++b) {
      if (b == sub) continue;
      for (int k = 0; k < 3; ++k)
        mismatch = std::max(mismatch, std::abs(v[b][k] * std::conj(cur[b][k]) - injections[b][k]));
    }
    if (!std::isfinite(mismatch)) break;
    if (mismatch < settings.tol) {
      OperatingPoint op = point_from_voltages(net, std::move(v));
      op.iterations = iter;
      op.mismatch = mismatch;
      return op;
    }
    if (iter == settings.max_iter) break;

    std::vector<Eigen::Triplet<double>> trip = y_trip;
    Eigen::VectorXd rhs(dim);
    for (int b = 0; b < nb; ++b) {
      if (b == sub) continue;
      for (int k = 0; k < 3; ++k) {
        const Complex vk = v[b][k];
        const Complex s = injections[b][k];
        const Complex resid = cur[b][k] - std::conj(s / vk);
        const int row = 6 * pos[b] + 2 * k;
        rhs(row) = -resid.real();
        rhs(row + 1) = -resid.imag();
        // d(-conj(S/v)) = conj(S/v^2) * conj(dv)
        const Complex c = std::conj(s / (vk * vk));
        trip.emplace_back(row, row, c.real());
        trip.emplace_back(row, row + 1, c.imag());
        trip.emplace_back(row + 1, row, c.imag());
        trip.emplace_back(row + 1, row + 1, -c.real());
      }
    }
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    if (!analyzed) {
      lu.analyzePattern(jac);
      analyzed = true;
    }
    lu.factorize(jac);
    if (lu.info() != Eigen::Success)
      throw PowerFlowError(PowerFlowError::Reason::kSingular, mismatch, "power-flow Jacobian is singular");
    const Eigen::VectorXd dx = lu.solve(rhs);
    if (!dx.allFinite())
      throw PowerFlowError(PowerFlowError::Reason::kSingular, mismatch, "power-flow Newton step is not finite");
    for (int b = 0; b < nb; ++b) {
      if (b == sub) continue;
      for (int k = 0; k < 3; ++k) v[b][k] += Complex(dx(6 * pos[b] + 2 * k), dx(6 * pos[b] + 2 * k + 1));
    }
  }
  throw PowerFlowError(PowerFlowError::Reason::kDiverged, mismatch,
                       "power flow did not converge in " + std::to_string(settings.max_iter) +
                           " iterations (last mismatch " + std::to_string(mismatch) + " pu)");
}

PerturbResult perturb_and_resolve(const NetworkSpec& net, const Injections& injections, int bus, int phase,
                                  PowerKind kind, double delta_demand, const PowerFlowSettings& settings) {
  if (bus < 0 || bus >= static_cast<int>(net.num_buses()) || phase < 0 || phase > 2)
    throw std::out_of_range("perturbation target out of range");
  const OperatingPoint base = solve_pf(net, injections, settings);
  Injections perturbed = injections;
  perturbed[bus][phase] -= kind == PowerKind::kActive ? Complex(delta_demand, 0.0) : Complex(0.0, delta_demand);
  OperatingPoint point = solve_pf(net, perturbed, settings, &base);
  const double delta = f_metric(point.v[bus]) - f_metric(base.v[bus]);
  return {std::move(point), delta};
}

}  // namespace vudlmp
