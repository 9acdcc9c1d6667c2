// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "support.hpp"

#include "vudlmp/dlmp.hpp"
#include "vudlmp/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace vudlmp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Run {
  std::string label;
  OpfProblem prob;
  OpfSolution sol;
  std::vector<DlmpBreakdown> dlmp;
  double seconds = 0.0;
  double max_vuf = 0.0;
  double losses_kw = 0.0;
};

// Every solve made by the runner, for the KKT audit at the end.
std::vector<const Run*> g_runs;

Run& run(std::vector<std::unique_ptr<Run>>& store, const std::string& label, const NetworkSpec& net,
         const UnbalanceConfig& cfg) {
  auto r = std::make_unique<Run>(Run{label, build_problem(net, cfg), {}, {}, 0.0, 0.0, 0.0});
  const auto t0 = Clock::now();
  r->sol = solve(r->prob);
  r->seconds = seconds_since(t0);
  if (r->sol.success()) {
    r->dlmp = decompose(r->sol, r->prob);
    for (int b : net.vuf_bus_indices()) r->max_vuf = std::max(r->max_vuf, vuf(r->prob.bus_voltage(r->sol.x, b)));
    std::vector<PhasorSet> v;
    for (std::size_t b = 0; b < net.num_buses(); ++b) v.push_back(r->prob.bus_voltage(r->sol.x, static_cast<int>(b)));
    r->losses_kw = point_from_voltages(net, v).losses * net.base_kva;
  }
  g_runs.push_back(r.get());
  store.push_back(std::move(r));
  return *store.back();
}

UnbalanceConfig mode(const NetworkSpec& net, UnbalanceMode m, double limit = 0.0, double weight = 0.0) {
  UnbalanceConfig c = net.unbalance;
  c.mode = m;
  c.vuf_limit_pct = limit;
  c.penalty_weight = weight;
  return c;
}

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %2d  %-34s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion_1() {
  std::mt19937_64 rng(test::seed());
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const PhasorSet v = test::random_phasors(rng, 0.5);
    const SequencePair s = fortescue(v);
    const double ratio = 100.0 * std::abs(s.v_neg) / std::abs(s.v_pos);
    worst = std::max(worst, test::rel_err(f_metric(v), ratio * ratio, 1e-300));
  }
  const double t = seconds_since(t0);
  report(1, "VUF oracle equivalence", worst < 1e-12 && t < 1.0,
         fmt("10000 sets, worst rel err %.2e, %.3f s", worst, t));
}

void criterion_2() {
  std::mt19937_64 rng(test::seed() + 1);
  double worst = 0.0;
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const PhasorSet v = test::random_phasors(rng, 0.3);
    const UnbalanceGradient g = grad_f(v);
    double err = 0.0, norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      double part[2];
      for (int im = 0; im < 2; ++im) {
        PhasorSet up = v, down = v;
        const Complex d = im ? Complex(0.0, h) : Complex(h, 0.0);
        up[k] += d;
        down[k] -= d;
        part[im] = (f_metric(up) - f_metric(down)) / (2.0 * h);
      }
      err = std::max(err, std::abs(g.grad[k] - Complex(part[0], part[1])));
      norm = std::max(norm, std::abs(g.grad[k]));
    }
    worst = std::max(worst, err / norm);
  }
  double balanced = 0.0;
  std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-3.14159, 3.14159);
  for (int i = 0; i < 1000; ++i) {
    const UnbalanceGradient g = grad_f(PhasorSet::balanced(mag(rng), ang(rng)));
    for (int k = 0; k < 3; ++k) balanced = std::max(balanced, std::abs(g.grad[k]));
  }
  report(2, "Gradient vs finite differences", worst < 1e-6 && balanced < 1e-12,
         fmt("1000 points, worst rel err %.2e; balanced max |grad| %.1e", worst, balanced));
}

void criterion_3() {
  const NetworkSpec two = parse_network(test::two_bus_doc({9, 4, 6}, {3, 1, 2}).dump());
  double two_gap = 0.0;
  bool two_ok = true;
  for (const auto& r : sensitivity_report(two, solve_pf(two, load_injections(two)))) {
    two_ok = two_ok && r.defined && r.sign_agrees;
    two_gap = std::max(two_gap, r.relative_gap);
  }
  const NetworkSpec s5 = test::simple5();
  int defined = 0, agree = 0;
  double s5_gap = 0.0, literal_gap = 0.0;
  for (const auto& r : sensitivity_report(s5, solve_pf(s5, nominal_injections(s5)))) {
    if (!r.defined) continue;
    ++defined;
    agree += r.sign_agrees ? 1 : 0;
    s5_gap = std::max(s5_gap, r.relative_gap);
    literal_gap = std::max(literal_gap, test::rel_err(r.current_only, r.finite_difference));
  }
  const bool pass = two_ok && two_gap < 0.05 && defined > 0 && agree == defined && s5_gap < 0.25;
  report(3, "Sensitivity closed form vs FD", pass,
         fmt("two-bus gap %.2f %%; simple5 signs %d/%d, gap %.2f %% (current-only form gap %.0f %%)",
             100.0 * two_gap, agree, defined, 100.0 * s5_gap, 100.0 * literal_gap));
}

void criterion_4() {
  const NetworkSpec net = test::simple5();
  SolverSettings s;
  s.kkt_tol = 1e-9;
  std::mt19937_64 rng(test::seed() + 4);
  std::uniform_int_distribution<int> bus(1, static_cast<int>(net.num_buses()) - 1), phase(0, 2);
  int compared = 0, excluded = 0;
  double worst = 0.0;
  bool solved = true;
  std::ostringstream picks;
  for (int i = 0; i < 5; ++i) {
    const int b = bus(rng), k = phase(rng);
    picks << (i ? " " : "") << net.buses[b].id << "abc"[k];
    for (auto kind : {PowerKind::kActive, PowerKind::kReactive}) {
      const auto chk = test::shadow_price(net, mode(net, UnbalanceMode::kNone), s, b, k, kind);
      if (!chk.solved) {
        solved = false;
        continue;
      }
      if (chk.active_set_changed) {
        ++excluded;
        continue;
      }
      ++compared;
      worst = std::max(worst, test::rel_err(chk.dual, chk.difference, 1e-3));
    }
  }
  report(4, "Shadow prices vs re-solves", solved && compared > 0 && worst < 0.01,
         fmt("(bus,phase) %s; %d P/Q duals compared, %d excluded, worst rel err %.2e", picks.str().c_str(), compared,
             excluded, worst));
}

}  // namespace

int main() {
  std::printf("vudlmp acceptance (seed %llu)\n", static_cast<unsigned long long>(test::seed()));
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();

  const NetworkSpec s5 = test::simple5();
  const NetworkSpec eu = test::eulv117();
  const double c0 = s5.substation_cost();
  std::vector<std::unique_ptr<Run>> store;

  Run& none = run(store, "simple5 none", s5, mode(s5, UnbalanceMode::kNone));
  Run& hard1 = run(store, "simple5 hard 1%", s5, mode(s5, UnbalanceMode::kHard, 1.0));
  Run& hard2 = run(store, "simple5 hard 2%", s5, mode(s5, UnbalanceMode::kHard, 2.0));
  std::vector<Run*> soft;
  for (double w : {0.0, 1.0, 1.5, 3.0})
    soft.push_back(&run(store, fmt("simple5 soft %g", w), s5, mode(s5, UnbalanceMode::kSoft, 0.0, w * c0)));
  Run& eu_none = run(store, "eulv117 none", eu, mode(eu, UnbalanceMode::kNone));
  Run& eu_soft = run(store, "eulv117 soft 3", eu, mode(eu, UnbalanceMode::kSoft, 0.0, 3.0 * eu.substation_cost()));
  Run& eu_hard = run(store, "eulv117 hard 1%", eu, mode(eu, UnbalanceMode::kHard, 1.0));

  // 5: decomposition on every successful bundled run.
  {
    double worst = 0.0;
    int runs = 0, rows = 0;
    bool all_ok = true;
    for (const Run* r : g_runs) {
      if (!r->sol.success()) {
        if (r != &eu_hard) all_ok = false;
        continue;
      }
      ++runs;
      for (const auto& d : r->dlmp) {
        worst = std::max(worst, std::abs(d.energy + d.loss + d.congestion + d.voltage_limit + d.unbalance - d.total));
        ++rows;
      }
    }
    report(5, "Decomposition completeness", all_ok && worst < 1e-6,
           fmt("%d runs, %d (bus,phase,kind) rows, worst |sum - total| %.2e EUR/kWh", runs, rows, worst));
  }

  // 6: hard limit binds at 1 %.
  {
    bool pass = none.sol.success() && hard1.sol.success();
    double psi = 0.0, comp = 1.0;
    std::string at;
    if (pass) {
      for (int r : hard1.prob.constraints_of(ConstraintKind::kVufLimit)) {
        if (hard1.sol.multipliers(r) > psi) {
          psi = hard1.sol.multipliers(r);
          at = s5.buses[hard1.prob.constraints[r].bus].id;
        }
      }
      comp = kkt_residuals(hard1.prob, hard1.sol.x, hard1.sol.multipliers).complementarity;
      pass = none.max_vuf > 1.0 && hard1.max_vuf <= 1.0 && hard1.max_vuf >= 1.0 - 1e-3 && psi > 0.0 && comp < 1e-6 &&
             hard1.sol.objective > none.sol.objective;
    }
    report(6, "Hard limit at 1 %", pass,
           fmt("max VUF %.4f -> %.6f %%, psi %.4g at bus %s, complementarity %.1e, cost %.4f -> %.4f EUR", none.max_vuf,
               hard1.max_vuf, psi, at.c_str(), comp, none.sol.objective, hard1.sol.objective));
  }

  // 7: soft-limit monotonicity.
  {
    bool pass = true;
    std::ostringstream vufs, costs;
    for (std::size_t i = 0; i < soft.size(); ++i) {
      const Run& r = *soft[i];
      if (!r.sol.success()) {
        pass = false;
        continue;
      }
      const double cost = r.prob.generation_cost(r.sol.x);
      vufs << (i ? " " : "") << fmt("%.4f", r.max_vuf);
      costs << (i ? " " : "") << fmt("%.4f", cost);
      if (i > 0 && soft[i - 1]->sol.success()) {
        pass = pass && r.max_vuf <= soft[i - 1]->max_vuf + 1e-9;
        pass = pass && cost >= soft[i - 1]->prob.generation_cost(soft[i - 1]->sol.x) - 1e-9;
      }
    }
    const double zero_gap = std::abs(soft[0]->sol.objective - none.sol.objective);
    pass = pass && zero_gap < 1e-6;
    report(7, "Soft-limit monotonicity", pass,
           fmt("weights 0/1/1.5/3: max VUF %s %%; cost %s EUR; |w=0 - none| %.1e", vufs.str().c_str(),
               costs.str().c_str(), zero_gap));
  }

  // 8: non-binding hard limit.
  {
    bool pass = hard2.sol.success() && none.sol.success();
    double gap = 0.0, unb = 0.0;
    if (pass) {
      gap = std::abs(hard2.sol.objective - none.sol.objective);
      for (const auto& d : hard2.dlmp) unb = std::max(unb, std::abs(d.unbalance));
      pass = gap < 1e-6 && unb < 1e-6;
    }
    report(8, "Non-binding neutrality at 2 %", pass,
           fmt("|objective - none| %.1e EUR, max |unbalance component| %.1e EUR/kWh", gap, unb));
  }

  // 9: losses fall with the strongest penalty.
  {
    const Run& strongest = *soft.back();
    const bool pass = strongest.sol.success() && eu_soft.sol.success() && eu_none.sol.success() &&
                      strongest.losses_kw <= none.losses_kw && eu_soft.losses_kw <= eu_none.losses_kw;
    report(9, "Loss-reduction trend", pass,
           fmt("simple5 %.4f -> %.4f kW; eulv117 %.4f -> %.4f kW", none.losses_kw, strongest.losses_kw,
               eu_none.losses_kw, eu_soft.losses_kw));
  }

  // 10: wall-clock limits.
  {
    double s5_worst = 0.0;
    for (const Run* r : g_runs)
      if (r->label.rfind("simple5", 0) == 0) s5_worst = std::max(s5_worst, r->seconds);
    const std::string hard_note =
        eu_hard.sol.success() ? fmt("converged in %.2f s", eu_hard.seconds) : to_string(eu_hard.sol.status) + ", reported";
    report(10, "Performance", s5_worst < 5.0 && eu_soft.sol.success() && eu_soft.seconds < 300.0,
           fmt("simple5 slowest %.3f s; eulv117 soft %.2f s; eulv117 hard 1 %% %s", s5_worst, eu_soft.seconds,
               hard_note.c_str()));
  }

  // 11: KKT audit of every success.
  {
    int audited = 0;
    double worst = 0.0;
    for (const Run* r : g_runs) {
      if (!r->sol.success()) continue;
      const KktResiduals k = kkt_residuals(r->prob, r->sol.x, r->sol.multipliers);
      worst = std::max({worst, k.stationarity, k.feasibility, k.complementarity});
      ++audited;
    }
    report(11, "KKT hygiene", audited > 0 && worst < 1e-6,
           fmt("%d successful solves, worst recomputed residual %.2e", audited, worst));
  }

  std::printf("%s: %d of 11 criteria failed\n", g_failures ? "FAILED" : "OK", g_failures);
  return g_failures ? 1 : 0;
}
