#include "support.hpp"

#include "vudlmp/opf.hpp"

#include <doctest.h>

using namespace vudlmp;

namespace {

UnbalanceConfig hard(double limit) {
  UnbalanceConfig c = test::simple5().unbalance;
  c.mode = UnbalanceMode::kHard;
  c.vuf_limit_pct = limit;
  return c;
}

UnbalanceConfig soft(double w) {
  UnbalanceConfig c = test::simple5().unbalance;
  c.mode = UnbalanceMode::kSoft;
  c.penalty_weight = w;
  return c;
}

Eigen::MatrixXd dense_jacobian(const OpfProblem& prob, const Eigen::VectorXd& x) {
  std::vector<Eigen::Triplet<double>> t;
  eval_jacobian(prob, x, t);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(prob.num_constraints(), prob.num_variables());
  for (const auto& e : t) j(e.row(), e.col()) += e.value();
  return j;
}

// A nearby interior point: power-flow start plus a small deterministic jitter.
Eigen::VectorXd jittered_point(const OpfProblem& prob) {
  const OperatingPoint pt = solve_pf(prob.net, nominal_injections(prob.net));
  Eigen::VectorXd x = initial_point(prob, pt);
  std::mt19937_64 rng(test::seed());
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int i = 0; i < x.size(); ++i)
    if (!prob.fixed[i]) x(i) += u(rng);
  return x;
}

}  // namespace

TEST_SUITE("opf") {
  TEST_CASE("unbalance rows follow the mode") {
    const NetworkSpec s5 = test::simple5();
    CHECK(build_problem(s5, UnbalanceConfig{}).constraints_of(ConstraintKind::kVufLimit).empty());
    CHECK(build_problem(s5, soft(1.0)).constraints_of(ConstraintKind::kVufLimit).empty());
    const OpfProblem h = build_problem(s5, hard(1.0));
    const auto rows = h.constraints_of(ConstraintKind::kVufLimit);
    CHECK(rows.size() == 5);
    for (int r : rows) {
      CHECK(h.constraints[r].vuf_bound == doctest::Approx(1.0));
      CHECK_FALSE(h.constraints[r].equality);
    }
    CHECK(build_problem(s5, hard(2.0)).constraints[rows[0]].vuf_bound == doctest::Approx(4.0));

    const NetworkSpec eu = test::eulv117();
    UnbalanceConfig c = eu.unbalance;
    c.mode = UnbalanceMode::kHard;
    c.vuf_limit_pct = 1.0;
    CHECK(build_problem(eu, c).constraints_of(ConstraintKind::kVufLimit).size() == 15);
  }

  TEST_CASE("balance rows cover every non-substation bus and phase") {
    const NetworkSpec s5 = test::simple5();
    const OpfProblem p = build_problem(s5, UnbalanceConfig{});
    CHECK(p.constraints_of(ConstraintKind::kPBalance).size() >= 15);
    CHECK(p.constraints_of(ConstraintKind::kQBalance).size() == p.constraints_of(ConstraintKind::kPBalance).size());
    CHECK(p.constraints_of(ConstraintKind::kFlowDefinition).size() == 5 * 3 * 4);
  }

  TEST_CASE("every constraint kind has a multiplier symbol") {
    for (int k = 0; k <= static_cast<int>(ConstraintKind::kFlowDefinition); ++k) {
      const auto kind = static_cast<ConstraintKind>(k);
      CHECK_FALSE(multiplier_symbol(kind).empty());
      CHECK_FALSE(to_string(kind).empty());
    }
    CHECK(multiplier_symbol(ConstraintKind::kVufLimit) == "psi");
    CHECK(multiplier_symbol(ConstraintKind::kPBalance) == "phi_p");
  }

  TEST_CASE("constraint Jacobian matches finite differences") {
    for (const auto& cfg : {hard(1.0), soft(2.0)}) {
      const OpfProblem prob = build_problem(test::simple5(), cfg);
      const Eigen::VectorXd x = jittered_point(prob);
      const Eigen::MatrixXd j = dense_jacobian(prob, x);
      const double h = 1e-6;
      double worst = 0.0;
      for (int i = 0; i < prob.num_variables(); ++i) {
        Eigen::VectorXd up = x, down = x;
        up(i) += h;
        down(i) -= h;
        const Eigen::VectorXd col = (eval_constraints(prob, up) - eval_constraints(prob, down)) / (2.0 * h);
        worst = std::max(worst, (col - j.col(i)).cwiseAbs().maxCoeff() / std::max(1.0, j.col(i).cwiseAbs().maxCoeff()));
      }
      CHECK(worst < 1e-6);

      const Eigen::VectorXd g = eval_objective_gradient(prob, x);
      for (int i = 0; i < prob.num_variables(); ++i) {
        Eigen::VectorXd up = x, down = x;
        up(i) += h;
        down(i) -= h;
        const double fd = (eval_objective(prob, up) - eval_objective(prob, down)) / (2.0 * h);
        CHECK(std::abs(fd - g(i)) < 1e-5 * std::max(1.0, std::abs(g(i))));
      }
    }
  }

  TEST_CASE("Lagrangian Hessian matches differences of the gradient") {
    for (const auto& cfg : {hard(1.0), soft(2.0)}) {
      const OpfProblem prob = build_problem(test::simple5(), cfg);
      const Eigen::VectorXd x = jittered_point(prob);
      std::mt19937_64 rng(test::seed() + 1);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      Eigen::VectorXd m(prob.num_constraints());
      for (int i = 0; i < m.size(); ++i) m(i) = u(rng);
      const double sigma = 0.7;

      std::vector<Eigen::Triplet<double>> t;
      eval_hessian(prob, x, sigma, m, t);
      Eigen::MatrixXd hl = Eigen::MatrixXd::Zero(prob.num_variables(), prob.num_variables());
      for (const auto& e : t) {
        CHECK(e.row() >= e.col());
        hl(e.row(), e.col()) += e.value();
      }
      const Eigen::MatrixXd hess = hl + hl.transpose() - Eigen::MatrixXd(hl.diagonal().asDiagonal());

      auto lag_grad = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
        return sigma * eval_objective_gradient(prob, y) + dense_jacobian(prob, y).transpose() * m;
      };
      const double h = 1e-6;
      double worst = 0.0;
      for (int i = 0; i < prob.num_variables(); ++i) {
        Eigen::VectorXd up = x, down = x;
        up(i) += h;
        down(i) -= h;
        const Eigen::VectorXd col = (lag_grad(up) - lag_grad(down)) / (2.0 * h);
        worst = std::max(worst, (col - hess.col(i)).cwiseAbs().maxCoeff() / std::max(1.0, hess.col(i).cwiseAbs().maxCoeff()));
      }
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("flat start on an unloaded feeder is feasible") {
    const NetworkSpec net = parse_network(test::two_bus_doc({0, 0, 0}, {0, 0, 0}).dump());
    const OpfProblem prob = build_problem(net, UnbalanceConfig{});
    const Eigen::VectorXd c = eval_constraints(prob, flat_start(prob));
    for (int i = 0; i < prob.num_constraints(); ++i) {
      if (prob.constraints[i].equality)
        CHECK(std::abs(c(i)) < 1e-12);
      else
        CHECK(c(i) <= 1e-12);
    }
  }

  TEST_CASE("building is deterministic") {
    const NetworkSpec net = test::eulv117();
    const OpfProblem a = build_problem(net, net.unbalance);
    const OpfProblem b = build_problem(net, net.unbalance);
    CHECK(a.layout.names == b.layout.names);
    REQUIRE(a.num_constraints() == b.num_constraints());
    for (int i = 0; i < a.num_constraints(); ++i) CHECK(a.constraints[i].label(a.net) == b.constraints[i].label(b.net));
  }

  TEST_CASE("invalid configurations are rejected") {
    UnbalanceConfig c = hard(1.0);
    c.vuf_limit_pct = -1.0;
    CHECK_THROWS_AS(build_problem(test::simple5(), c), ValidationError);
    c = soft(-2.0);
    CHECK_THROWS_AS(build_problem(test::simple5(), c), ValidationError);
  }
}
