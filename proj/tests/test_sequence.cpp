#include "support.hpp"

#include "vudlmp/sequence.hpp"

#include <doctest.h>

#include <cmath>

using namespace vudlmp;
using vudlmp::test::rel_err;

namespace {

const double kPi = std::acos(-1.0);

Complex polar_deg(double mag, double deg) { return std::polar(mag, deg * kPi / 180.0); }

// The textbook test set: phase c sagged to 0.9 pu. With a = 1/120 deg,
// a^2 vb = 1/120, a vc = 0.9/240 so 3 v_neg = 1 + 1/120 + 0.9/240 = -0.1/240,
// and 3 v_pos = 1 + 1 + 0.9 = 2.9. Hence VUF = 0.1 / 2.9.
PhasorSet sagged_c() { return {polar_deg(1.0, 0.0), polar_deg(1.0, -120.0), polar_deg(0.9, 120.0)}; }

double fd_partial(const PhasorSet& v, int phase, bool imag, double h) {
  PhasorSet up = v, down = v;
  const Complex step = imag ? Complex(0.0, h) : Complex(h, 0.0);
  up[phase] += step;
  down[phase] -= step;
  return (f_metric(up) - f_metric(down)) / (2.0 * h);
}

}  // namespace

TEST_SUITE("sequence") {
  TEST_CASE("balanced set is pure positive sequence") {
    const auto s = fortescue(PhasorSet::balanced());
    CHECK(std::abs(s.v_pos - Complex(1.0, 0.0)) < 1e-15);
    CHECK(std::abs(s.v_neg) < 1e-15);
    CHECK(vuf(PhasorSet::balanced(0.97, 0.3)) < 1e-12);
    CHECK(f_metric(PhasorSet::balanced(1.02, -1.1)) < 1e-20);
  }

  TEST_CASE("in-phase set is pure zero sequence") {
    const auto s = fortescue({1.0, 1.0, 1.0});
    CHECK(std::abs(s.v_pos) < 1e-15);
    CHECK(std::abs(s.v_neg) < 1e-15);
    CHECK_THROWS_AS(vuf({1.0, 1.0, 1.0}), DegeneratePointError);
    CHECK_THROWS_AS(grad_f({1.0, 1.0, 1.0}), DegeneratePointError);
  }

  TEST_CASE("sagged phase c oracle") {
    const double ratio = 0.1 / 2.9;
    const auto s = fortescue(sagged_c());
    CHECK(std::abs(s.v_neg) / std::abs(s.v_pos) == doctest::Approx(ratio).epsilon(1e-12));
    CHECK(vuf(sagged_c()) == doctest::Approx(100.0 * ratio).epsilon(1e-12));
    CHECK(vuf(sagged_c()) == doctest::Approx(3.44828).epsilon(1e-5));
    CHECK(f_metric(sagged_c()) == doctest::Approx(11.8906).epsilon(1e-5));
  }

  TEST_CASE("VUF is invariant under complex scaling") {
    std::mt19937_64 rng(test::seed());
    for (int i = 0; i < 200; ++i) {
      const PhasorSet v = test::random_phasors(rng);
      const Complex c = polar_deg(0.1 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng),
                                  std::uniform_real_distribution<double>(-180, 180)(rng));
      const PhasorSet w{c * v.va, c * v.vb, c * v.vc};
      CHECK(rel_err(vuf(w), vuf(v)) < 1e-12);
    }
  }

  TEST_CASE("Fortescue transform is linear") {
    std::mt19937_64 rng(test::seed() + 1);
    for (int i = 0; i < 100; ++i) {
      const PhasorSet u = test::random_phasors(rng), w = test::random_phasors(rng);
      const Complex al = test::random_complex(rng), be = test::random_complex(rng);
      const PhasorSet mix{al * u.va + be * w.va, al * u.vb + be * w.vb, al * u.vc + be * w.vc};
      const auto su = fortescue(u), sw = fortescue(w), sm = fortescue(mix);
      CHECK(std::abs(sm.v_pos - (al * su.v_pos + be * sw.v_pos)) < 1e-13);
      CHECK(std::abs(sm.v_neg - (al * su.v_neg + be * sw.v_neg)) < 1e-13);
    }
  }

  TEST_CASE("f equals the squared Fortescue ratio") {
    std::mt19937_64 rng(test::seed() + 2);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const PhasorSet v = test::random_phasors(rng, 0.5);
      const auto s = fortescue(v);
      const double ratio = 100.0 * std::abs(s.v_neg) / std::abs(s.v_pos);
      worst = std::max(worst, rel_err(f_metric(v), ratio * ratio, 1e-300));
      if (i % 50 == 0) CHECK(rel_err(f_metric(v), vuf(v) * vuf(v), 1e-300) < 1e-12);
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(test::seed() + 3);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const PhasorSet v = test::random_phasors(rng, 0.3);
      const auto g = grad_f(v);
      double err = 0.0, norm = 0.0;
      for (int k = 0; k < 3; ++k) {
        const Complex fd(fd_partial(v, k, false, 1e-6), fd_partial(v, k, true, 1e-6));
        err = std::max(err, std::abs(g.grad[k] - fd));
        norm = std::max(norm, std::abs(g.grad[k]));
      }
      worst = std::max(worst, err / norm);
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("gradient real part is the line-voltage closed form") {
    std::mt19937_64 rng(test::seed() + 4);
    for (int i = 0; i < 100; ++i) {
      const PhasorSet v = test::random_phasors(rng);
      const auto g = grad_f(v);
      const Complex s = line_voltage_square_sum(v);
      for (int k = 0; k < 3; ++k) {
        const double closed = 1e4 * std::sqrt(3.0) * (std::conj(opposite_line_voltage(v, k)) * s).imag() / (g.d * g.d);
        CHECK(rel_err(g.grad[k].real(), closed, 1e-12) < 1e-9);
      }
    }
  }

  TEST_CASE("balanced sets have an exactly vanishing gradient") {
    std::mt19937_64 rng(test::seed() + 5);
    std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-kPi, kPi);
    for (int i = 0; i < 200; ++i) {
      const PhasorSet v = PhasorSet::balanced(mag(rng), ang(rng));
      CHECK(std::abs(line_voltage_square_sum(v)) < 1e-12);
      const auto g = grad_f(v);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(g.grad[k]) < 1e-12);
    }
  }

  TEST_CASE("largest opposite line voltage carries the largest weighted term") {
    std::mt19937_64 rng(test::seed() + 6);
    for (int i = 0; i < 100; ++i) {
      const PhasorSet v = test::random_phasors(rng);
      const Complex s = line_voltage_square_sum(v);
      int arg_line = 0, arg_term = 0;
      for (int k = 1; k < 3; ++k) {
        if (std::abs(opposite_line_voltage(v, k)) > std::abs(opposite_line_voltage(v, arg_line))) arg_line = k;
        if (std::abs(std::conj(opposite_line_voltage(v, k)) * s) >
            std::abs(std::conj(opposite_line_voltage(v, arg_term)) * s))
          arg_term = k;
      }
      CHECK(arg_line == arg_term);
    }
  }

  TEST_CASE("Hessian matches differences of the gradient") {
    std::mt19937_64 rng(test::seed() + 7);
    for (int i = 0; i < 50; ++i) {
      const PhasorSet v = test::random_phasors(rng);
      const auto h = hess_f(v);
      CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-14 * h.cwiseAbs().maxCoeff());
      const double step = 1e-6;
      Eigen::Matrix<double, 6, 6> fd;
      for (int c = 0; c < 6; ++c) {
        PhasorSet up = v, down = v;
        const Complex d = c % 2 == 0 ? Complex(step, 0.0) : Complex(0.0, step);
        up[c / 2] += d;
        down[c / 2] -= d;
        const auto gu = grad_f(up), gd = grad_f(down);
        for (int r = 0; r < 6; ++r) {
          const double a = r % 2 == 0 ? gu.grad[r / 2].real() : gu.grad[r / 2].imag();
          const double b = r % 2 == 0 ? gd.grad[r / 2].real() : gd.grad[r / 2].imag();
          fd(r, c) = (a - b) / (2.0 * step);
        }
      }
      CHECK((h - fd).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}
