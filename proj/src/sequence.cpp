#include "vudlmp/sequence.hpp"

#include <cmath>

namespace vudlmp {

namespace {

constexpr double kPercentSquared = 1e4;
const double kSqrt3 = std::sqrt(3.0);

// Unscaled sequence sums: 3*v_pos and 3*v_neg.
Complex positive_sum(const PhasorSet& v) { return v.va + kRotA * v.vb + kRotA * kRotA * v.vc; }
Complex negative_sum(const PhasorSet& v) { return v.va + kRotA * kRotA * v.vb + kRotA * v.vc; }

void check_positive(const Complex& pos_sum) {
  if (!(std::abs(pos_sum) / 3.0 > kEpsPositiveSequence))
    throw DegeneratePointError("positive-sequence voltage is (numerically) zero; VUF is undefined");
}

// Real Gram matrix of a complex linear form over (Re v_k, Im v_k) pairs.
Eigen::Matrix<double, 6, 6> gram(const std::array<Complex, 3>& coeff) {
  Eigen::Matrix<std::complex<double>, 6, 1> row;
  for (int k = 0; k < 3; ++k) {
    row(2 * k) = coeff[k];
    row(2 * k + 1) = Complex(0.0, 1.0) * coeff[k];
  }
  return (row.conjugate() * row.transpose()).real();
}

}  // namespace

PhasorSet PhasorSet::balanced(double magnitude, double angle_rad) {
  const Complex va = std::polar(magnitude, angle_rad);
  return {va, va * kRotA * kRotA, va * kRotA};
}

SequencePair fortescue(const PhasorSet& v) { return {positive_sum(v) / 3.0, negative_sum(v) / 3.0}; }

double vuf(const PhasorSet& v) {
  const Complex pos = positive_sum(v);
  check_positive(pos);
  return 100.0 * std::abs(negative_sum(v)) / std::abs(pos);
}

double f_metric(const PhasorSet& v) {
  const Complex pos = positive_sum(v);
  check_positive(pos);
  return kPercentSquared * std::norm(negative_sum(v)) / std::norm(pos);
}

Complex opposite_line_voltage(const PhasorSet& v, int phase) {
  switch (phase) {
    case 0: return v.vb - v.vc;
    case 1: return v.vc - v.va;
    default: return v.va - v.vb;
  }
}

// The three squares cancel near balance, so they are summed in extended precision.
Complex line_voltage_square_sum(const PhasorSet& v) {
  using Wide = std::complex<long double>;
  const Wide a(v.va), b(v.vb), c(v.vc);
  const Wide ab = a - b, bc = b - c, ca = c - a;
  const Wide s = ab * ab + bc * bc + ca * ca;
  return {static_cast<double>(s.real()), static_cast<double>(s.imag())};
}

UnbalanceGradient grad_f(const PhasorSet& v) {
  const Complex pos = positive_sum(v);
  check_positive(pos);
  UnbalanceGradient out{};
  out.d = std::norm(pos);
  const Complex sum = line_voltage_square_sum(v);
  const Complex scale(0.0, -kSqrt3 * kPercentSquared / (out.d * out.d));
  for (int k = 0; k < 3; ++k) out.grad[k] = scale * std::conj(opposite_line_voltage(v, k)) * sum;
  return out;
}

Eigen::Matrix<double, 6, 6> hess_f(const PhasorSet& v) {
  const Complex pos = positive_sum(v);
  check_positive(pos);
  static const Eigen::Matrix<double, 6, 6> a_neg = gram({1.0, kRotA * kRotA, kRotA});
  static const Eigen::Matrix<double, 6, 6> a_pos = gram({1.0, kRotA, kRotA * kRotA});

  Eigen::Matrix<double, 6, 1> x;
  for (int k = 0; k < 3; ++k) {
    x(2 * k) = v[k].real();
    x(2 * k + 1) = v[k].imag();
  }
  const double n = x.dot(a_neg * x);
  const double p = x.dot(a_pos * x);
  const Eigen::Matrix<double, 6, 1> gn = 2.0 * a_neg * x;
  const Eigen::Matrix<double, 6, 1> gp = 2.0 * a_pos * x;
  const double p2 = p * p;
  Eigen::Matrix<double, 6, 6> h = 2.0 * a_neg / p - (gn * gp.transpose() + gp * gn.transpose()) / p2 -
                                  n * 2.0 * a_pos / p2 + 2.0 * n * gp * gp.transpose() / (p2 * p);
  return kPercentSquared * h;
}

}  // namespace vudlmp
