#pragma once

// Symmetrical-component arithmetic on a single bus.
//
// The unbalance metric is carried in squared form, f = VUF^2, with VUF in
// percent, so f is in squared percent. All derivative routines differentiate
// f, never the square root.

#include "vudlmp/netmodel.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <stdexcept>

namespace vudlmp {

/// Rotation operator a = exp(j*120 deg).
inline const Complex kRotA{-0.5, 0.86602540378443864676};

/// Threshold on |v_pos| below which VUF is undefined.
inline constexpr double kEpsPositiveSequence = 1e-9;

class DegeneratePointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct PhasorSet {
  Complex va;
  Complex vb;
  Complex vc;

  [[nodiscard]] Complex operator[](int phase) const { return phase == 0 ? va : (phase == 1 ? vb : vc); }
  Complex& operator[](int phase) { return phase == 0 ? va : (phase == 1 ? vb : vc); }

  /// Balanced positive-sequence set with phase a at `magnitude` and angle `angle_rad`.
  static PhasorSet balanced(double magnitude = 1.0, double angle_rad = 0.0);
};

struct SequencePair {
  Complex v_pos;
  Complex v_neg;
};

/// Gradient of f with respect to each phase voltage.
///
/// `grad[k]` packs the two real partials into one complex number,
/// df/dRe(v_k) + j*df/dIm(v_k), which equals twice the conjugate Wirtinger
/// derivative. Its real part is the line-voltage closed form
/// sqrt(3) * Im{conj(v_opp) * (v_ab^2 + v_bc^2 + v_ca^2)} / D^2 (times 1e4 for
/// percent units), where v_opp is the opposite line voltage of phase k.
struct UnbalanceGradient {
  std::array<Complex, 3> grad;
  double d;  // |va + a*vb + a^2*vc|^2, the squared positive-sequence magnitude (x9)
};

SequencePair fortescue(const PhasorSet& v);

/// Voltage unbalance factor in percent. Throws DegeneratePointError when
/// |v_pos| <= kEpsPositiveSequence.
double vuf(const PhasorSet& v);

/// f = VUF^2 in squared percent.
double f_metric(const PhasorSet& v);

/// Line voltage opposite phase k: v_bc for a, v_ca for b, v_ab for c.
Complex opposite_line_voltage(const PhasorSet& v, int phase);

/// v_ab^2 + v_bc^2 + v_ca^2. Vanishes exactly for any balanced set.
Complex line_voltage_square_sum(const PhasorSet& v);

UnbalanceGradient grad_f(const PhasorSet& v);

/// Hessian of f over the real vector (Re va, Im va, Re vb, Im vb, Re vc, Im vc).
Eigen::Matrix<double, 6, 6> hess_f(const PhasorSet& v);

}  // namespace vudlmp
