#pragma once

#include <span>
#include <variant>
#include <vector>

#include "cqgrating/error.hpp"

namespace cqgrating {

// sin^m(alpha (t - beta)) on [beta, beta + pi/alpha], zero elsewhere.
// The profile is C^{m-1} across both window ends.
struct SinMPulse {
  int m = 4;
  double alpha_inc = 4.0;
  double beta_inc = 0.5;
};

// sin(omega0 t) exp(-spread (t - center)^2); not compactly supported but
// below 1e-7 for t < 0 at the shipped parameters.
struct GaussSinePulse {
  double omega0 = 2.899;
  double spread = 2.0;
  double center = 3.0;
};

using Pulse = std::variant<SinMPulse, GaussSinePulse>;

void validate_pulse(const Pulse& pulse);

double eval_pulse(const Pulse& pulse, double t);
double eval_pulse_derivative(const Pulse& pulse, double t);

// Direction d = (cos alpha, sin alpha) of the incident plane wave, alpha
// measured from the x axis, and the wave speed c below the grating.
struct IncidentGeometry {
  double angle_alpha = kPi / 2.0;
  double d1 = 0.0;
  double d2 = 1.0;
  double L = 1.0;
  double c = 1.0;

  // from_horizontal = true: angle is alpha itself. Otherwise the angle is
  // measured from the grating normal (theta), so d1 = sin(theta).
  static IncidentGeometry from_angle(double angle_rad, bool from_horizontal, double L, double c);
  static IncidentGeometry from_degrees(double angle_deg, bool from_horizontal, double L, double c);

  // Time shift L d1 / c introduced by the moving frame.
  double frame_delay() const { return L * d1 / c; }
};

// w^i(z, t_n) = f(t_n - L d1 / c - d2 z / c); independent of x.
std::vector<double> incident_trace_at_z(const Pulse& pulse, const IncidentGeometry& geom, double z,
                                        std::span<const double> t_samples);

// True iff the incident field vanishes in the cell for t < 0: d1 >= 0, d2 > 0
// and |f| <= 1e-7 on a fine grid of negative arguments.
bool causality_check(const Pulse& pulse, const IncidentGeometry& geom, double H);

// Largest |f(t)| on a fine grid over [t0, t1].
double pulse_peak(const Pulse& pulse, double t0, double t1);

}  // namespace cqgrating
