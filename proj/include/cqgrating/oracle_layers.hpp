#pragma once

// Closed-form reference solutions for flat layered media at normal
// incidence (time domain) and for stacks of homogeneous layers in the
// Laplace domain.

#include <vector>

#include "cqgrating/error.hpp"
#include "cqgrating/pulses.hpp"

namespace cqgrating {

// Interface at z = h_i. The incident wave travels up through the lower
// medium with slowness sqrt(eps_plus) / c; the upper medium has slowness
// sqrt(eps_minus) / c.
struct TwoLayerConfig {
  double eps_minus = 1.0;
  double eps_plus = 4.0;
  double h_i = 0.5;
  double c = 1.0;

  // Throws InvalidParameter; H <= 0 skips the upper bound on h_i.
  void validate(double H = 0.0) const;
};

struct FresnelCoefficients {
  double r = 0.0;
  double t = 1.0;
};

// r = (sqrt(eps_plus) - sqrt(eps_minus)) / (sqrt(eps_plus) + sqrt(eps_minus)),
// t = 2 sqrt(eps_plus) / (sqrt(eps_plus) + sqrt(eps_minus)) = 1 + r.
FresnelCoefficients reflection_transmission_coeffs(const TwoLayerConfig& cfg);

// Total field, independent of x:
//   z <  h_i: f(t - a (z - h_i)) + r f(t + a (z - h_i)),  a = sqrt(eps_plus) / c
//   z >= h_i: t f(t - b (z - h_i)),                       b = sqrt(eps_minus) / c
double exact_field(const TwoLayerConfig& cfg, const Pulse& pulse, double x, double z, double t);
double exact_field_dz(const TwoLayerConfig& cfg, const Pulse& pulse, double x, double z, double t);

// The same pulse delayed by `delay`: g(t) = f(t - delay). Only pulses with a
// window parameter can be shifted exactly; others throw InvalidParameter.
Pulse delayed_pulse(const Pulse& pulse, double delay);

// Laplace-domain stack. Layer 0 fills z < z_first and the last layer is
// unbounded above; interior layers need thickness > 0. The incident field is
// exp(-k_0 z), k_j = (s/c) sqrt(eps_j - d1^2) with Re k_j > 0.
struct Layer {
  Complex eps{1.0, 0.0};
  double thickness = 0.0;  // ignored for the first and last layer
};

class LayeredSolution {
 public:
  // Reflected and transmitted amplitudes relative to the incident field at
  // the first interface.
  Complex reflection() const { return reflection_; }
  Complex transmission() const { return transmission_; }
  const std::vector<double>& interfaces() const { return interfaces_; }

  Complex field(double z) const;
  Complex field_dz(double z) const;

 private:
  friend LayeredSolution layered_frequency_oracle(const std::vector<Layer>&, Complex, double, double,
                                                  double);
  std::vector<double> interfaces_;
  std::vector<Complex> k_;
  std::vector<Complex> a_;  // coefficient of exp(-k (z - lower interface))
  std::vector<Complex> b_;  // coefficient of exp(-k (upper interface - z))
  Complex incident_scale_;  // exp(-k_0 z_first)
  Complex reflection_;
  Complex transmission_;

  int layer_of(double z) const;
};

// Throws DegenerateLayer for interior layers of zero thickness and
// InvalidParameter for fewer than one layer or Re(s) <= 0.
LayeredSolution layered_frequency_oracle(const std::vector<Layer>& layers, Complex s, double c,
                                         double d1 = 0.0, double z_first = 0.0);

}  // namespace cqgrating
