#include "cqgrating/pulses.hpp"

#include <algorithm>
#include <cmath>

namespace cqgrating {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kCausalityThreshold = 1e-7;

}  // namespace

void validate_pulse(const Pulse& pulse) {
  std::visit(Overloaded{
                 [](const SinMPulse& p) {
                   if (p.m < 1 || !(p.alpha_inc > 0.0) || !(p.beta_inc >= 0.0)) {
                     throw Error(ErrorCode::InvalidParameter,
                                 "sin^m pulse needs m >= 1, alpha > 0, beta >= 0");
                   }
                 },
                 [](const GaussSinePulse& p) {
                   if (!(p.spread > 0.0)) {
                     throw Error(ErrorCode::InvalidParameter, "Gaussian spread must be positive");
                   }
                 },
             },
             pulse);
}

double eval_pulse(const Pulse& pulse, double t) {
  return std::visit(Overloaded{
                        [t](const SinMPulse& p) {
                          const double end = p.beta_inc + kPi / p.alpha_inc;
                          if (t <= p.beta_inc || t >= end) return 0.0;
                          return std::pow(std::sin(p.alpha_inc * (t - p.beta_inc)), p.m);
                        },
                        [t](const GaussSinePulse& p) {
                          const double dt = t - p.center;
                          return std::sin(p.omega0 * t) * std::exp(-p.spread * dt * dt);
                        },
                    },
                    pulse);
}

double eval_pulse_derivative(const Pulse& pulse, double t) {
  return std::visit(
      Overloaded{
          [t](const SinMPulse& p) {
            const double end = p.beta_inc + kPi / p.alpha_inc;
            if (t <= p.beta_inc || t >= end) return 0.0;
            const double phase = p.alpha_inc * (t - p.beta_inc);
            return p.m * p.alpha_inc * std::pow(std::sin(phase), p.m - 1) * std::cos(phase);
          },
          [t](const GaussSinePulse& p) {
            const double dt = t - p.center;
            const double envelope = std::exp(-p.spread * dt * dt);
            return envelope * (p.omega0 * std::cos(p.omega0 * t) -
                               2.0 * p.spread * dt * std::sin(p.omega0 * t));
          },
      },
      pulse);
}

IncidentGeometry IncidentGeometry::from_angle(double angle_rad, bool from_horizontal, double L,
                                              double c) {
  IncidentGeometry g;
  g.angle_alpha = from_horizontal ? angle_rad : kPi / 2.0 - angle_rad;
  if (!(g.angle_alpha > 0.0 && g.angle_alpha < kPi)) {
    throw Error(ErrorCode::InvalidParameter, "incidence angle must give 0 < alpha < pi");
  }
  if (!(L > 0.0) || !(c > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "period and wave speed must be positive");
  }
  g.d1 = std::cos(g.angle_alpha);
  g.d2 = std::sin(g.angle_alpha);
  // exact values at normal incidence keep the mode-0 closure transparent
  if (g.angle_alpha == kPi / 2.0) {
    g.d1 = 0.0;
    g.d2 = 1.0;
  }
  g.L = L;
  g.c = c;
  return g;
}

IncidentGeometry IncidentGeometry::from_degrees(double angle_deg, bool from_horizontal, double L,
                                                double c) {
  if (from_horizontal && angle_deg == 90.0) return from_angle(kPi / 2.0, true, L, c);
  if (!from_horizontal && angle_deg == 0.0) return from_angle(kPi / 2.0, true, L, c);
  return from_angle(angle_deg * kPi / 180.0, from_horizontal, L, c);
}

std::vector<double> incident_trace_at_z(const Pulse& pulse, const IncidentGeometry& geom, double z,
                                        std::span<const double> t_samples) {
  const double delay = geom.frame_delay() + geom.d2 * z / geom.c;
  std::vector<double> out;
  out.reserve(t_samples.size());
  for (double t : t_samples) out.push_back(eval_pulse(pulse, t - delay));
  return out;
}

bool causality_check(const Pulse& pulse, const IncidentGeometry& geom, double H) {
  if (!(geom.d1 >= 0.0) || !(geom.d2 > 0.0)) return false;
  // Arguments t - L d1/c - d2 z/c for t < 0 and 0 < z < H are all negative
  // and reach down to -(span + delays).
  const double reach = 20.0 + geom.frame_delay() + geom.d2 * H / geom.c;
  constexpr int kSamples = 200000;
  for (int k = 1; k <= kSamples; ++k) {
    const double tau = -reach * static_cast<double>(k) / kSamples;
    if (std::abs(eval_pulse(pulse, tau)) > kCausalityThreshold) return false;
  }
  return true;
}

double pulse_peak(const Pulse& pulse, double t0, double t1) {
  constexpr int kSamples = 100000;
  double peak = 0.0;
  for (int k = 0; k <= kSamples; ++k) {
    const double t = t0 + (t1 - t0) * static_cast<double>(k) / kSamples;
    peak = std::max(peak, std::abs(eval_pulse(pulse, t)));
  }
  return peak;
}

}  // namespace cqgrating
