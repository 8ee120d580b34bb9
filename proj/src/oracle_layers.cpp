#include "cqgrating/oracle_layers.hpp"

#include <cmath>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace cqgrating {

void TwoLayerConfig::validate(double H) const {
  if (!(eps_minus > 0.0) || !(eps_plus > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "layer permittivities must be positive");
  }
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidParameter, "wave speed must be positive");
  if (!(h_i > 0.0) || (H > 0.0 && !(h_i < H))) {
    throw Error(ErrorCode::InvalidParameter, "interface height must lie inside the cell");
  }
}

FresnelCoefficients reflection_transmission_coeffs(const TwoLayerConfig& cfg) {
  cfg.validate();
  const double a = std::sqrt(cfg.eps_plus);
  const double b = std::sqrt(cfg.eps_minus);
  FresnelCoefficients out;
  out.r = (a - b) / (a + b);
  out.t = 1.0 + out.r;
  return out;
}

double exact_field(const TwoLayerConfig& cfg, const Pulse& pulse, double /*x*/, double z,
                   double t) {
  const auto coeffs = reflection_transmission_coeffs(cfg);
  const double dz = z - cfg.h_i;
  if (z < cfg.h_i) {
    const double a = std::sqrt(cfg.eps_plus) / cfg.c;
    return eval_pulse(pulse, t - a * dz) + coeffs.r * eval_pulse(pulse, t + a * dz);
  }
  const double b = std::sqrt(cfg.eps_minus) / cfg.c;
  return coeffs.t * eval_pulse(pulse, t - b * dz);
}

double exact_field_dz(const TwoLayerConfig& cfg, const Pulse& pulse, double /*x*/, double z,
                      double t) {
  const auto coeffs = reflection_transmission_coeffs(cfg);
  const double dz = z - cfg.h_i;
  if (z < cfg.h_i) {
    const double a = std::sqrt(cfg.eps_plus) / cfg.c;
    return -a * eval_pulse_derivative(pulse, t - a * dz) +
           coeffs.r * a * eval_pulse_derivative(pulse, t + a * dz);
  }
  const double b = std::sqrt(cfg.eps_minus) / cfg.c;
  return -coeffs.t * b * eval_pulse_derivative(pulse, t - b * dz);
}

Pulse delayed_pulse(const Pulse& pulse, double delay) {
  if (const auto* p = std::get_if<SinMPulse>(&pulse)) {
    SinMPulse out = *p;
    out.beta_inc += delay;
    return out;
  }
  throw Error(ErrorCode::InvalidParameter, "only windowed sin^m pulses can be shifted exactly");
}

int LayeredSolution::layer_of(double z) const {
  int j = 0;
  while (j < static_cast<int>(interfaces_.size()) && z >= interfaces_[static_cast<std::size_t>(j)]) {
    ++j;
  }
  return j;
}

Complex LayeredSolution::field(double z) const {
  const int j = layer_of(z);
  const int last = static_cast<int>(k_.size()) - 1;
  const auto u = static_cast<std::size_t>(j);
  if (j == 0) {
    if (interfaces_.empty()) return std::exp(-k_[0] * z);
    const double z1 = interfaces_[0];
    return std::exp(-k_[0] * z) + incident_scale_ * reflection_ * std::exp(k_[0] * (z - z1));
  }
  const double lo = interfaces_[u - 1];
  if (j == last) return incident_scale_ * transmission_ * std::exp(-k_[u] * (z - lo));
  const double hi = interfaces_[u];
  return incident_scale_ * (a_[u] * std::exp(-k_[u] * (z - lo)) + b_[u] * std::exp(-k_[u] * (hi - z)));
}

Complex LayeredSolution::field_dz(double z) const {
  const int j = layer_of(z);
  const int last = static_cast<int>(k_.size()) - 1;
  const auto u = static_cast<std::size_t>(j);
  if (j == 0) {
    if (interfaces_.empty()) return -k_[0] * std::exp(-k_[0] * z);
    const double z1 = interfaces_[0];
    return -k_[0] * std::exp(-k_[0] * z) +
           incident_scale_ * reflection_ * k_[0] * std::exp(k_[0] * (z - z1));
  }
  const double lo = interfaces_[u - 1];
  if (j == last) return -incident_scale_ * transmission_ * k_[u] * std::exp(-k_[u] * (z - lo));
  const double hi = interfaces_[u];
  return incident_scale_ * k_[u] *
         (-a_[u] * std::exp(-k_[u] * (z - lo)) + b_[u] * std::exp(-k_[u] * (hi - z)));
}

LayeredSolution layered_frequency_oracle(const std::vector<Layer>& layers, Complex s, double c,
                                         double d1, double z_first) {
  if (layers.empty()) throw Error(ErrorCode::InvalidParameter, "at least one layer is required");
  if (!(s.real() > 0.0) || !(c > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "layered oracle needs Re(s) > 0 and c > 0");
  }
  const int K = static_cast<int>(layers.size());
  LayeredSolution sol;
  for (const auto& layer : layers) {
    Complex k = s / c * std::sqrt(layer.eps - d1 * d1);
    if (k.real() < 0.0) k = -k;
    sol.k_.push_back(k);
  }
  sol.a_.assign(static_cast<std::size_t>(K), Complex{});
  sol.b_.assign(static_cast<std::size_t>(K), Complex{});
  double z = z_first;
  for (int j = 1; j < K; ++j) {
    sol.interfaces_.push_back(z);
    if (j < K - 1) {
      const double d = layers[static_cast<std::size_t>(j)].thickness;
      if (!(d > 0.0)) {
        throw Error(ErrorCode::DegenerateLayer,
                    "interior layer " + std::to_string(j) + " has non-positive thickness");
      }
      z += d;
    }
  }
  sol.incident_scale_ = std::exp(-sol.k_[0] * z_first);
  if (K == 1) {
    sol.reflection_ = 0.0;
    sol.transmission_ = 1.0;
    return sol;
  }

  // Unknowns: R, (a_j, b_j) for interior layers, T.
  const int n = 2 * (K - 1);
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
  auto col_a = [](int j) { return 1 + 2 * (j - 1); };
  const int col_T = n - 1;
  for (int i = 1; i < K; ++i) {
    const int row = 2 * (i - 1);
    const auto below = i - 1;
    const auto above = i;
    // contributions of the layer below the interface (+) and above it (-)
    if (below == 0) {
      const Complex k = sol.k_[0];
      A(row, 0) += 1.0;
      A(row + 1, 0) += k;
      rhs(row) -= 1.0;
      rhs(row + 1) -= -k;
    } else {
      const Complex k = sol.k_[static_cast<std::size_t>(below)];
      const Complex E = std::exp(-k * layers[static_cast<std::size_t>(below)].thickness);
      A(row, col_a(below)) += E;
      A(row, col_a(below) + 1) += 1.0;
      A(row + 1, col_a(below)) += -k * E;
      A(row + 1, col_a(below) + 1) += k;
    }
    if (above == K - 1) {
      const Complex k = sol.k_[static_cast<std::size_t>(above)];
      A(row, col_T) -= 1.0;
      A(row + 1, col_T) -= -k;
    } else {
      const Complex k = sol.k_[static_cast<std::size_t>(above)];
      const Complex E = std::exp(-k * layers[static_cast<std::size_t>(above)].thickness);
      A(row, col_a(above)) -= 1.0;
      A(row, col_a(above) + 1) -= E;
      A(row + 1, col_a(above)) -= -k;
      A(row + 1, col_a(above) + 1) -= k * E;
    }
  }
  const Eigen::VectorXcd x = A.fullPivLu().solve(rhs);
  sol.reflection_ = x(0);
  sol.transmission_ = x(col_T);
  for (int j = 1; j < K - 1; ++j) {
    sol.a_[static_cast<std::size_t>(j)] = x(col_a(j));
    sol.b_[static_cast<std::size_t>(j)] = x(col_a(j) + 1);
  }
  return sol;
}

}  // namespace cqgrating
