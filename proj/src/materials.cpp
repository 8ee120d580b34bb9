#include "cqgrating/materials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cqgrating {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kGamma0Floor = 1e-6;

}  // namespace

SellmeierParams SellmeierParams::from_wavelength(
    const std::vector<std::pair<double, double>>& terms_um2, double c0_um_per_fs) {
  if (!(c0_um_per_fs > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "Sellmeier conversion needs c0 > 0");
  }
  SellmeierParams params;
  const double scale = 4.0 * kPi * kPi * c0_um_per_fs * c0_um_per_fs;
  for (const auto& [alpha, b_um2] : terms_um2) {
    params.terms.push_back({alpha, b_um2 / scale});
  }
  validate_model(params);
  return params;
}

void validate_model(const MaterialModel& model) {
  std::visit(Overloaded{
                 [](const ConstantModel& m) {
                   if (!std::isfinite(m.value.real()) || !std::isfinite(m.value.imag())) {
                     throw Error(ErrorCode::InvalidParameter, "constant coefficient is not finite");
                   }
                 },
                 [](const DrudeParams& m) {
                   if (!(m.alpha > 0.0) || !(m.beta > 0.0) || !(m.gamma >= 0.0)) {
                     throw Error(ErrorCode::InvalidParameter,
                                 "Drude model needs alpha > 0, beta > 0, gamma >= 0");
                   }
                 },
                 [](const SellmeierParams& m) {
                   if (m.terms.empty() || m.terms.size() > SellmeierParams::kMaxTerms) {
                     throw Error(ErrorCode::InvalidParameter,
                                 "Sellmeier model needs between 1 and 3 terms");
                   }
                   for (const auto& term : m.terms) {
                     if (!(term.alpha > 0.0) || !(term.beta > 0.0)) {
                       throw Error(ErrorCode::InvalidParameter,
                                   "Sellmeier terms need alpha_j > 0 and beta_j > 0");
                     }
                   }
                 },
             },
             model);
}

Complex eval_bhat(const MaterialModel& model, Complex s) {
  return std::visit(
      Overloaded{
          [](const ConstantModel& m) { return m.value; },
          [s](const DrudeParams& m) { return m.alpha + m.beta / (s * (1.0 + m.gamma * s)); },
          [s](const SellmeierParams& m) {
            Complex value{1.0, 0.0};
            const Complex s2 = s * s;
            for (const auto& term : m.terms) {
              const Complex denom = 1.0 + term.beta * s2;
              if (std::abs(denom) < 1e-14 * (1.0 + std::abs(term.beta * s2))) {
                throw Error(ErrorCode::NonAnalyticPoint,
                            "Sellmeier pole at s = (" + std::to_string(s.real()) + ", " +
                                std::to_string(s.imag()) + ")");
              }
              value += term.alpha / denom;
            }
            return value;
          },
      },
      model);
}

double assumption1_margin(const MaterialModel& model, Complex s, double d1) {
  const Complex bhat = eval_bhat(model, s);
  return (s * (bhat - d1 * d1)).real() / s.real();
}

double analytic_margin_bound(const MaterialModel& model, double d1) {
  return std::visit(Overloaded{
                        [d1](const ConstantModel& m) {
                          if (m.value.imag() != 0.0) {
                            return std::numeric_limits<double>::quiet_NaN();
                          }
                          return m.value.real() - d1 * d1;
                        },
                        [d1](const DrudeParams& m) { return m.alpha - d1 * d1; },
                        [d1](const SellmeierParams&) { return 1.0 - d1 * d1; },
                    },
                    model);
}

SellmeierParams sf11_sellmeier(double c0_um_per_fs) {
  return SellmeierParams::from_wavelength({{1.73759695, 0.013188707},
                                           {0.313747346, 0.0623068142},
                                           {1.89878101, 155.23629}},
                                          c0_um_per_fs);
}

MaterialMap::MaterialMap(std::map<int, MaterialModel> regions, MaterialModel above)
    : regions_(std::move(regions)), above_(std::move(above)) {
  for (const auto& [label, model] : regions_) validate_model(model);
  validate_model(above_);
}

const MaterialModel& MaterialMap::region(int label) const {
  const auto it = regions_.find(label);
  if (it == regions_.end()) {
    throw Error(ErrorCode::MaterialMissing,
                "no material for region label " + std::to_string(label));
  }
  return it->second;
}

double MaterialMap::default_gamma0(double d1) const {
  double gamma0 = 1.0 - d1 * d1;
  auto fold = [&](const MaterialModel& m) {
    const double bound = analytic_margin_bound(m, d1);
    if (std::isnan(bound)) {
      gamma0 = std::min(gamma0, kGamma0Floor);
    } else {
      gamma0 = std::min(gamma0, bound);
    }
  };
  for (const auto& [label, model] : regions_) fold(model);
  fold(above_);
  return std::max(gamma0, kGamma0Floor);
}

double MaterialMap::min_margin(Complex s, double d1) const {
  double margin = (1.0 - d1 * d1);
  for (const auto& [label, model] : regions_) {
    margin = std::min(margin, assumption1_margin(model, s, d1));
  }
  return std::min(margin, assumption1_margin(above_, s, d1));
}

}  // namespace cqgrating
