#pragma once

// Laplace-domain material coefficients b(s) for the s-polarized grating
// problem. The Laplace parameter is s = sigma - i*omega with sigma > 0.

#include <map>
#include <utility>
#include <variant>
#include <vector>

#include "cqgrating/error.hpp"

namespace cqgrating {

struct ConstantModel {
  Complex value{1.0, 0.0};
};

// b(s) = alpha + beta / (s (1 + gamma s))
struct DrudeParams {
  double alpha = 1.0;  // dimensionless
  double beta = 0.0;   // 1/time
  double gamma = 0.0;  // time
};

// One rational term alpha / (1 + beta s^2) with beta in time^2.
struct SellmeierTerm {
  double alpha = 0.0;
  double beta = 0.0;
};

// b(s) = 1 + sum_j alpha_j / (1 + beta_j s^2), at most three terms.
struct SellmeierParams {
  std::vector<SellmeierTerm> terms;

  static constexpr std::size_t kMaxTerms = 3;

  // Terms given as (alpha_j, B_j) with B_j in um^2 from the wavelength form
  // 1 + sum alpha_j lambda^2 / (lambda^2 - B_j). Substituting
  // lambda^2 -> -4 pi^2 c0^2 / s^2 gives beta_j = B_j / (4 pi^2 c0^2).
  static SellmeierParams from_wavelength(const std::vector<std::pair<double, double>>& terms_um2,
                                         double c0_um_per_fs);
};

using MaterialModel = std::variant<ConstantModel, DrudeParams, SellmeierParams>;

// Throws InvalidParameter when the model's parameter invariants are violated.
void validate_model(const MaterialModel& model);

// Throws NonAnalyticPoint when s sits (numerically) on a Sellmeier pole.
Complex eval_bhat(const MaterialModel& model, Complex s);

// Re(s (b(s) - d1^2)) / Re(s); Assumption-1 positivity requires this to stay
// above some gamma0 > 0 along every contour used.
double assumption1_margin(const MaterialModel& model, Complex s, double d1);

// Closed-form lower bound of assumption1_margin over Re(s) > 0:
// Drude alpha - d1^2, Sellmeier 1 - d1^2, real constant c - d1^2.
// Complex constants have no uniform bound; NaN is returned.
double analytic_margin_bound(const MaterialModel& model, double d1);

// Three-term SF11 glass, converted to time^2 form with c0 in um/fs.
SellmeierParams sf11_sellmeier(double c0_um_per_fs = 0.3);

// Region-labelled coefficients inside the cell plus the coefficient b1 of the
// half-space above it. The half-space below is vacuum (b = 1).
class MaterialMap {
 public:
  MaterialMap() = default;
  MaterialMap(std::map<int, MaterialModel> regions, MaterialModel above);

  const MaterialModel& region(int label) const;
  bool has_region(int label) const { return regions_.count(label) != 0; }
  const std::map<int, MaterialModel>& regions() const { return regions_; }
  const MaterialModel& above() const { return above_; }

  Complex bhat_above(Complex s) const { return eval_bhat(above_, s); }

  // Smallest analytic margin bound over all regions, the half-space above and
  // the vacuum below, floored at 1e-6.
  double default_gamma0(double d1) const;

  // Minimum of assumption1_margin at s over every model in the map.
  double min_margin(Complex s, double d1) const;

 private:
  std::map<int, MaterialModel> regions_;
  MaterialModel above_ = ConstantModel{};
};

}  // namespace cqgrating
