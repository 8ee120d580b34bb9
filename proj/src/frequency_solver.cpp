#include "cqgrating/frequency_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cqgrating {
namespace {

constexpr Complex kI{0.0, 1.0};

ModeVector from_vector(const Eigen::VectorXcd& v, int N, BoundarySide side, ModeKind kind) {
  ModeVector out(N, side, kind);
  for (int k = 0; k < out.size(); ++k) out.coeffs()[static_cast<std::size_t>(k)] = v(k);
  return out;
}

Eigen::VectorXcd multipliers(const KappaTable& table, bool top, double eta, Complex s, double c) {
  Eigen::VectorXcd d(2 * table.N + 1);
  for (int n = -table.N; n <= table.N; ++n) {
    d(n + table.N) =
        reflection_multiplier(top ? table.transmitted(n) : table.scattered(n), s, eta, c);
  }
  return d;
}

std::string describe(Complex s) {
  return "(" + std::to_string(s.real()) + ", " + std::to_string(s.imag()) + ")";
}

}  // namespace

double TransmissionResiduals::max() const {
  return std::max({top_jump, top_reflection, bottom_reflection, bottom_jump});
}

TransmissionResiduals transmission_residuals(const FrequencySolution& sol, const CellOperators& ops,
                                             const KappaTable& table, double eta, double c,
                                             double L) {
  const Complex k2 = 2.0 * sol.s / c * eta;
  const Eigen::VectorXcd wH = ops.trace_top.G * sol.w_hat;
  const Eigen::VectorXcd w0 = ops.trace_bottom.G * sol.w_hat;
  const Eigen::VectorXcd hm = sol.lambdaH_minus.as_vector();
  const Eigen::VectorXcd hp = sol.lambdaH_plus.as_vector();
  const Eigen::VectorXcd bm = sol.lambda0_minus.as_vector();
  const Eigen::VectorXcd bp = sol.lambda0_plus.as_vector();
  const Eigen::VectorXcd fm = sol.incident.f_minus.as_vector();
  const Eigen::VectorXcd fp = sol.incident.f_plus.as_vector();
  const Eigen::VectorXcd dH = multipliers(table, true, eta, sol.s, c);
  const Eigen::VectorXcd d0 = multipliers(table, false, eta, sol.s, c);

  double scale = L * fm.norm();
  if (scale == 0.0) scale = 1.0;
  TransmissionResiduals r;
  r.top_jump = (L * (hm - hp) - k2 * wH).norm() / scale;
  r.top_reflection = (L * (hm - dH.cwiseProduct(hp))).norm() / scale;
  r.bottom_reflection = (L * (bm - d0.cwiseProduct(bp) - fm)).norm() / scale;
  r.bottom_jump = (L * (bm - bp - fp) - k2 * w0).norm() / scale;
  return r;
}

FrequencySolver::FrequencySolver(const QuadMesh& mesh, MaterialMap materials, IncidentGeometry geom,
                                 double eta, int N, double sigma_min, double gamma0)
    : mesh_(mesh),
      dofmap_(DofMap::build(mesh_)),
      ops_(CellOperators::build(mesh_, dofmap_, N)),
      materials_(std::move(materials)),
      geom_(geom),
      eta_(eta),
      N_(N),
      sigma_min_(sigma_min),
      gamma0_(gamma0 < 0.0 ? materials_.default_gamma0(geom.d1) : gamma0) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidParameter, "impedance eta must be positive");
  if (N < 0) throw Error(ErrorCode::InvalidParameter, "mode truncation N must be non-negative");
  if (std::abs(geom_.L - mesh_.L()) > 1e-12 * mesh_.L()) {
    throw Error(ErrorCode::InvalidParameter, "geometry period does not match the mesh period");
  }
  for (const auto& element : mesh_.elements()) {
    if (!materials_.has_region(element.region)) {
      throw Error(ErrorCode::MaterialMissing,
                  "no material for region label " + std::to_string(element.region));
    }
  }
}

void FrequencySolver::check_assumptions(Complex s) const {
  if (!(s.real() > 0.0) || (sigma_min_ > 0.0 && s.real() < sigma_min_)) {
    throw Error(ErrorCode::AssumptionViolated, "Re(s) below sigma_min at s = " + describe(s));
  }
  const double margin = materials_.min_margin(s, geom_.d1);
  if (!(margin >= gamma0_ * (1.0 - 1e-12))) {
    throw Error(ErrorCode::AssumptionViolated, "material margin " + std::to_string(margin) +
                                                   " below gamma0 " + std::to_string(gamma0_) +
                                                   " at s = " + describe(s));
  }
}

FrequencySolution FrequencySolver::solve(Complex s, Complex trace_hat) const {
  check_assumptions(s);
  const double c = geom_.c;
  const double L = geom_.L;
  const int m = 2 * N_ + 1;
  const KappaTable table = build_kappa_table(s, c, geom_.d1, L, N_, materials_.bhat_above(s));
  AssembledCell cell = assemble(ops_, materials_, s, geom_, eta_);

  FrequencySolution sol;
  sol.s = s;
  sol.trace_hat = trace_hat;
  sol.incident = incident_data(s, trace_hat, geom_, eta_, N_);

  const Eigen::MatrixXcd& GH = ops_.trace_top.G;
  const Eigen::MatrixXcd& G0 = ops_.trace_bottom.G;
  Eigen::MatrixXcd rhs(ops_.n_dofs, 2 * m);
  rhs.leftCols(m) = GH.adjoint();
  rhs.rightCols(m) = G0.adjoint();
  const Eigen::MatrixXcd X = cell.solve(rhs);
  const auto XH = X.leftCols(m);
  const auto X0 = X.rightCols(m);

  const Eigen::VectorXcd dH = multipliers(table, true, eta_, s, c);
  const Eigen::VectorXcd d0 = multipliers(table, false, eta_, s, c);
  const Eigen::VectorXcd fm = sol.incident.f_minus.as_vector();
  const Eigen::VectorXcd fp = sol.incident.f_plus.as_vector();
  const Complex k2 = 2.0 * s / c * eta_;
  const Eigen::VectorXcd y = X0 * fm;

  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(m, m);
  Eigen::MatrixXcd S(2 * m, 2 * m);
  S.topLeftCorner(m, m) = L * (Eigen::MatrixXcd(dH.asDiagonal()) - id) - k2 * (GH * XH) * dH.asDiagonal();
  S.topRightCorner(m, m) = -k2 * (GH * X0) * d0.asDiagonal();
  S.bottomLeftCorner(m, m) = -k2 * (G0 * XH) * dH.asDiagonal();
  S.bottomRightCorner(m, m) =
      L * (Eigen::MatrixXcd(d0.asDiagonal()) - id) - k2 * (G0 * X0) * d0.asDiagonal();
  Eigen::VectorXcd r(2 * m);
  r.head(m) = k2 * (GH * y);
  r.tail(m) = L * (fp - fm) + k2 * (G0 * y);

  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(S);
  const Eigen::VectorXcd ab = lu.solve(r);
  const double res = (S * ab - r).norm();
  if (!ab.allFinite() || res > 1e-10 * (S.norm() * ab.norm() + r.norm())) {
    throw Error(ErrorCode::SingularSystem, "mode Schur system singular at s = " + describe(s));
  }
  const Eigen::VectorXcd a = ab.head(m);
  const Eigen::VectorXcd b = ab.tail(m);
  const Eigen::VectorXcd hm = dH.cwiseProduct(a);
  const Eigen::VectorXcd bm = d0.cwiseProduct(b) + fm;
  sol.w_hat = XH * hm + X0 * bm;

  sol.lambdaH_plus = from_vector(a, N_, BoundarySide::top, ModeKind::plus);
  sol.lambdaH_minus = from_vector(hm, N_, BoundarySide::top, ModeKind::minus);
  sol.lambda0_plus = from_vector(b, N_, BoundarySide::bottom, ModeKind::plus);
  sol.lambda0_minus = from_vector(bm, N_, BoundarySide::bottom, ModeKind::minus);
  sol.w_s_modes = ModeVector(N_, BoundarySide::bottom, ModeKind::plus);
  sol.w_t_modes = ModeVector(N_, BoundarySide::top, ModeKind::plus);
  const Complex imp = s * eta_ / c;
  for (int n = -N_; n <= N_; ++n) {
    sol.w_s_modes(n) = -sol.lambda0_plus(n) / (table.scattered(n) + imp);
    sol.w_t_modes(n) = -sol.lambdaH_plus(n) / (table.transmitted(n) + imp);
  }
  return sol;
}

TransmissionResiduals FrequencySolver::residuals(const FrequencySolution& sol) const {
  const KappaTable table =
      build_kappa_table(sol.s, geom_.c, geom_.d1, geom_.L, N_, materials_.bhat_above(sol.s));
  return transmission_residuals(sol, ops_, table, eta_, geom_.c, geom_.L);
}

Complex FrequencySolver::exterior_field(const FrequencySolution& sol, double x, double z) const {
  const KappaTable table =
      build_kappa_table(sol.s, geom_.c, geom_.d1, geom_.L, N_, materials_.bhat_above(sol.s));
  const double H = mesh_.H();
  const double L = geom_.L;
  Complex total{0.0, 0.0};
  if (z <= 0.0) {
    total += sol.trace_hat * std::exp(-sol.s * geom_.d2 * z / geom_.c);
    for (int n = -N_; n <= N_; ++n) {
      total += sol.w_s_modes(n) * std::exp(kI * (2.0 * kPi * n * x / L) + table.scattered(n) * z);
    }
  } else if (z >= H) {
    for (int n = -N_; n <= N_; ++n) {
      total += sol.w_t_modes(n) *
               std::exp(kI * (2.0 * kPi * n * x / L) - table.transmitted(n) * (z - H));
    }
  } else {
    throw Error(ErrorCode::InvalidParameter, "exterior_field needs z <= 0 or z >= H");
  }
  return total;
}

Complex interpolate_nodal(const QuadMesh& mesh, const DofMap& dofmap,
                          const Eigen::VectorXcd& nodal, double x, double z) {
  const double L = mesh.L();
  double xp = std::fmod(x, L);
  if (xp < 0.0) xp += L;
  const auto loc = mesh.locate(xp, z);
  if (!loc) throw Error(ErrorCode::InvalidParameter, "point outside the cell");
  const auto& element = mesh.elements()[static_cast<std::size_t>(loc->element)];
  const auto shape = q1_shape(loc->xi, loc->eta);
  Complex value{0.0, 0.0};
  for (int k = 0; k < 4; ++k) {
    value += shape[k] * nodal(dofmap.vertex_to_dof[static_cast<std::size_t>(element.v[k])]);
  }
  return value;
}

Complex FrequencySolver::interpolate(const Eigen::VectorXcd& nodal, double x, double z) const {
  return interpolate_nodal(mesh_, dofmap_, nodal, x, z);
}

FrequencySolution solve_frequency(const QuadMesh& mesh, const MaterialMap& materials,
                                  const IncidentGeometry& geom, double eta, int N, Complex s,
                                  Complex trace_hat) {
  const FrequencySolver solver(mesh, materials, geom, eta, N);
  return solver.solve(s, trace_hat);
}

}  // namespace cqgrating
