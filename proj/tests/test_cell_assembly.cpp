#include "doctest.h"

#include <cmath>
#include <random>

#include "cqgrating/cell_assembly.hpp"

using namespace cqgrating;

namespace {

const double kD1 = std::sin(6.0 * kPi / 180.0);

struct Fixture {
  QuadMesh mesh;
  DofMap dofs;
  CellOperators ops;
  Fixture(int nx, int nz, const std::function<int(double, double)>& labels = nullptr, int N = 2,
          double L = 1.0, double H = 1.0)
      : mesh(QuadMesh::build_structured(L, H, nx, nz, labels)),
        dofs(DofMap::build(mesh)),
        ops(CellOperators::build(mesh, dofs, N)) {}
};

MaterialMap vacuum() { return MaterialMap({{0, ConstantModel{}}}, ConstantModel{}); }

// Volume part of the system matrix for a given material map.
Eigen::MatrixXcd volume_matrix(const CellOperators& ops, const MaterialMap& materials, Complex s,
                               double d1, double c) {
  Eigen::MatrixXcd A = Eigen::MatrixXd(ops.stiffness).cast<Complex>();
  A += 2.0 * (s / c) * d1 * Eigen::MatrixXd(ops.convection).cast<Complex>();
  for (const auto& [label, m] : ops.mass_by_region) {
    A += (s / c) * (s / c) * (eval_bhat(materials.region(label), s) - d1 * d1) *
         Eigen::MatrixXd(m).cast<Complex>();
  }
  return A;
}

}  // namespace

TEST_CASE("reference square element matrices") {
  const auto em = element_matrices({Vertex{0, 0}, Vertex{1, 0}, Vertex{1, 1}, Vertex{0, 1}});
  CHECK(em.stiffness(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(em.stiffness(0, 2) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(em.stiffness(0, 1) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(em.mass(0, 0) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(em.mass(0, 2) == doctest::Approx(1.0 / 36.0).epsilon(1e-15));
  CHECK(em.mass.sum() == doctest::Approx(1.0).epsilon(1e-15));
  // d/dx of the constant is zero
  CHECK(em.convection.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  // int phi_0 d(phi_1)/dx over the square: phi_1 = x (1 - z), phi_0 = (1 - x)(1 - z)
  CHECK(em.convection(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("property: convection is skew after periodic identification") {
  Fixture f(5, 4);
  const Eigen::MatrixXd C(f.ops.convection);
  CHECK((C + C.transpose()).norm() <= 1e-12 * C.norm());
  const Eigen::MatrixXd K(f.ops.stiffness);
  const Eigen::MatrixXd M(f.ops.mass);
  CHECK((K - K.transpose()).norm() <= 1e-14 * K.norm());
  CHECK((M - M.transpose()).norm() <= 1e-14 * M.norm());
  CHECK(M.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("boundary block at s = c = eta = 1") {
  Fixture f(2, 2);
  const MaterialMap mats = vacuum();
  const auto normal = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  AssembledCell cell = assemble(f.ops, mats, 1.0, normal, 1.0);
  const Eigen::MatrixXcd A(cell.matrix());
  const Eigen::MatrixXcd volume = volume_matrix(f.ops, mats, 1.0, 0.0, 1.0);
  const Eigen::MatrixXcd boundary = A - volume;
  const Eigen::MatrixXd expected =
      Eigen::MatrixXd(f.ops.boundary_mass_bottom) + Eigen::MatrixXd(f.ops.boundary_mass_top);
  CHECK((boundary - expected.cast<Complex>()).cwiseAbs().maxCoeff() < 1e-15);
  // 1D edge mass with h = 0.5 on a periodic row of two edges
  const Eigen::MatrixXd B0(f.ops.boundary_mass_bottom);
  const int d0 = f.dofs.vertex_to_dof[0], d1 = f.dofs.vertex_to_dof[1];
  CHECK(B0(d0, d0) == doctest::Approx(1.0 / 3.0));
  CHECK(B0(d0, d1) == doctest::Approx(1.0 / 6.0));
  CHECK(B0.sum() == doctest::Approx(1.0));
}

TEST_CASE("property: sparsity pattern is symmetric and independent of s") {
  Fixture f(4, 3, [](double, double z) { return z < 0.5 ? 0 : 1; });
  const MaterialMap mats({{0, ConstantModel{}}, {1, DrudeParams{4.0, 10.0, 0.5}}}, ConstantModel{});
  const auto geom = IncidentGeometry::from_degrees(6.0, false, 1.0, 1.0);
  AssembledCell a = assemble(f.ops, mats, {1.0, 2.0}, geom, 1.0);
  AssembledCell b = assemble(f.ops, mats, {7.0, -30.0}, geom, 1.0);
  const auto& ma = a.matrix();
  const auto& mb = b.matrix();
  REQUIRE(ma.nonZeros() == mb.nonZeros());
  for (int k = 0; k <= ma.outerSize(); ++k) CHECK(ma.outerIndexPtr()[k] == mb.outerIndexPtr()[k]);
  for (int k = 0; k < ma.nonZeros(); ++k) CHECK(ma.innerIndexPtr()[k] == mb.innerIndexPtr()[k]);
  const Eigen::MatrixXd pattern = Eigen::MatrixXcd(ma).cwiseAbs().unaryExpr(
      [](double v) { return v != 0.0 ? 1.0 : 0.0; });
  CHECK((pattern - pattern.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("missing material") {
  Fixture f(2, 2, [](double, double) { return 5; });
  const auto normal = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  CHECK_THROWS_AS(assemble(f.ops, vacuum(), 1.0, normal, 1.0), Error);
}

TEST_CASE("loads from boundary modes") {
  Fixture f(4, 2, nullptr, 2);
  const auto normal = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  AssembledCell cell = assemble(f.ops, vacuum(), 1.0, normal, 1.0);
  ModeVector zero0(2, BoundarySide::bottom, ModeKind::minus);
  ModeVector zeroH(2, BoundarySide::top, ModeKind::minus);
  CHECK(load_from_modes(cell, zero0, zeroH).norm() == 0.0);

  ModeVector unit0 = zero0;
  unit0(0) = 1.0;
  const Eigen::VectorXcd b = load_from_modes(cell, unit0, zeroH);
  // bottom nodes receive their share of edge length, everything else zero
  for (int i = 0; i <= 4; ++i) {
    const int dof = f.dofs.vertex_to_dof[static_cast<std::size_t>(i)];
    if (i < 4) CHECK(std::abs(b(dof) - 0.25) < 1e-15);
  }
  CHECK(std::abs(b.sum() - 1.0) < 1e-15);

  ModeVector unitH = zeroH;
  unitH(1) = 1.0;
  CHECK(std::abs(load_from_modes(cell, zero0, unitH).sum()) < 1e-15);

  ModeVector wrong(3, BoundarySide::bottom, ModeKind::minus);
  CHECK_THROWS_AS(load_from_modes(cell, wrong, zeroH), Error);
}

TEST_CASE("cell solves") {
  Fixture f(4, 4);
  const auto normal = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  AssembledCell cell = assemble(f.ops, vacuum(), {2.0, 3.0}, normal, 1.0);
  CHECK(solve_cell(cell, Eigen::VectorXcd::Zero(f.ops.n_dofs)).norm() == 0.0);

  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXcd rhs(f.ops.n_dofs, 2);
  for (int i = 0; i < rhs.size(); ++i) rhs.data()[i] = {g(rng), g(rng)};
  const Eigen::MatrixXcd both = cell.solve(rhs);
  AssembledCell fresh = assemble(f.ops, vacuum(), {2.0, 3.0}, normal, 1.0);
  const Eigen::VectorXcd first = fresh.solve(Eigen::VectorXcd(rhs.col(0)));
  const Eigen::VectorXcd second = fresh.solve(Eigen::VectorXcd(rhs.col(1)));
  CHECK((both.col(0) - first).norm() <= 1e-14 * first.norm());
  CHECK((both.col(1) - second).norm() <= 1e-14 * second.norm());
  CHECK(fresh.factorized());
}

TEST_CASE("manufactured plane wave converges at second order") {
  // w = exp(-s z / c) has impedance data lambda_0^- = 2 s / c and
  // lambda_H^- = 0 for eta = 1.
  const Complex s{2.0, 1.0};
  const auto normal = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  std::vector<double> errors;
  for (const int nz : {8, 16, 32, 64}) {
    Fixture f(2, nz, nullptr, 0);
    AssembledCell cell = assemble(f.ops, vacuum(), s, normal, 1.0);
    ModeVector l0(0, BoundarySide::bottom, ModeKind::minus);
    ModeVector lH(0, BoundarySide::top, ModeKind::minus);
    l0(0) = 2.0 * s;
    const Eigen::VectorXcd w = solve_cell(cell, load_from_modes(cell, l0, lH));
    Eigen::VectorXcd exact(f.ops.n_dofs);
    for (std::size_t v = 0; v < f.mesh.vertices().size(); ++v) {
      exact(f.dofs.vertex_to_dof[v]) = std::exp(-s * f.mesh.vertices()[v].z);
    }
    const Eigen::VectorXcd e = w - exact;
    const Eigen::MatrixXd M(f.ops.mass);
    errors.push_back(std::sqrt(std::abs((e.adjoint() * M.cast<Complex>() * e)(0, 0))));
  }
  for (std::size_t k = 1; k < errors.size(); ++k) {
    const double ratio = errors[k - 1] / errors[k];
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("property: discrete coercivity at random samples") {
  Fixture f(6, 6, [](double x, double z) { return (z > 0.4 && z < 0.7 && x > 0.2) ? 1 : 0; });
  const std::vector<MaterialMap> presets = {
      MaterialMap({{0, ConstantModel{}}, {1, DrudeParams{4.0, 10.0, 0.5}}}, ConstantModel{}),
      MaterialMap({{0, ConstantModel{}}, {1, sf11_sellmeier()}}, sf11_sellmeier())};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> sigma(0.2, 5.0), omega(-25.0, 25.0);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd K(f.ops.stiffness);
  const Eigen::MatrixXd M(f.ops.mass);
  int violations = 0;
  for (const auto& mats : presets) {
    const double gamma0 = mats.default_gamma0(kD1);
    for (int sample = 0; sample < 20; ++sample) {
      const Complex s{sigma(rng), omega(rng)};
      Eigen::VectorXcd v(f.ops.n_dofs);
      for (int i = 0; i < v.size(); ++i) v(i) = {g(rng), g(rng)};
      const Eigen::MatrixXcd A = volume_matrix(f.ops, mats, s, kD1, 1.0);
      const double lhs = (std::conj(s) * (v.adjoint() * A * v)(0, 0)).real();
      const double vk = (v.adjoint() * K.cast<Complex>() * v)(0, 0).real();
      const double vm = (v.adjoint() * M.cast<Complex>() * v)(0, 0).real();
      const double rhs = s.real() * std::min(1.0, gamma0) * (vk + std::norm(s) * vm);
      if (lhs < rhs - 1e-10 * std::abs(rhs)) ++violations;
    }
  }
  CHECK(violations == 0);
}
