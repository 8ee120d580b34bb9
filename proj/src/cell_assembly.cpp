#include "cqgrating/cell_assembly.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cqgrating {
namespace {

constexpr double kGauss = 0.57735026918962576451;

using Triplets = std::vector<Eigen::Triplet<double>>;

RealSparse from_triplets(int n, const Triplets& triplets) {
  RealSparse m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace

ElementMatrices element_matrices(const std::array<Vertex, 4>& p) {
  ElementMatrices out{Eigen::Matrix4d::Zero(), Eigen::Matrix4d::Zero(), Eigen::Matrix4d::Zero()};
  for (double xi : {-kGauss, kGauss}) {
    for (double eta : {-kGauss, kGauss}) {
      const auto n = q1_shape(xi, eta);
      const auto g = q1_shape_gradients(xi, eta);
      double a = 0.0, b = 0.0, c = 0.0, d = 0.0;  // [dx/dxi dx/deta; dz/dxi dz/deta]
      for (int k = 0; k < 4; ++k) {
        a += p[k].x * g[k][0];
        b += p[k].x * g[k][1];
        c += p[k].z * g[k][0];
        d += p[k].z * g[k][1];
      }
      const double det = a * d - b * c;
      std::array<double, 4> dx{}, dz{};
      for (int k = 0; k < 4; ++k) {
        dx[k] = (d * g[k][0] - c * g[k][1]) / det;
        dz[k] = (-b * g[k][0] + a * g[k][1]) / det;
      }
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          out.stiffness(i, j) += (dx[i] * dx[j] + dz[i] * dz[j]) * det;
          out.convection(i, j) += dx[j] * n[i] * det;
          out.mass(i, j) += n[i] * n[j] * det;
        }
      }
    }
  }
  return out;
}

CellOperators CellOperators::build(const QuadMesh& mesh, const DofMap& dofmap, int N) {
  CellOperators ops;
  ops.n_dofs = dofmap.n_dofs;
  Triplets stiffness, convection, mass;
  std::map<int, Triplets> region_mass;
  const auto& vertices = mesh.vertices();
  for (const auto& element : mesh.elements()) {
    const std::array<Vertex, 4> corners{vertices[element.v[0]], vertices[element.v[1]],
                                        vertices[element.v[2]], vertices[element.v[3]]};
    const auto local = element_matrices(corners);
    auto& rm = region_mass[element.region];
    for (int i = 0; i < 4; ++i) {
      const int gi = dofmap.vertex_to_dof[static_cast<std::size_t>(element.v[i])];
      for (int j = 0; j < 4; ++j) {
        const int gj = dofmap.vertex_to_dof[static_cast<std::size_t>(element.v[j])];
        stiffness.emplace_back(gi, gj, local.stiffness(i, j));
        convection.emplace_back(gi, gj, local.convection(i, j));
        mass.emplace_back(gi, gj, local.mass(i, j));
        rm.emplace_back(gi, gj, local.mass(i, j));
      }
    }
  }
  ops.stiffness = from_triplets(ops.n_dofs, stiffness);
  ops.convection = from_triplets(ops.n_dofs, convection);
  ops.mass = from_triplets(ops.n_dofs, mass);
  for (const auto& [label, triplets] : region_mass) {
    ops.mass_by_region.emplace(label, from_triplets(ops.n_dofs, triplets));
  }

  auto edge_mass = [&](BoundarySide side) {
    Triplets t;
    for (const auto& edge : mesh.boundary_edges(side)) {
      const int a = dofmap.vertex_to_dof[static_cast<std::size_t>(edge.vertices[0])];
      const int b = dofmap.vertex_to_dof[static_cast<std::size_t>(edge.vertices[1])];
      const double h = edge.length();
      t.emplace_back(a, a, h / 3.0);
      t.emplace_back(b, b, h / 3.0);
      t.emplace_back(a, b, h / 6.0);
      t.emplace_back(b, a, h / 6.0);
    }
    return from_triplets(ops.n_dofs, t);
  };
  ops.boundary_mass_bottom = edge_mass(BoundarySide::bottom);
  ops.boundary_mass_top = edge_mass(BoundarySide::top);
  ops.trace_bottom =
      mode_inner_products(mesh.boundary_edges(BoundarySide::bottom), N, mesh.L(), dofmap);
  ops.trace_top = mode_inner_products(mesh.boundary_edges(BoundarySide::top), N, mesh.L(), dofmap);
  return ops;
}

AssembledCell::AssembledCell(const CellOperators& ops, Complex s, ComplexSparse matrix)
    : ops_(&ops), s_(s), matrix_(std::move(matrix)) {
  matrix_.makeCompressed();
  matrix_norm_ = matrix_.norm();
}

void AssembledCell::factorize() {
  lu_ = std::make_unique<Eigen::SparseLU<ComplexSparse, Eigen::COLAMDOrdering<int>>>();
  lu_->compute(matrix_);
  if (lu_->info() != Eigen::Success) {
    lu_.reset();
    throw Error(ErrorCode::SingularSystem, "sparse LU failed at s = (" +
                                               std::to_string(s_.real()) + ", " +
                                               std::to_string(s_.imag()) + ")");
  }
}

void AssembledCell::check_residual(const Eigen::MatrixXcd& x, const Eigen::MatrixXcd& rhs) const {
  const Eigen::MatrixXcd residual = matrix_ * x - rhs;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double bound = 1e-10 * (matrix_norm_ * x.col(k).norm() + rhs.col(k).norm());
    const double r = residual.col(k).norm();
    if (!(r <= bound) && !(r == 0.0)) {
      throw Error(ErrorCode::SingularSystem,
                  "cell solve residual " + std::to_string(r) + " exceeds " + std::to_string(bound));
    }
  }
}

Eigen::VectorXcd AssembledCell::solve(const Eigen::VectorXcd& rhs) {
  if (rhs.size() != matrix_.rows()) {
    throw Error(ErrorCode::InvalidParameter, "right-hand side length does not match n_dofs");
  }
  if (!lu_) factorize();
  Eigen::VectorXcd x = lu_->solve(rhs);
  check_residual(x, rhs);
  return x;
}

Eigen::MatrixXcd AssembledCell::solve(const Eigen::MatrixXcd& rhs) {
  if (rhs.rows() != matrix_.rows()) {
    throw Error(ErrorCode::InvalidParameter, "right-hand side rows do not match n_dofs");
  }
  if (!lu_) factorize();
  Eigen::MatrixXcd x = lu_->solve(rhs);
  check_residual(x, rhs);
  return x;
}

AssembledCell assemble(const CellOperators& ops, const MaterialMap& materials, Complex s,
                       const IncidentGeometry& geom, double eta) {
  if (!(s.real() > 0.0)) throw Error(ErrorCode::InvalidParameter, "assembly needs Re(s) > 0");
  const Complex sc = s / geom.c;
  const double d1 = geom.d1;
  ComplexSparse a = ops.stiffness.cast<Complex>();
  if (d1 != 0.0) a += (2.0 * sc * d1) * ops.convection.cast<Complex>();
  for (const auto& [label, mass] : ops.mass_by_region) {
    const Complex bhat = eval_bhat(materials.region(label), s);
    a += (sc * sc * (bhat - d1 * d1)) * mass.cast<Complex>();
  }
  a += (sc * eta) * (ops.boundary_mass_bottom + ops.boundary_mass_top).cast<Complex>();
  return AssembledCell(ops, s, std::move(a));
}

Eigen::VectorXcd load_from_modes(const AssembledCell& cell, const ModeVector& lambda0_minus,
                                 const ModeVector& lambdaH_minus) {
  const auto& ops = cell.operators();
  if (lambda0_minus.N() != ops.trace_bottom.N || lambdaH_minus.N() != ops.trace_top.N) {
    throw Error(ErrorCode::TruncationMismatch, "mode vectors do not match the cell truncation");
  }
  // int lambda conj(phi_i) = sum_n lambda_n int psi_n phi_i = sum_n lambda_n conj(G(n, i))
  return ops.trace_bottom.G.adjoint() * lambda0_minus.as_vector() +
         ops.trace_top.G.adjoint() * lambdaH_minus.as_vector();
}

Eigen::VectorXcd solve_cell(AssembledCell& cell, const Eigen::VectorXcd& rhs) {
  return cell.solve(rhs);
}

}  // namespace cqgrating
