#pragma once

// Finite element discretization of the impedance cell problem
//
//   B(w, v) = int_Omega grad w . grad conj(v) + 2 (s/c) d1 w_x conj(v)
//                       + (s/c)^2 (b - d1^2) w conj(v)
//           + int_{Sigma_H} (s/c) eta w conj(v) + int_{Sigma_0} (s/c) eta w conj(v)
//
// with continuous bilinear elements on a periodic quadrilateral mesh.

#include <map>
#include <memory>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "cqgrating/materials.hpp"
#include "cqgrating/mesh.hpp"
#include "cqgrating/pulses.hpp"
#include "cqgrating/spectral_boundary.hpp"

namespace cqgrating {

using RealSparse = Eigen::SparseMatrix<double>;
using ComplexSparse = Eigen::SparseMatrix<Complex>;

// The s-independent pieces of the cell operator. Built once per mesh and
// shared read-only by every frequency solve.
struct CellOperators {
  int n_dofs = 0;
  RealSparse stiffness;                      // int grad phi_j . grad phi_i
  RealSparse convection;                     // int d(phi_j)/dx phi_i
  RealSparse mass;                           // int phi_j phi_i
  std::map<int, RealSparse> mass_by_region;  // mass restricted to one region label
  RealSparse boundary_mass_bottom;           // int_{Sigma_0} phi_j phi_i
  RealSparse boundary_mass_top;              // int_{Sigma_H} phi_j phi_i
  TraceCoupling trace_bottom;
  TraceCoupling trace_top;

  static CellOperators build(const QuadMesh& mesh, const DofMap& dofmap, int N);
};

// System matrix at one Laplace parameter together with its (lazily computed,
// then cached) sparse LU factorization. Not safe for concurrent use.
class AssembledCell {
 public:
  AssembledCell(const CellOperators& ops, Complex s, ComplexSparse matrix);

  Complex s() const { return s_; }
  const ComplexSparse& matrix() const { return matrix_; }
  const CellOperators& operators() const { return *ops_; }
  int N() const { return ops_->trace_bottom.N; }

  // Solves A w = rhs; throws SingularSystem when factorization breaks down
  // or the residual check fails.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs);
  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs);

  bool factorized() const { return lu_ != nullptr; }

 private:
  void factorize();
  void check_residual(const Eigen::MatrixXcd& x, const Eigen::MatrixXcd& rhs) const;

  const CellOperators* ops_;
  Complex s_;
  ComplexSparse matrix_;
  double matrix_norm_ = 0.0;
  std::unique_ptr<Eigen::SparseLU<ComplexSparse, Eigen::COLAMDOrdering<int>>> lu_;
};

// A = K + 2 (s/c) d1 C + (s/c)^2 sum_r (b_r(s) - d1^2) M_r + (s/c) eta (B_0 + B_H).
// Throws MaterialMissing if a region of the mesh has no material.
AssembledCell assemble(const CellOperators& ops, const MaterialMap& materials, Complex s,
                       const IncidentGeometry& geom, double eta);

// Right-hand side int_{Sigma_H} lambda_H^- conj(phi_i) + int_{Sigma_0} lambda_0^- conj(phi_i).
Eigen::VectorXcd load_from_modes(const AssembledCell& cell, const ModeVector& lambda0_minus,
                                 const ModeVector& lambdaH_minus);

Eigen::VectorXcd solve_cell(AssembledCell& cell, const Eigen::VectorXcd& rhs);

// Element matrices of one bilinear quadrilateral by 2x2 Gauss quadrature,
// local ordering as in Element::v.
struct ElementMatrices {
  Eigen::Matrix4d stiffness;
  Eigen::Matrix4d convection;
  Eigen::Matrix4d mass;
};
ElementMatrices element_matrices(const std::array<Vertex, 4>& corners);

}  // namespace cqgrating
