#pragma once

// One Laplace-parameter solve of the coupled cell / exterior-mode system.
//
// Unknowns: nodal total field w on the cell, and the impedance traces
// lambda_H^-, lambda_H^+ (top) and lambda_0^-, lambda_0^+ (bottom). With
// k2 = 2 (s/c) eta and <.,psi_p> the L2 pairing with the Fourier modes:
//   (a) A w = G_H^H lambda_H^- + G_0^H lambda_0^-
//   (b) <lambda_H^- - lambda_H^+, psi_p> - k2 <w, psi_p>_H = 0
//   (c) lambda_H^- = F_H lambda_H^+
//   (d) lambda_0^- = F_0 lambda_0^+ + f_-
//   (e) <lambda_0^- - lambda_0^+ - f_+, psi_p> - k2 <w, psi_p>_0 = 0
// (c) and (d) are substituted, w is eliminated with the cell factorization,
// and the remaining 2(2N+1) mode unknowns are solved densely.

#include <array>

#include <Eigen/Dense>

#include "cqgrating/cell_assembly.hpp"
#include "cqgrating/materials.hpp"
#include "cqgrating/mesh.hpp"
#include "cqgrating/pulses.hpp"
#include "cqgrating/spectral_boundary.hpp"

namespace cqgrating {

struct FrequencySolution {
  Complex s;
  Eigen::VectorXcd w_hat;
  ModeVector lambdaH_minus;
  ModeVector lambdaH_plus;
  ModeVector lambda0_minus;
  ModeVector lambda0_plus;
  ModeVector w_s_modes;  // reflected field below: sum_n w_n^s psi_n(x) exp(kappa_n^s z)
  ModeVector w_t_modes;  // transmitted field above: sum_n w_n^t psi_n(x) exp(-kappa_n^t (z - H))
  IncidentData incident;
  Complex trace_hat;
};

// Relative norms of equations (b)-(e); divided by L |f_-| unless the
// incident data vanish.
struct TransmissionResiduals {
  double top_jump = 0.0;          // (b)
  double top_reflection = 0.0;    // (c)
  double bottom_reflection = 0.0; // (d)
  double bottom_jump = 0.0;       // (e)

  double max() const;
};

class FrequencySolver {
 public:
  // sigma_min <= 0 disables the Re(s) floor; gamma0 < 0 selects the
  // materials' default bound.
  FrequencySolver(const QuadMesh& mesh, MaterialMap materials, IncidentGeometry geom, double eta,
                  int N, double sigma_min = 0.0, double gamma0 = -1.0);

  const QuadMesh& mesh() const { return mesh_; }
  const DofMap& dofmap() const { return dofmap_; }
  const CellOperators& operators() const { return ops_; }
  const MaterialMap& materials() const { return materials_; }
  const IncidentGeometry& geometry() const { return geom_; }
  double eta() const { return eta_; }
  int N() const { return N_; }
  double gamma0() const { return gamma0_; }

  // Throws AssumptionViolated if Re(s) < sigma_min or a material margin
  // falls below gamma0.
  void check_assumptions(Complex s) const;

  // trace_hat is the transform of the incident trace on z = 0 (frame delay
  // already included). Safe to call concurrently.
  FrequencySolution solve(Complex s, Complex trace_hat) const;

  TransmissionResiduals residuals(const FrequencySolution& sol) const;

  // Total field outside the cell: incident plus scattered modes for z < 0,
  // transmitted modes for z > H.
  Complex exterior_field(const FrequencySolution& sol, double x, double z) const;

  // Bilinear interpolation of the nodal field.
  Complex interpolate(const Eigen::VectorXcd& nodal, double x, double z) const;

 private:
  QuadMesh mesh_;
  DofMap dofmap_;
  CellOperators ops_;
  MaterialMap materials_;
  IncidentGeometry geom_;
  double eta_;
  int N_;
  double sigma_min_;
  double gamma0_;
};

// Residual of (b)-(e) for arbitrary traces; used by the solver and by tests
// that perturb a converged solution.
TransmissionResiduals transmission_residuals(const FrequencySolution& sol, const CellOperators& ops,
                                             const KappaTable& table, double eta, double c,
                                             double L);

FrequencySolution solve_frequency(const QuadMesh& mesh, const MaterialMap& materials,
                                  const IncidentGeometry& geom, double eta, int N, Complex s,
                                  Complex trace_hat);

// Nodal interpolation helper shared with the time-domain driver.
Complex interpolate_nodal(const QuadMesh& mesh, const DofMap& dofmap,
                          const Eigen::VectorXcd& nodal, double x, double z);

}  // namespace cqgrating
