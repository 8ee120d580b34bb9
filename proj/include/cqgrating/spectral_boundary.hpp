#pragma once

// Fourier-mode radiation closure on z = 0 and z = H. Exterior fields are
// expanded in psi_n(x) = exp(i 2 pi n x / L), n = -N..N, each mode decaying
// away from the cell with propagation constant kappa_n (Re kappa_n > 0).

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cqgrating/mesh.hpp"
#include "cqgrating/pulses.hpp"

namespace cqgrating {

enum class ModeKind { minus, plus };

class ModeVector {
 public:
  ModeVector() = default;
  ModeVector(int N, BoundarySide side, ModeKind kind)
      : N_(N), side_(side), kind_(kind), coeffs_(static_cast<std::size_t>(2 * N + 1)) {}

  int N() const { return N_; }
  int size() const { return 2 * N_ + 1; }
  BoundarySide side() const { return side_; }
  ModeKind kind() const { return kind_; }

  Complex& operator()(int n) { return coeffs_[static_cast<std::size_t>(n + N_)]; }
  Complex operator()(int n) const { return coeffs_[static_cast<std::size_t>(n + N_)]; }

  const std::vector<Complex>& coeffs() const { return coeffs_; }
  std::vector<Complex>& coeffs() { return coeffs_; }

  Eigen::VectorXcd as_vector() const;
  double norm() const;

 private:
  int N_ = 0;
  BoundarySide side_ = BoundarySide::bottom;
  ModeKind kind_ = ModeKind::plus;
  std::vector<Complex> coeffs_;
};

// kappa^2 = (s/c)^2 b + (2 n pi / L + i d1 s / c)^2, which is the same as
// (s/c)^2 (b + (2 n pi c / (L s) + i d1)^2). Returns the root with Re > 0;
// throws BranchAmbiguity when the root lies within 1e-14 of the imaginary axis.
Complex kappa_transmitted(Complex s, double c, double d1, double L, int n, Complex bhat1);
Complex kappa_scattered(Complex s, double c, double d1, double L, int n);

struct KappaTable {
  Complex s;
  int N = 0;
  Complex bhat1{1.0, 0.0};
  std::vector<Complex> kappas_s;  // index n + N
  std::vector<Complex> kappas_t;

  Complex scattered(int n) const { return kappas_s[static_cast<std::size_t>(n + N)]; }
  Complex transmitted(int n) const { return kappas_t[static_cast<std::size_t>(n + N)]; }
};

KappaTable build_kappa_table(Complex s, double c, double d1, double L, int N, Complex bhat1);

// Diagonal mode multipliers (kappa_n - s eta / c) / (kappa_n + s eta / c).
Complex reflection_multiplier(Complex kappa, Complex s, double eta, double c);

ModeVector apply_FH(const ModeVector& lambda_plus, const KappaTable& table, double eta, Complex s,
                    double c);
ModeVector apply_F0(const ModeVector& lambda_plus, const KappaTable& table, double eta, Complex s,
                    double c);

// Impedance data of the incident field on z = 0. trace_hat is the Laplace
// (or scaled-DFT) value of w^i(x, 0); only mode 0 is nonzero:
//   f_- = (s d2 / c + s eta / c) trace_hat,  f_+ = (s d2 / c - s eta / c) trace_hat.
struct IncidentData {
  ModeVector f_minus;
  ModeVector f_plus;
};
IncidentData incident_data(Complex s, Complex trace_hat, const IncidentGeometry& geom, double eta,
                           int N);

// Laplace trace of the incident wave at z = 0 from the pulse transform:
// fhat(s) exp(-s L d1 / c).
Complex incident_trace_hat(Complex s, Complex fhat, const IncidentGeometry& geom);

// Exact integrals over [a, b] of the two linear hat functions against
// conj(psi_n): first = hat equal to 1 at a, second = hat equal to 1 at b.
std::pair<Complex, Complex> edge_mode_integrals(double a, double b, int n, double L);

// G(n + N, dof) = <phi_dof, psi_n> over one boundary, plus the mode Gram
// matrix <psi_m, psi_n> accumulated edge by edge.
struct TraceCoupling {
  int N = 0;
  Eigen::MatrixXcd G;
  Eigen::MatrixXcd gram;
};
TraceCoupling mode_inner_products(const std::vector<BoundaryEdge>& edges, int N, double L,
                                  const DofMap& dofmap);

}  // namespace cqgrating
