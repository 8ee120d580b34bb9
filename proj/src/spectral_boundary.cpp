#include "cqgrating/spectral_boundary.hpp"

#include <cmath>
#include <string>

namespace cqgrating {
namespace {

constexpr Complex kI{0.0, 1.0};

Complex branch_root(Complex kappa_squared) {
  Complex root = std::sqrt(kappa_squared);
  if (std::abs(root.real()) < 1e-14 * std::abs(root)) {
    throw Error(ErrorCode::BranchAmbiguity,
                "propagation constant on the imaginary axis; contour point too close to a cut");
  }
  if (root.real() < 0.0) root = -root;
  return root;
}

// int_0^1 exp(-i theta t) dt and int_0^1 t exp(-i theta t) dt
std::pair<Complex, Complex> unit_moments(double theta) {
  if (std::abs(theta) < 1.0) {
    Complex e0{0.0, 0.0}, e1{0.0, 0.0};
    Complex power{1.0, 0.0};
    double factorial = 1.0;
    for (int m = 0; m < 30; ++m) {
      if (m > 0) {
        power *= -kI * theta;
        factorial *= m;
      }
      e0 += power / ((m + 1) * factorial);
      e1 += power / ((m + 2) * factorial);
    }
    return {e0, e1};
  }
  const Complex phase = std::exp(-kI * theta);
  const Complex e0 = (1.0 - phase) / (kI * theta);
  const Complex e1 = (e0 - phase) / (kI * theta);
  return {e0, e1};
}

}  // namespace

Eigen::VectorXcd ModeVector::as_vector() const {
  Eigen::VectorXcd v(size());
  for (int k = 0; k < size(); ++k) v(k) = coeffs_[static_cast<std::size_t>(k)];
  return v;
}

double ModeVector::norm() const {
  double sum = 0.0;
  for (const auto& c : coeffs_) sum += std::norm(c);
  return std::sqrt(sum);
}

Complex kappa_transmitted(Complex s, double c, double d1, double L, int n, Complex bhat1) {
  if (!(c > 0.0) || !(L > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "propagation constants need c > 0 and L > 0");
  }
  const Complex sc = s / c;
  const Complex shifted = 2.0 * kPi * n / L + kI * d1 * sc;
  return branch_root(sc * sc * bhat1 + shifted * shifted);
}

Complex kappa_scattered(Complex s, double c, double d1, double L, int n) {
  return kappa_transmitted(s, c, d1, L, n, Complex{1.0, 0.0});
}

KappaTable build_kappa_table(Complex s, double c, double d1, double L, int N, Complex bhat1) {
  KappaTable table;
  table.s = s;
  table.N = N;
  table.bhat1 = bhat1;
  for (int n = -N; n <= N; ++n) {
    table.kappas_s.push_back(kappa_scattered(s, c, d1, L, n));
    table.kappas_t.push_back(kappa_transmitted(s, c, d1, L, n, bhat1));
  }
  return table;
}

Complex reflection_multiplier(Complex kappa, Complex s, double eta, double c) {
  const Complex impedance = s * eta / c;
  return (kappa - impedance) / (kappa + impedance);
}

ModeVector apply_FH(const ModeVector& lambda_plus, const KappaTable& table, double eta, Complex s,
                    double c) {
  if (lambda_plus.side() != BoundarySide::top || lambda_plus.kind() != ModeKind::plus) {
    throw Error(ErrorCode::InvalidParameter, "F_H acts on top outgoing (plus) data");
  }
  if (lambda_plus.N() != table.N) throw Error(ErrorCode::TruncationMismatch, "F_H truncation");
  ModeVector out(table.N, BoundarySide::top, ModeKind::minus);
  for (int n = -table.N; n <= table.N; ++n) {
    out(n) = reflection_multiplier(table.transmitted(n), s, eta, c) * lambda_plus(n);
  }
  return out;
}

ModeVector apply_F0(const ModeVector& lambda_plus, const KappaTable& table, double eta, Complex s,
                    double c) {
  if (lambda_plus.side() != BoundarySide::bottom || lambda_plus.kind() != ModeKind::plus) {
    throw Error(ErrorCode::InvalidParameter, "F_0 acts on bottom outgoing (plus) data");
  }
  if (lambda_plus.N() != table.N) throw Error(ErrorCode::TruncationMismatch, "F_0 truncation");
  ModeVector out(table.N, BoundarySide::bottom, ModeKind::minus);
  for (int n = -table.N; n <= table.N; ++n) {
    out(n) = reflection_multiplier(table.scattered(n), s, eta, c) * lambda_plus(n);
  }
  return out;
}

IncidentData incident_data(Complex s, Complex trace_hat, const IncidentGeometry& geom, double eta,
                           int N) {
  IncidentData data{ModeVector(N, BoundarySide::bottom, ModeKind::minus),
                    ModeVector(N, BoundarySide::bottom, ModeKind::plus)};
  const Complex sc = s / geom.c;
  data.f_minus(0) = (sc * geom.d2 + sc * eta) * trace_hat;
  data.f_plus(0) = (sc * geom.d2 - sc * eta) * trace_hat;
  return data;
}

Complex incident_trace_hat(Complex s, Complex fhat, const IncidentGeometry& geom) {
  return fhat * std::exp(-s * geom.frame_delay());
}

std::pair<Complex, Complex> edge_mode_integrals(double a, double b, int n, double L) {
  const double h = b - a;
  const double k = 2.0 * kPi * n / L;
  const auto [e0, e1] = unit_moments(k * h);
  const Complex scale = h * std::exp(-kI * (k * a));
  return {scale * (e0 - e1), scale * e1};
}

TraceCoupling mode_inner_products(const std::vector<BoundaryEdge>& edges, int N, double L,
                                  const DofMap& dofmap) {
  if (N < 0) throw Error(ErrorCode::InvalidParameter, "mode truncation must be non-negative");
  TraceCoupling out;
  out.N = N;
  const int modes = 2 * N + 1;
  out.G = Eigen::MatrixXcd::Zero(modes, dofmap.n_dofs);
  out.gram = Eigen::MatrixXcd::Zero(modes, modes);
  for (const auto& edge : edges) {
    const int dof_a = dofmap.vertex_to_dof[static_cast<std::size_t>(edge.vertices[0])];
    const int dof_b = dofmap.vertex_to_dof[static_cast<std::size_t>(edge.vertices[1])];
    for (int n = -N; n <= N; ++n) {
      const auto [ia, ib] = edge_mode_integrals(edge.x_start, edge.x_end, n, L);
      out.G(n + N, dof_a) += ia;
      out.G(n + N, dof_b) += ib;
    }
    // <psi_q, psi_p> = int exp(-i 2 pi (p - q) x / L); the two hats sum to 1.
    for (int p = -N; p <= N; ++p) {
      for (int q = -N; q <= N; ++q) {
        const auto [ia, ib] = edge_mode_integrals(edge.x_start, edge.x_end, p - q, L);
        out.gram(p + N, q + N) += ia + ib;
      }
    }
  }
  return out;
}

}  // namespace cqgrating
