#pragma once

// Periodic-in-x quadrilateral meshes of the unit cell (0,L) x (0,H).

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cqgrating/error.hpp"

namespace cqgrating {

struct Vertex {
  double x = 0.0;
  double z = 0.0;
};

// Four vertex indices in counterclockwise order. Local edge k joins
// v[k] and v[(k + 1) % 4].
struct Element {
  std::array<int, 4> v{};
  int region = 0;
};

enum class BoundarySide { bottom, top };

// One element edge lying on z = 0 or z = H; vertices[0] sits at x_start.
struct BoundaryEdge {
  int element = 0;
  int local_edge = 0;
  double x_start = 0.0;
  double x_end = 0.0;
  std::array<int, 2> vertices{};

  double length() const { return x_end - x_start; }
};

class QuadMesh {
 public:
  // Validates every invariant: convex counterclockwise elements with positive
  // Jacobian at the 2x2 Gauss points, left/right vertex pairing within
  // 1e-9 L, exact tiling of both horizontal boundaries and total area L H.
  QuadMesh(double L, double H, std::vector<Vertex> vertices, std::vector<Element> elements);

  static QuadMesh build_structured(double L, double H, int nx, int nz,
                                   const std::function<int(double, double)>& region_fn);

  double L() const { return L_; }
  double H() const { return H_; }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Element>& elements() const { return elements_; }
  // (left vertex, right vertex) pairs, sorted by z.
  const std::vector<std::pair<int, int>>& periodic_pairs() const { return periodic_pairs_; }

  // Edges on z = 0 (bottom) or z = H (top), sorted by x_start.
  const std::vector<BoundaryEdge>& boundary_edges(BoundarySide which) const {
    return which == BoundarySide::bottom ? sigma0_ : sigmaH_;
  }

  double element_area(int e) const;
  double total_area() const;

  // Element containing (x, z) and its reference coordinates in [-1,1]^2.
  struct Location {
    int element = -1;
    double xi = 0.0;
    double eta = 0.0;
  };
  std::optional<Location> locate(double x, double z) const;

 private:
  double L_;
  double H_;
  std::vector<Vertex> vertices_;
  std::vector<Element> elements_;
  std::vector<std::pair<int, int>> periodic_pairs_;
  std::vector<BoundaryEdge> sigma0_;
  std::vector<BoundaryEdge> sigmaH_;
};

// Vertex-to-DOF numbering with right-boundary vertices folded onto their
// left partners, which realizes x-periodicity.
struct DofMap {
  int n_dofs = 0;
  std::vector<int> vertex_to_dof;

  static DofMap build(const QuadMesh& mesh);
};

// Plain-text format:
//   quadmesh 1 <n_vertices> <n_elements> <L> <H>
//   v <x> <z>
//   e <i0> <i1> <i2> <i3> <region_label>
QuadMesh read_mesh(std::istream& in);
QuadMesh read_mesh_file(const std::string& path);
void write_mesh(std::ostream& out, const QuadMesh& mesh);

// Bilinear shape functions on the reference square, counterclockwise from
// (-1,-1).
std::array<double, 4> q1_shape(double xi, double eta);
std::array<std::array<double, 2>, 4> q1_shape_gradients(double xi, double eta);

}  // namespace cqgrating
