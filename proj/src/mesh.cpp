#include "cqgrating/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cqgrating {
namespace {

constexpr double kPairTolerance = 1e-9;
constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)
constexpr std::array<double, 4> kCornerXi{-1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 4> kCornerEta{-1.0, -1.0, 1.0, 1.0};

double jacobian_det(const std::array<Vertex, 4>& p, double xi, double eta) {
  const auto grads = q1_shape_gradients(xi, eta);
  double dx_dxi = 0.0, dx_deta = 0.0, dz_dxi = 0.0, dz_deta = 0.0;
  for (int k = 0; k < 4; ++k) {
    dx_dxi += p[k].x * grads[k][0];
    dx_deta += p[k].x * grads[k][1];
    dz_dxi += p[k].z * grads[k][0];
    dz_deta += p[k].z * grads[k][1];
  }
  return dx_dxi * dz_deta - dx_deta * dz_dxi;
}

std::array<Vertex, 4> corners(const std::vector<Vertex>& vertices, const Element& e) {
  return {vertices[e.v[0]], vertices[e.v[1]], vertices[e.v[2]], vertices[e.v[3]]};
}

void check_element(const std::vector<Vertex>& vertices, const Element& e, int index) {
  for (int k = 0; k < 4; ++k) {
    if (e.v[k] < 0 || e.v[k] >= static_cast<int>(vertices.size())) {
      throw Error(ErrorCode::InvalidMesh,
                  "element " + std::to_string(index) + " references a missing vertex");
    }
  }
  const auto p = corners(vertices, e);
  for (int k = 0; k < 4; ++k) {
    const Vertex& a = p[(k + 3) % 4];
    const Vertex& b = p[k];
    const Vertex& c = p[(k + 1) % 4];
    const double cross = (b.x - a.x) * (c.z - b.z) - (b.z - a.z) * (c.x - b.x);
    if (!(cross > 0.0)) {
      throw Error(ErrorCode::TangledElement,
                  "element " + std::to_string(index) + " is not convex and counterclockwise");
    }
  }
  for (double xi : {-kGauss, kGauss}) {
    for (double eta : {-kGauss, kGauss}) {
      if (!(jacobian_det(p, xi, eta) > 0.0)) {
        throw Error(ErrorCode::TangledElement,
                    "element " + std::to_string(index) + " has a non-positive Jacobian");
      }
    }
  }
}

}  // namespace

std::array<double, 4> q1_shape(double xi, double eta) {
  std::array<double, 4> n{};
  for (int k = 0; k < 4; ++k) n[k] = 0.25 * (1.0 + xi * kCornerXi[k]) * (1.0 + eta * kCornerEta[k]);
  return n;
}

std::array<std::array<double, 2>, 4> q1_shape_gradients(double xi, double eta) {
  std::array<std::array<double, 2>, 4> g{};
  for (int k = 0; k < 4; ++k) {
    g[k][0] = 0.25 * kCornerXi[k] * (1.0 + eta * kCornerEta[k]);
    g[k][1] = 0.25 * kCornerEta[k] * (1.0 + xi * kCornerXi[k]);
  }
  return g;
}

QuadMesh::QuadMesh(double L, double H, std::vector<Vertex> vertices, std::vector<Element> elements)
    : L_(L), H_(H), vertices_(std::move(vertices)), elements_(std::move(elements)) {
  if (!(L_ > 0.0) || !(H_ > 0.0)) {
    throw Error(ErrorCode::InvalidDims, "cell dimensions must be positive");
  }
  if (elements_.empty()) throw Error(ErrorCode::InvalidMesh, "mesh has no elements");
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    check_element(vertices_, elements_[e], static_cast<int>(e));
  }

  const double tol = kPairTolerance * L_;
  std::vector<int> left, right;
  for (int i = 0; i < static_cast<int>(vertices_.size()); ++i) {
    if (std::abs(vertices_[i].x) < tol) left.push_back(i);
    if (std::abs(vertices_[i].x - L_) < tol) right.push_back(i);
  }
  auto by_z = [this](int a, int b) { return vertices_[a].z < vertices_[b].z; };
  std::sort(left.begin(), left.end(), by_z);
  std::sort(right.begin(), right.end(), by_z);
  if (left.size() != right.size()) {
    throw Error(ErrorCode::NonMatchingPeriodicBoundary,
                std::to_string(left.size()) + " left boundary vertices but " +
                    std::to_string(right.size()) + " on the right");
  }
  for (std::size_t k = 0; k < left.size(); ++k) {
    const double dz = std::abs(vertices_[left[k]].z - vertices_[right[k]].z);
    if (dz >= tol) {
      throw Error(ErrorCode::NonMatchingPeriodicBoundary,
                  "left vertex at z = " + std::to_string(vertices_[left[k]].z) +
                      " has no partner on x = L");
    }
    periodic_pairs_.emplace_back(left[k], right[k]);
  }

  for (int e = 0; e < static_cast<int>(elements_.size()); ++e) {
    for (int k = 0; k < 4; ++k) {
      const int a = elements_[e].v[k];
      const int b = elements_[e].v[(k + 1) % 4];
      const Vertex& va = vertices_[a];
      const Vertex& vb = vertices_[b];
      std::vector<BoundaryEdge>* target = nullptr;
      if (std::abs(va.z) < tol && std::abs(vb.z) < tol) target = &sigma0_;
      if (std::abs(va.z - H_) < tol && std::abs(vb.z - H_) < tol) target = &sigmaH_;
      if (target == nullptr) continue;
      BoundaryEdge edge;
      edge.element = e;
      edge.local_edge = k;
      if (va.x <= vb.x) {
        edge.x_start = va.x;
        edge.x_end = vb.x;
        edge.vertices = {a, b};
      } else {
        edge.x_start = vb.x;
        edge.x_end = va.x;
        edge.vertices = {b, a};
      }
      target->push_back(edge);
    }
  }
  for (auto* edges : {&sigma0_, &sigmaH_}) {
    std::sort(edges->begin(), edges->end(),
              [](const BoundaryEdge& a, const BoundaryEdge& b) { return a.x_start < b.x_start; });
    const char* name = edges == &sigma0_ ? "bottom" : "top";
    if (edges->empty()) {
      throw Error(ErrorCode::GapInBoundary, std::string(name) + " boundary has no edges");
    }
    double cursor = 0.0;
    double total = 0.0;
    for (const auto& edge : *edges) {
      if (std::abs(edge.x_start - cursor) >= tol) {
        throw Error(ErrorCode::GapInBoundary, std::string(name) + " boundary is not tiled near x = " +
                                                  std::to_string(cursor));
      }
      cursor = edge.x_end;
      total += edge.length();
    }
    if (std::abs(cursor - L_) >= tol || std::abs(total - L_) > 1e-12 * L_) {
      throw Error(ErrorCode::GapInBoundary, std::string(name) + " boundary does not reach x = L");
    }
  }

  const double area = total_area();
  if (std::abs(area - L_ * H_) > 1e-10 * L_ * H_) {
    throw Error(ErrorCode::InvalidMesh, "element areas sum to " + std::to_string(area) +
                                            " instead of L*H");
  }
}

QuadMesh QuadMesh::build_structured(double L, double H, int nx, int nz,
                                    const std::function<int(double, double)>& region_fn) {
  if (nx < 2 || nz < 1) {
    throw Error(ErrorCode::InvalidDims, "structured mesh needs nx >= 2 and nz >= 1");
  }
  if (!(L > 0.0) || !(H > 0.0)) {
    throw Error(ErrorCode::InvalidDims, "cell dimensions must be positive");
  }
  std::vector<Vertex> vertices;
  vertices.reserve(static_cast<std::size_t>(nx + 1) * (nz + 1));
  for (int j = 0; j <= nz; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const double x = i == nx ? L : L * i / nx;
      const double z = j == nz ? H : H * j / nz;
      vertices.push_back({x, z});
    }
  }
  std::vector<Element> elements;
  elements.reserve(static_cast<std::size_t>(nx) * nz);
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < nz; ++j) {
    for (int i = 0; i < nx; ++i) {
      Element e;
      e.v = {id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)};
      const double xc = L * (i + 0.5) / nx;
      const double zc = H * (j + 0.5) / nz;
      e.region = region_fn ? region_fn(xc, zc) : 0;
      elements.push_back(e);
    }
  }
  return QuadMesh(L, H, std::move(vertices), std::move(elements));
}

double QuadMesh::element_area(int e) const {
  const auto p = corners(vertices_, elements_[e]);
  double twice = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Vertex& a = p[k];
    const Vertex& b = p[(k + 1) % 4];
    twice += a.x * b.z - b.x * a.z;
  }
  return 0.5 * twice;
}

double QuadMesh::total_area() const {
  long double area = 0.0L;
  for (int e = 0; e < static_cast<int>(elements_.size()); ++e) area += element_area(e);
  return static_cast<double>(area);
}

std::optional<QuadMesh::Location> QuadMesh::locate(double x, double z) const {
  constexpr double kInside = 1.0 + 1e-10;
  for (int e = 0; e < static_cast<int>(elements_.size()); ++e) {
    const auto p = corners(vertices_, elements_[e]);
    double xmin = p[0].x, xmax = p[0].x, zmin = p[0].z, zmax = p[0].z;
    for (const auto& v : p) {
      xmin = std::min(xmin, v.x);
      xmax = std::max(xmax, v.x);
      zmin = std::min(zmin, v.z);
      zmax = std::max(zmax, v.z);
    }
    const double pad = 1e-12 * std::max(L_, H_);
    if (x < xmin - pad || x > xmax + pad || z < zmin - pad || z > zmax + pad) continue;

    double xi = 0.0, eta = 0.0;
    for (int iter = 0; iter < 50; ++iter) {
      const auto n = q1_shape(xi, eta);
      const auto g = q1_shape_gradients(xi, eta);
      double fx = -x, fz = -z, a = 0.0, b = 0.0, c = 0.0, d = 0.0;
      for (int k = 0; k < 4; ++k) {
        fx += n[k] * p[k].x;
        fz += n[k] * p[k].z;
        a += p[k].x * g[k][0];
        b += p[k].x * g[k][1];
        c += p[k].z * g[k][0];
        d += p[k].z * g[k][1];
      }
      const double det = a * d - b * c;
      const double dxi = (d * fx - b * fz) / det;
      const double deta = (-c * fx + a * fz) / det;
      xi -= dxi;
      eta -= deta;
      if (std::abs(dxi) + std::abs(deta) < 1e-14) break;
    }
    if (std::abs(xi) <= kInside && std::abs(eta) <= kInside) {
      return Location{e, std::clamp(xi, -1.0, 1.0), std::clamp(eta, -1.0, 1.0)};
    }
  }
  return std::nullopt;
}

DofMap DofMap::build(const QuadMesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices().size());
  std::vector<int> partner(nv, -1);
  for (const auto& [left, right] : mesh.periodic_pairs()) partner[right] = left;
  DofMap map;
  map.vertex_to_dof.assign(nv, -1);
  for (int i = 0; i < nv; ++i) {
    if (partner[i] < 0) map.vertex_to_dof[i] = map.n_dofs++;
  }
  for (int i = 0; i < nv; ++i) {
    if (partner[i] >= 0) map.vertex_to_dof[i] = map.vertex_to_dof[partner[i]];
  }
  return map;
}

QuadMesh read_mesh(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return;
    }
    throw Error(ErrorCode::ParseError, std::string("unexpected end of file, expected ") + what);
  };
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + why);
  };

  next_line("header");
  std::istringstream header(line);
  std::string tag;
  int version = 0;
  long long nv = -1, ne = -1;
  double L = 0.0, H = 0.0;
  if (!(header >> tag >> version >> nv >> ne >> L >> H) || tag != "quadmesh" || version != 1 ||
      nv < 0 || ne < 0) {
    fail("malformed header, expected 'quadmesh 1 <n_vertices> <n_elements> <L> <H>'");
  }
  std::string rest;
  if (header >> rest) fail("trailing tokens in header");

  std::vector<Vertex> vertices;
  vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    next_line("vertex line");
    std::istringstream ls(line);
    Vertex v;
    if (!(ls >> tag >> v.x >> v.z) || tag != "v") fail("malformed vertex line");
    if (ls >> rest) fail("trailing tokens in vertex line");
    vertices.push_back(v);
  }
  std::vector<Element> elements;
  elements.reserve(static_cast<std::size_t>(ne));
  for (long long i = 0; i < ne; ++i) {
    next_line("element line");
    std::istringstream ls(line);
    Element e;
    if (!(ls >> tag >> e.v[0] >> e.v[1] >> e.v[2] >> e.v[3] >> e.region) || tag != "e") {
      fail("malformed element line");
    }
    if (ls >> rest) fail("trailing tokens in element line");
    for (int k : e.v) {
      if (k < 0 || k >= nv) fail("vertex index out of range");
    }
    elements.push_back(e);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) fail("unexpected content after mesh");
  }
  return QuadMesh(L, H, std::move(vertices), std::move(elements));
}

QuadMesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open mesh file " + path);
  return read_mesh(in);
}

void write_mesh(std::ostream& out, const QuadMesh& mesh) {
  const auto old_precision = out.precision();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "quadmesh 1 " << mesh.vertices().size() << ' ' << mesh.elements().size() << ' '
      << mesh.L() << ' ' << mesh.H() << '\n';
  for (const auto& v : mesh.vertices()) out << "v " << v.x << ' ' << v.z << '\n';
  for (const auto& e : mesh.elements()) {
    out << "e " << e.v[0] << ' ' << e.v[1] << ' ' << e.v[2] << ' ' << e.v[3] << ' ' << e.region
        << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cqgrating
