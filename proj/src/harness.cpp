#include "cqgrating/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace cqgrating {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void bad_config(const std::string& message) {
  throw Error(ErrorCode::InvalidConfig, message);
}

void allow_keys(const json& section, const std::string& where, std::set<std::string> keys) {
  if (!section.is_object()) bad_config(where + " must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!keys.count(key)) bad_config("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& section, const std::string& key, T fallback) {
  if (!section.contains(key)) return fallback;
  return section.at(key).get<T>();
}

Complex parse_complex(const json& v) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2) return {v[0].get<double>(), v[1].get<double>()};
  bad_config("complex values are numbers or [re, im] pairs");
}

MaterialModel parse_material(const json& m, const std::string& where) {
  if (!m.is_object() || !m.contains("kind")) bad_config(where + " needs a 'kind'");
  const auto kind = m.at("kind").get<std::string>();
  MaterialModel model;
  if (kind == "constant") {
    allow_keys(m, where, {"kind", "value"});
    model = ConstantModel{parse_complex(m.at("value"))};
  } else if (kind == "drude") {
    allow_keys(m, where, {"kind", "alpha", "beta", "gamma"});
    model = DrudeParams{m.at("alpha").get<double>(), m.at("beta").get<double>(),
                        m.at("gamma").get<double>()};
  } else if (kind == "sellmeier") {
    allow_keys(m, where, {"kind", "units", "terms", "preset", "c0"});
    const double c0 = get_or(m, "c0", 0.3);
    if (m.contains("preset")) {
      if (m.at("preset").get<std::string>() != "sf11") bad_config(where + ": unknown glass preset");
      model = sf11_sellmeier(c0);
    } else {
      const auto units = m.at("units").get<std::string>();
      std::vector<std::pair<double, double>> terms;
      for (const auto& t : m.at("terms")) {
        if (!t.is_array() || t.size() != 2) bad_config(where + ": terms are [alpha, beta] pairs");
        terms.emplace_back(t[0].get<double>(), t[1].get<double>());
      }
      if (units == "wavelength_um") {
        model = SellmeierParams::from_wavelength(terms, c0);
      } else if (units == "time2") {
        SellmeierParams p;
        for (const auto& [a, b] : terms) p.terms.push_back({a, b});
        model = p;
      } else {
        bad_config(where + ": units must be wavelength_um or time2");
      }
    }
  } else {
    bad_config(where + ": unknown material kind '" + kind + "'");
  }
  try {
    validate_model(model);
  } catch (const Error& e) {
    bad_config(where + ": " + e.what());
  }
  return model;
}

Pulse parse_pulse(const json& p, double& reference_height) {
  if (!p.is_object() || !p.contains("kind")) bad_config("pulse needs a 'kind'");
  const auto kind = p.at("kind").get<std::string>();
  reference_height = get_or(p, "reference_height", 0.0);
  Pulse pulse;
  if (kind == "sinm") {
    allow_keys(p, "pulse", {"kind", "m", "alpha", "beta", "reference_height"});
    pulse = SinMPulse{get_or(p, "m", 4), get_or(p, "alpha", 4.0), get_or(p, "beta", 0.5)};
  } else if (kind == "gauss_sine") {
    allow_keys(p, "pulse", {"kind", "omega0", "spread", "center", "reference_height"});
    pulse = GaussSinePulse{get_or(p, "omega0", 2.899), get_or(p, "spread", 2.0),
                           get_or(p, "center", 3.0)};
  } else {
    bad_config("unknown pulse kind '" + kind + "'");
  }
  try {
    validate_pulse(pulse);
  } catch (const Error& e) {
    bad_config(std::string("pulse: ") + e.what());
  }
  return pulse;
}

RegionShape parse_shape(const json& r) {
  RegionShape shape;
  const auto kind = r.at("shape").get<std::string>();
  shape.label = r.at("label").get<int>();
  if (kind == "rect") {
    allow_keys(r, "region", {"label", "shape", "x", "z"});
    shape.kind = RegionShape::Kind::rect;
    shape.x = r.at("x").get<std::array<double, 2>>();
    shape.z = r.at("z").get<std::array<double, 2>>();
  } else if (kind == "disk") {
    allow_keys(r, "region", {"label", "shape", "center", "radius"});
    shape.kind = RegionShape::Kind::disk;
    shape.center = r.at("center").get<std::array<double, 2>>();
    shape.radius = r.at("radius").get<double>();
    if (!(shape.radius > 0.0)) bad_config("disk radius must be positive");
  } else {
    bad_config("unknown region shape '" + kind + "'");
  }
  return shape;
}

RunConfig parse_config_impl(const json& doc) {
  allow_keys(doc, "config", {"name", "geometry", "mesh", "materials", "above", "pulse", "time", "cq",
                             "boundary", "solver", "probes", "output", "oracle"});
  RunConfig cfg;
  cfg.source = doc;
  cfg.name = get_or<std::string>(doc, "name", "run");

  const auto& g = doc.at("geometry");
  allow_keys(g, "geometry", {"L", "H", "angle_deg", "angle_from_horizontal", "c"});
  cfg.L = g.at("L").get<double>();
  cfg.H = g.at("H").get<double>();
  cfg.angle_deg = get_or(g, "angle_deg", 0.0);
  cfg.angle_from_horizontal = get_or(g, "angle_from_horizontal", false);
  cfg.c = get_or(g, "c", 1.0);
  if (!(cfg.L > 0.0) || !(cfg.H > 0.0) || !(cfg.c > 0.0)) {
    bad_config("geometry needs L, H, c > 0");
  }

  const auto& m = doc.at("mesh");
  allow_keys(m, "mesh", {"nx", "nz", "file", "regions", "default_label"});
  if (m.contains("file")) {
    cfg.mesh.file = m.at("file").get<std::string>();
    if (!fs::exists(cfg.mesh.file)) bad_config("mesh file '" + cfg.mesh.file + "' does not exist");
  } else {
    cfg.mesh.nx = m.at("nx").get<int>();
    cfg.mesh.nz = m.at("nz").get<int>();
    cfg.mesh.default_label = get_or(m, "default_label", 0);
    if (m.contains("regions")) {
      for (const auto& r : m.at("regions")) cfg.mesh.shapes.push_back(parse_shape(r));
    }
  }

  for (const auto& [key, value] : doc.at("materials").items()) {
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      bad_config("material keys are integer region labels, got '" + key + "'");
    }
    cfg.materials[label] = parse_material(value, "materials." + key);
  }
  if (doc.contains("above")) cfg.above = parse_material(doc.at("above"), "above");

  cfg.pulse = parse_pulse(doc.at("pulse"), cfg.pulse_reference_height);

  const auto& t = doc.at("time");
  allow_keys(t, "time", {"rule", "T", "n_steps"});
  cfg.rule = parse_rule(get_or<std::string>(t, "rule", "bdf2"));
  cfg.T = t.at("T").get<double>();
  cfg.n_steps = t.at("n_steps").get<int>();
  if (!(cfg.T > 0.0) || cfg.n_steps < 1) bad_config("time needs T > 0 and n_steps >= 1");
  cfg.sigma_min = 0.1 / cfg.T;

  if (doc.contains("cq")) {
    const auto& q = doc.at("cq");
    allow_keys(q, "cq", {"epsilon", "half_contour"});
    cfg.cq_epsilon = get_or(q, "epsilon", 1e-14);
    cfg.half_contour = get_or(q, "half_contour", true);
    if (!(cfg.cq_epsilon > 0.0 && cfg.cq_epsilon < 1.0)) bad_config("cq.epsilon must be in (0,1)");
  }
  if (doc.contains("boundary")) {
    const auto& b = doc.at("boundary");
    allow_keys(b, "boundary", {"N", "eta"});
    cfg.N = get_or(b, "N", 10);
    cfg.eta = get_or(b, "eta", 1.0);
    if (cfg.N < 0 || !(cfg.eta > 0.0)) bad_config("boundary needs N >= 0 and eta > 0");
  }
  if (doc.contains("solver")) {
    const auto& s = doc.at("solver");
    allow_keys(s, "solver", {"sigma_min", "gamma0", "workers"});
    cfg.sigma_min = get_or(s, "sigma_min", cfg.sigma_min);
    cfg.gamma0 = get_or(s, "gamma0", -1.0);
    cfg.workers = get_or(s, "workers", 1);
  }
  if (doc.contains("probes")) {
    for (const auto& p : doc.at("probes")) {
      if (!p.is_array() || p.size() != 2) bad_config("probes are [x, z] pairs");
      cfg.probes.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  if (doc.contains("output")) {
    const auto& o = doc.at("output");
    allow_keys(o, "output",
               {"directory", "vtk", "dump_times", "dump_stride", "lab_frame", "field_norms"});
    cfg.output.directory = get_or<std::string>(o, "directory", "out");
    cfg.output.vtk = get_or(o, "vtk", false);
    cfg.output.dump_times = get_or(o, "dump_times", std::vector<double>{});
    cfg.output.dump_stride = get_or(o, "dump_stride", 0);
    cfg.output.lab_frame = get_or(o, "lab_frame", false);
    cfg.output.field_norms = get_or(o, "field_norms", false);
    if (cfg.output.dump_stride < 0) bad_config("output.dump_stride must be >= 0");
    for (double td : cfg.output.dump_times) {
      if (td < 0.0 || td > cfg.T) bad_config("dump time outside [0, T]");
    }
  }
  if (doc.contains("oracle")) {
    const auto& o = doc.at("oracle");
    allow_keys(o, "oracle", {"eps_minus", "eps_plus", "h_i", "error_times"});
    OracleSpec spec;
    spec.eps_minus = o.at("eps_minus").get<double>();
    spec.eps_plus = o.at("eps_plus").get<double>();
    spec.h_i = o.at("h_i").get<double>();
    spec.error_times = get_or(o, "error_times", std::vector<double>{1.5});
    cfg.oracle = spec;
    try {
      cfg.oracle_layers().validate(cfg.H);
    } catch (const Error& e) {
      bad_config(std::string("oracle: ") + e.what());
    }
  }
  try {
    (void)cfg.geometry();
  } catch (const Error& e) {
    bad_config(std::string("geometry: ") + e.what());
  }
  return cfg;
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << std::setw(2) << doc << '\n';
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << std::setprecision(17);
  return out;
}

// 3-point Gauss rule on [-1, 1]
constexpr std::array<double, 3> kGaussX{-0.77459666924148337704, 0.0, 0.77459666924148337704};
constexpr std::array<double, 3> kGaussW{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

}  // namespace

bool RegionShape::contains(double px, double pz) const {
  if (kind == Kind::rect) return px >= x[0] && px <= x[1] && pz >= z[0] && pz <= z[1];
  const double dx = px - center[0];
  const double dz = pz - center[1];
  return dx * dx + dz * dz <= radius * radius;
}

IncidentGeometry RunConfig::geometry() const {
  return IncidentGeometry::from_degrees(angle_deg, angle_from_horizontal, L, c);
}

Pulse RunConfig::trace_pulse() const {
  if (pulse_reference_height == 0.0) return pulse;
  const auto g = geometry();
  return delayed_pulse(pulse, -g.d2 * pulse_reference_height / c);
}

MaterialMap RunConfig::material_map() const { return MaterialMap(materials, above); }

QuadMesh RunConfig::build_mesh() const {
  if (!mesh.file.empty()) {
    QuadMesh m = read_mesh_file(mesh.file);
    if (std::abs(m.L() - L) > 1e-12 * L || std::abs(m.H() - H) > 1e-12 * H) {
      throw Error(ErrorCode::InvalidConfig, "mesh file dimensions differ from the geometry");
    }
    return m;
  }
  const auto shapes = mesh.shapes;
  const int fallback = mesh.default_label;
  return QuadMesh::build_structured(L, H, mesh.nx, mesh.nz, [shapes, fallback](double x, double z) {
    int label = fallback;
    for (const auto& s : shapes) {
      if (s.contains(x, z)) label = s.label;
    }
    return label;
  });
}

TwoLayerConfig RunConfig::oracle_layers() const {
  if (!oracle) throw Error(ErrorCode::InvalidConfig, "configuration has no oracle section");
  // The lower medium carries the incident wave at speed c.
  return TwoLayerConfig{oracle->eps_minus, oracle->eps_plus, oracle->h_i,
                        c * std::sqrt(oracle->eps_plus)};
}

RunConfig parse_config(const json& doc) {
  try {
    if (doc.is_object() && doc.contains("config") && doc.contains("complete")) {
      return parse_config_impl(doc.at("config"));
    }
    return parse_config_impl(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return parse_config(doc);
}

std::vector<std::string> preset_names() { return {"convergence41", "drude421", "sellmeier422"}; }

json preset_document(const std::string& name) {
  if (name == "convergence41") {
    return json{
        {"name", name},
        {"geometry", {{"L", 1.0}, {"H", 1.0}, {"angle_deg", 0.0}, {"angle_from_horizontal", false},
                      {"c", 1.0}}},
        {"mesh", {{"nx", 32}, {"nz", 256}, {"default_label", 0},
                  {"regions", json::array({{{"label", 1}, {"shape", "rect"}, {"x", {0.0, 1.0}},
                                            {"z", {0.5, 1.0}}}})}}},
        {"materials", {{"0", {{"kind", "constant"}, {"value", 1.0}}},
                       {"1", {{"kind", "constant"}, {"value", 0.25}}}}},
        {"above", {{"kind", "constant"}, {"value", 0.25}}},
        {"pulse", {{"kind", "sinm"}, {"m", 4}, {"alpha", 4.0}, {"beta", 0.5},
                   {"reference_height", 0.5}}},
        {"time", {{"rule", "bdf2"}, {"T", 4.0}, {"n_steps", 512}}},
        {"cq", {{"epsilon", 1e-14}, {"half_contour", true}}},
        {"boundary", {{"N", 2}, {"eta", 1.0}}},
        {"probes", json::array({{0.5, 0.05}, {0.5, 0.75}})},
        {"output", {{"directory", "out/convergence41"}}},
        {"oracle", {{"eps_minus", 1.0}, {"eps_plus", 4.0}, {"h_i", 0.5},
                    {"error_times", {1.5}}}},
    };
  }
  if (name == "drude421") {
    return json{
        {"name", name},
        {"geometry", {{"L", 1.0}, {"H", 1.0}, {"angle_deg", 6.0}, {"angle_from_horizontal", false},
                      {"c", 1.0}}},
        {"mesh", {{"nx", 80}, {"nz", 80}, {"default_label", 0},
                  {"regions", json::array({{{"label", 1}, {"shape", "rect"}, {"x", {0.1, 0.9}},
                                            {"z", {0.5, 0.6}}}})}}},
        {"materials", {{"0", {{"kind", "constant"}, {"value", 1.0}}},
                       {"1", {{"kind", "drude"}, {"alpha", 4.0}, {"beta", 10.0}, {"gamma", 0.5}}}}},
        {"above", {{"kind", "constant"}, {"value", 1.0}}},
        {"pulse", {{"kind", "sinm"}, {"m", 4}, {"alpha", 4.0}, {"beta", 0.0}}},
        {"time", {{"rule", "bdf2"}, {"T", 4.0}, {"n_steps", 512}}},
        {"boundary", {{"N", 10}, {"eta", 1.0}}},
        {"probes", json::array({{0.5, 0.05}, {0.5, 0.95}})},
        {"output", {{"directory", "out/drude421"}, {"vtk", true},
                    {"dump_times", {1.27, 1.72, 2.17, 2.62, 3.07, 3.52}},
                    {"lab_frame", true}, {"field_norms", true}}},
    };
  }
  if (name == "sellmeier422") {
    const double L = 0.56;
    const double R = 0.168;
    return json{
        {"name", name},
        {"geometry", {{"L", L}, {"H", L}, {"angle_deg", 6.0}, {"angle_from_horizontal", false},
                      {"c", 0.3}}},
        {"mesh", {{"nx", 64}, {"nz", 64}, {"default_label", 0},
                  {"regions", json::array({{{"label", 1}, {"shape", "disk"},
                                            {"center", {L / 2.0, L - 0.02 - R}},
                                            {"radius", R}}})}}},
        {"materials", {{"0", {{"kind", "constant"}, {"value", 1.0}}},
                       {"1", {{"kind", "constant"}, {"value", 1.8 * 1.8}}}}},
        {"above", {{"kind", "sellmeier"}, {"preset", "sf11"}, {"c0", 0.3}}},
        {"pulse", {{"kind", "gauss_sine"}, {"omega0", 2.899}, {"spread", 2.0}, {"center", 3.0}}},
        {"time", {{"rule", "bdf2"}, {"T", 8.0}, {"n_steps", 512}}},
        {"boundary", {{"N", 10}, {"eta", 1.0}}},
        {"probes", json::array({{L / 2.0, 0.02}, {L / 2.0, L - 0.01}})},
        {"output", {{"directory", "out/sellmeier422"}, {"vtk", true}, {"dump_stride", 64},
                    {"lab_frame", true}, {"field_norms", true}}},
    };
  }
  throw Error(ErrorCode::InvalidConfig, "unknown preset '" + name + "'");
}

RunConfig preset(const std::string& name) { return parse_config(preset_document(name)); }

ValidationReport validate(const RunConfig& config) {
  ValidationReport report;
  auto fail = [&](const std::string& msg) {
    report.ok = false;
    report.messages.push_back("FAIL " + msg);
  };
  try {
    const QuadMesh mesh = config.build_mesh();
    report.messages.push_back("mesh ok: " + std::to_string(mesh.vertices().size()) + " vertices, " +
                              std::to_string(mesh.elements().size()) + " elements");
    const auto materials = config.material_map();
    for (const auto& e : mesh.elements()) {
      if (!materials.has_region(e.region)) {
        fail("no material for region " + std::to_string(e.region));
        break;
      }
    }
  } catch (const Error& e) {
    fail(std::string("mesh: ") + e.what());
  }
  try {
    const auto geom = config.geometry();
    const auto materials = config.material_map();
    const double gamma0 = config.gamma0 < 0.0 ? materials.default_gamma0(geom.d1) : config.gamma0;
    const CqPlan p = plan(config.rule, config.dt(), config.n_steps, config.cq_epsilon,
                          config.half_contour);
    const auto bad = margin_violations(p, materials, geom.d1, gamma0);
    report.margin_violations = static_cast<int>(bad.size());
    if (bad.empty()) {
      report.messages.push_back("margins ok at " + std::to_string(p.size()) +
                                " contour points, gamma0 = " + std::to_string(gamma0));
    } else {
      fail(std::to_string(bad.size()) + " contour points below gamma0");
    }
    if (causality_check(config.trace_pulse(), geom, config.H)) {
      report.messages.push_back("causality ok");
    } else {
      fail("incident field is not negligible before t = 0");
    }
  } catch (const Error& e) {
    fail(e.what());
  }
  return report;
}

FieldNorms error_norms(const QuadMesh& mesh, const DofMap& dofmap, const Eigen::VectorXd& nodal,
                       const ScalarField& exact, const GradientField& exact_gradient) {
  double l2 = 0.0;
  double semi = 0.0;
  const auto& vertices = mesh.vertices();
  for (const auto& element : mesh.elements()) {
    std::array<double, 4> values{};
    for (int k = 0; k < 4; ++k) {
      values[k] = nodal(dofmap.vertex_to_dof[static_cast<std::size_t>(element.v[k])]);
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double xi = kGaussX[i];
        const double eta = kGaussX[j];
        const auto n = q1_shape(xi, eta);
        const auto g = q1_shape_gradients(xi, eta);
        double x = 0.0, z = 0.0, a = 0.0, b = 0.0, c = 0.0, d = 0.0;
        for (int k = 0; k < 4; ++k) {
          const auto& v = vertices[static_cast<std::size_t>(element.v[k])];
          x += n[k] * v.x;
          z += n[k] * v.z;
          a += v.x * g[k][0];
          b += v.x * g[k][1];
          c += v.z * g[k][0];
          d += v.z * g[k][1];
        }
        const double det = a * d - b * c;
        double wh = 0.0, dx = 0.0, dz = 0.0;
        for (int k = 0; k < 4; ++k) {
          wh += n[k] * values[k];
          dx += values[k] * (d * g[k][0] - c * g[k][1]) / det;
          dz += values[k] * (-b * g[k][0] + a * g[k][1]) / det;
        }
        const double weight = kGaussW[i] * kGaussW[j] * det;
        const double e = wh - exact(x, z);
        const auto grad = exact_gradient(x, z);
        l2 += weight * e * e;
        semi += weight * ((dx - grad[0]) * (dx - grad[0]) + (dz - grad[1]) * (dz - grad[1]));
      }
    }
  }
  return {std::sqrt(l2), std::sqrt(l2 + semi)};
}

int nearest_step(double t, double dt) { return static_cast<int>(std::lround(t / dt)); }

std::vector<ErrorSample> compute_errors(const FieldMovie& movie, const QuadMesh& mesh,
                                        const DofMap& dofmap, const TwoLayerConfig& layers,
                                        const Pulse& pulse, const std::vector<double>& times) {
  std::vector<ErrorSample> out;
  for (double t : times) {
    const int step = nearest_step(t, movie.dt);
    const auto* field = movie.field_at(step);
    if (!field) {
      throw Error(ErrorCode::InvalidParameter,
                  "field at step " + std::to_string(step) + " was not stored");
    }
    const double tn = step * movie.dt;
    const auto norms = error_norms(
        mesh, dofmap, *field,
        [&](double x, double z) { return exact_field(layers, pulse, x, z, tn); },
        [&](double x, double z) {
          return std::array<double, 2>{0.0, exact_field_dz(layers, pulse, x, z, tn)};
        });
    out.push_back({step, tn, norms.l2, norms.h1});
  }
  return out;
}

double fitted_slope(const std::vector<double>& dts, const std::vector<double>& errors) {
  const std::size_t n = dts.size();
  if (n < 2 || errors.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(dts[i]);
    my += std::log(errors[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(dts[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double ErrorTable::slope_l2() const {
  std::vector<double> dts, errs;
  for (const auto& r : rows) {
    dts.push_back(r.dt);
    errs.push_back(r.l2);
  }
  return fitted_slope(dts, errs);
}

double ErrorTable::slope_h1() const {
  std::vector<double> dts, errs;
  for (const auto& r : rows) {
    dts.push_back(r.dt);
    errs.push_back(r.h1);
  }
  return fitted_slope(dts, errs);
}

ErrorTable convergence_study(const RunConfig& config, const std::vector<double>& dts, double time) {
  const QuadMesh mesh = config.build_mesh();
  const auto geom = config.geometry();
  const FrequencySolver solver(mesh, config.material_map(), geom, config.eta, config.N,
                               config.sigma_min, config.gamma0);
  const auto layers = config.oracle_layers();
  const Pulse trace = config.trace_pulse();
  ErrorTable table;
  table.time = time;
  for (double dt : dts) {
    const int n_steps = static_cast<int>(std::lround(config.T / dt));
    if (n_steps < 1 || std::abs(n_steps * dt - config.T) > 1e-9 * config.T) {
      throw Error(ErrorCode::InvalidConfig, "time step does not divide T");
    }
    CqOptions options;
    options.rule = config.rule;
    options.dt = dt;
    options.n_steps = n_steps;
    options.epsilon = config.cq_epsilon;
    options.half_contour = config.half_contour;
    options.workers = config.workers;
    options.store_steps = {nearest_step(time, dt)};
    const FieldMovie movie = run_cq(solver, trace, options);
    const auto e =
        compute_errors(movie, mesh, solver.dofmap(), layers, config.pulse, {time}).front();
    ErrorRow row{dt, e.l2, e.h1, 0.0, 0.0};
    if (!table.rows.empty()) {
      const auto& prev = table.rows.back();
      const double ratio = std::log(prev.dt / dt);
      row.rate_l2 = std::log(prev.l2 / row.l2) / ratio;
      row.rate_h1 = std::log(prev.h1 / row.h1) / ratio;
    }
    table.rows.push_back(row);
  }
  return table;
}

void write_error_table(std::ostream& out, const ErrorTable& table) {
  out << "dt,l2_error,h1_error,rate_l2,rate_h1\n" << std::setprecision(10);
  for (const auto& r : table.rows) {
    out << r.dt << ',' << r.l2 << ',' << r.h1 << ',' << r.rate_l2 << ',' << r.rate_h1 << '\n';
  }
}

StabilityReport stability_report(const FieldMovie& movie, const Pulse& trace_pulse, double T) {
  StabilityReport report;
  report.incident_peak = pulse_peak(trace_pulse, 0.0, T);
  const int M = movie.n_steps;
  for (int n = 0; n <= M; ++n) {
    const auto* field = movie.field_at(n);
    if (!field) throw Error(ErrorCode::InvalidParameter, "stability needs every step stored");
    const double m = field->size() ? field->cwiseAbs().maxCoeff() : 0.0;
    report.step_max.push_back(m);
    report.max_field = std::max(report.max_field, m);
    if (4 * n >= M && 4 * n < 3 * M) report.max_middle_half = std::max(report.max_middle_half, m);
    if (4 * n >= 3 * M) report.max_last_quarter = std::max(report.max_last_quarter, m);
  }
  return report;
}

void write_vtk(const std::string& path, const QuadMesh& mesh, const DofMap& dofmap,
               const Eigen::VectorXd& nodal, double time) {
  auto out = open_output(path);
  const auto& vertices = mesh.vertices();
  const auto& elements = mesh.elements();
  out << "# vtk DataFile Version 3.0\n";
  out << "w t=" << time << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << vertices.size() << " double\n";
  for (const auto& v : vertices) out << v.x << ' ' << v.z << " 0\n";
  out << "CELLS " << elements.size() << ' ' << 5 * elements.size() << '\n';
  for (const auto& e : elements) {
    out << "4 " << e.v[0] << ' ' << e.v[1] << ' ' << e.v[2] << ' ' << e.v[3] << '\n';
  }
  out << "CELL_TYPES " << elements.size() << '\n';
  for (std::size_t i = 0; i < elements.size(); ++i) out << "9\n";
  out << "POINT_DATA " << vertices.size() << "\nSCALARS w double 1\nLOOKUP_TABLE default\n";
  for (std::size_t i = 0; i < vertices.size(); ++i) out << nodal(dofmap.vertex_to_dof[i]) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

VtkField read_vtk(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  auto parse_error = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, path + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line.rfind("# vtk DataFile", 0) != 0) parse_error("bad header");
  std::getline(in, line);  // title
  if (!std::getline(in, line) || line != "ASCII") parse_error("expected ASCII");
  if (!std::getline(in, line) || line != "DATASET UNSTRUCTURED_GRID") parse_error("bad dataset");
  VtkField field;
  std::string word, type;
  std::size_t count = 0;
  if (!(in >> word >> count >> type) || word != "POINTS") parse_error("expected POINTS");
  field.points.resize(count);
  for (auto& p : field.points) {
    double zero = 0.0;
    if (!(in >> p.x >> p.z >> zero)) parse_error("truncated POINTS");
  }
  std::size_t n_cells = 0, total = 0;
  if (!(in >> word >> n_cells >> total) || word != "CELLS" || total != 5 * n_cells) {
    parse_error("expected CELLS");
  }
  field.cells.resize(n_cells);
  for (auto& c : field.cells) {
    int k = 0;
    if (!(in >> k >> c[0] >> c[1] >> c[2] >> c[3]) || k != 4) parse_error("bad cell");
    for (int v : c) {
      if (v < 0 || static_cast<std::size_t>(v) >= count) parse_error("cell index out of range");
    }
  }
  std::size_t n_types = 0;
  if (!(in >> word >> n_types) || word != "CELL_TYPES" || n_types != n_cells) {
    parse_error("expected CELL_TYPES");
  }
  for (std::size_t i = 0; i < n_types; ++i) {
    int t = 0;
    if (!(in >> t) || t != 9) parse_error("cell type must be 9");
  }
  std::size_t n_data = 0;
  if (!(in >> word >> n_data) || word != "POINT_DATA" || n_data != count) {
    parse_error("expected POINT_DATA");
  }
  std::string scalars, name, dtype, lookup, table;
  int comps = 0;
  if (!(in >> scalars >> name >> dtype >> comps >> lookup >> table) || scalars != "SCALARS" ||
      comps != 1 || lookup != "LOOKUP_TABLE") {
    parse_error("expected SCALARS");
  }
  field.values.resize(count);
  for (auto& v : field.values) {
    if (!(in >> v)) parse_error("truncated POINT_DATA");
  }
  if (in >> word) parse_error("trailing content");
  return field;
}

RunResult run(const RunConfig& config, const std::string& out_dir) {
  const std::string dir = out_dir.empty() ? config.output.directory : out_dir;
  fs::create_directories(dir);
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();

  RunResult result;
  json& manifest = result.manifest;
  manifest["config"] = config.source;
  manifest["complete"] = false;
  manifest["outputs"] = json::array();
  write_json(manifest_path, manifest);

  try {
    const QuadMesh mesh = config.build_mesh();
    const auto geom = config.geometry();
    const FrequencySolver solver(mesh, config.material_map(), geom, config.eta, config.N,
                                 config.sigma_min, config.gamma0);
    const Pulse trace = config.trace_pulse();

    CqOptions options;
    options.rule = config.rule;
    options.dt = config.dt();
    options.n_steps = config.n_steps;
    options.epsilon = config.cq_epsilon;
    options.half_contour = config.half_contour;
    options.workers = config.workers;
    options.probes = config.probes;
    options.store_all = config.output.field_norms;

    std::vector<int> dump_steps;
    if (config.output.vtk) {
      for (double t : config.output.dump_times) dump_steps.push_back(nearest_step(t, options.dt));
      if (config.output.dump_stride > 0) {
        for (int n = 0; n <= config.n_steps; n += config.output.dump_stride) dump_steps.push_back(n);
      }
      std::sort(dump_steps.begin(), dump_steps.end());
      dump_steps.erase(std::unique(dump_steps.begin(), dump_steps.end()), dump_steps.end());
    }
    options.store_steps = dump_steps;
    if (config.oracle) {
      for (double t : config.oracle->error_times) {
        options.store_steps.push_back(nearest_step(t, options.dt));
      }
    }

    result.movie = run_cq(solver, trace, options);
    const FieldMovie& movie = result.movie;
    const CqPlan p = plan(options.rule, options.dt, options.n_steps, options.epsilon,
                          options.half_contour);
    manifest["contour"] = {{"rule", rule_name(p.rule)},
                           {"dt", p.dt},
                           {"n_steps", p.n_steps},
                           {"epsilon", p.epsilon},
                           {"radius", p.radius},
                           {"frequencies", p.size()},
                           {"solved", p.solved_indices().size()},
                           {"half_contour", p.half_contour}};
    manifest["residual_max"] = movie.max_residual;
    manifest["imag_residue_max"] = movie.max_imag_residue;
    manifest["gamma0"] = solver.gamma0();

    {
      const std::string path = (fs::path(dir) / "probes.csv").string();
      auto out = open_output(path);
      out << "time";
      for (std::size_t k = 0; k < config.probes.size(); ++k) out << ",w_probe" << k;
      if (config.output.lab_frame) {
        for (std::size_t k = 0; k < config.probes.size(); ++k) out << ",u_probe" << k;
      }
      out << '\n';
      std::vector<std::vector<double>> lab;
      if (config.output.lab_frame) {
        for (std::size_t k = 0; k < config.probes.size(); ++k) {
          lab.push_back(lab_frame_trace(movie.probe_traces[k], movie.dt, config.probes[k].x, geom));
        }
      }
      for (std::size_t n = 0; n < movie.times.size(); ++n) {
        out << movie.times[n];
        for (const auto& tr : movie.probe_traces) out << ',' << tr[n];
        for (const auto& tr : lab) {
          out << ',';
          if (std::isfinite(tr[n])) out << tr[n];
        }
        out << '\n';
      }
      manifest["outputs"].push_back("probes.csv");
    }
    {
      const std::string path = (fs::path(dir) / "modes.csv").string();
      auto out = open_output(path);
      out << "time";
      for (const char* side : {"bottom", "top"}) {
        for (int n = -movie.N; n <= movie.N; ++n) {
          out << ',' << side << "_re_" << n << ',' << side << "_im_" << n;
        }
      }
      out << '\n';
      for (std::size_t n = 0; n < movie.times.size(); ++n) {
        out << movie.times[n];
        for (const auto* modes : {&movie.modes_bottom, &movie.modes_top}) {
          for (const auto& v : (*modes)[n]) out << ',' << v.real() << ',' << v.imag();
        }
        out << '\n';
      }
      manifest["outputs"].push_back("modes.csv");
    }
    for (int step : dump_steps) {
      char name[32];
      std::snprintf(name, sizeof name, "field_%05d.vtk", step);
      const std::string path = (fs::path(dir) / name).string();
      const auto* field = movie.field_at(step);
      write_vtk(path, mesh, solver.dofmap(), *field, step * movie.dt);
      // self-check: every dump must parse back to the written values
      const VtkField back = read_vtk(path);
      bool same = back.points.size() == mesh.vertices().size() &&
                  back.cells.size() == mesh.elements().size();
      for (std::size_t i = 0; same && i < back.values.size(); ++i) {
        same = back.values[i] == (*field)(solver.dofmap().vertex_to_dof[i]);
      }
      if (!same) throw Error(ErrorCode::Io, "field dump self-check failed for " + path);
      manifest["outputs"].push_back(name);
    }
    if (config.oracle) {
      result.errors = compute_errors(movie, mesh, solver.dofmap(), config.oracle_layers(),
                                     config.pulse, config.oracle->error_times);
      json errs = json::array();
      for (const auto& e : result.errors) {
        errs.push_back({{"step", e.step}, {"time", e.time}, {"l2", e.l2}, {"h1", e.h1}});
      }
      manifest["errors"] = errs;
    }
    if (config.output.field_norms) {
      result.stability = stability_report(movie, trace, config.T);
      const auto& s = *result.stability;
      const std::string path = (fs::path(dir) / "norms.csv").string();
      auto out = open_output(path);
      out << "time,max_abs_w\n";
      for (std::size_t n = 0; n < s.step_max.size(); ++n) {
        out << movie.times[n] << ',' << s.step_max[n] << '\n';
      }
      manifest["outputs"].push_back("norms.csv");
      manifest["stability"] = {{"incident_peak", s.incident_peak},
                               {"max_field", s.max_field},
                               {"max_middle_half", s.max_middle_half},
                               {"max_last_quarter", s.max_last_quarter},
                               {"bounded", s.bounded()},
                               {"no_late_growth", s.no_late_growth()}};
    }
    manifest["complete"] = true;
    write_json(manifest_path, manifest);
  } catch (const std::exception& e) {
    manifest["complete"] = false;
    manifest["error"] = e.what();
    write_json(manifest_path, manifest);
    throw;
  }
  return result;
}

}  // namespace cqgrating
