#pragma once

// Batch front end: JSON run configurations, experiment presets, on-disk
// artifacts (CSV traces, legacy VTK dumps, run manifest) and error norms
// against the layered oracle.

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cqgrating/cq_driver.hpp"
#include "cqgrating/frequency_solver.hpp"
#include "cqgrating/materials.hpp"
#include "cqgrating/mesh.hpp"
#include "cqgrating/oracle_layers.hpp"
#include "cqgrating/pulses.hpp"

namespace cqgrating {

struct RegionShape {
  enum class Kind { rect, disk };
  Kind kind = Kind::rect;
  int label = 0;
  std::array<double, 2> x{};  // rect extent
  std::array<double, 2> z{};
  std::array<double, 2> center{};  // disk
  double radius = 0.0;

  bool contains(double px, double pz) const;
};

struct MeshSpec {
  int nx = 0;
  int nz = 0;
  std::string file;
  std::vector<RegionShape> shapes;  // later shapes win
  int default_label = 0;
};

struct OutputSpec {
  std::string directory = "out";
  bool vtk = false;
  std::vector<double> dump_times;
  int dump_stride = 0;
  bool lab_frame = false;
  bool field_norms = false;
};

struct OracleSpec {
  double eps_minus = 1.0;
  double eps_plus = 4.0;
  double h_i = 0.5;
  std::vector<double> error_times{1.5};
};

struct RunConfig {
  std::string name;
  double L = 1.0;
  double H = 1.0;
  double angle_deg = 0.0;
  bool angle_from_horizontal = false;
  double c = 1.0;
  MeshSpec mesh;
  std::map<int, MaterialModel> materials;
  MaterialModel above = ConstantModel{};
  Pulse pulse = SinMPulse{};
  // Height at which the incident field equals f(t) (before the frame delay).
  double pulse_reference_height = 0.0;
  MultistepRule rule = MultistepRule::bdf2;
  double T = 1.0;
  int n_steps = 1;
  double cq_epsilon = 1e-14;
  bool half_contour = true;
  int N = 10;
  double eta = 1.0;
  double sigma_min = 0.0;  // parse_config defaults it to 0.1 / T
  double gamma0 = -1.0;
  int workers = 1;
  std::vector<Probe> probes;
  OutputSpec output;
  std::optional<OracleSpec> oracle;
  nlohmann::json source;  // document the config was parsed from

  double dt() const { return T / n_steps; }
  IncidentGeometry geometry() const;
  // Pulse whose samples give the incident trace on z = 0.
  Pulse trace_pulse() const;
  MaterialMap material_map() const;
  QuadMesh build_mesh() const;
  // Two-layer oracle matching the configured flat interface.
  TwoLayerConfig oracle_layers() const;
};

// Throws InvalidConfig (or Io for unreadable files) on any problem. A run
// manifest is accepted in place of a config.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

std::vector<std::string> preset_names();
nlohmann::json preset_document(const std::string& name);
RunConfig preset(const std::string& name);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> messages;
  int margin_violations = 0;
};
// Dry run: mesh invariants, materials, contour margins, causality.
ValidationReport validate(const RunConfig& config);

struct FieldNorms {
  double l2 = 0.0;
  double h1 = 0.0;
};
using ScalarField = std::function<double(double, double)>;
using GradientField = std::function<std::array<double, 2>(double, double)>;
// Errors of a nodal field against an exact function by 3x3 Gauss quadrature
// per element; h1 includes the L2 part.
FieldNorms error_norms(const QuadMesh& mesh, const DofMap& dofmap, const Eigen::VectorXd& nodal,
                       const ScalarField& exact, const GradientField& exact_gradient);

struct ErrorSample {
  int step = 0;
  double time = 0.0;
  double l2 = 0.0;
  double h1 = 0.0;
};
// Error of the stored fields against the two-layer solution at the steps
// nearest to `times`.
std::vector<ErrorSample> compute_errors(const FieldMovie& movie, const QuadMesh& mesh,
                                        const DofMap& dofmap, const TwoLayerConfig& layers,
                                        const Pulse& pulse, const std::vector<double>& times);

int nearest_step(double t, double dt);

struct ErrorRow {
  double dt = 0.0;
  double l2 = 0.0;
  double h1 = 0.0;
  double rate_l2 = 0.0;  // log2 of the error ratio to the previous row
  double rate_h1 = 0.0;
};
struct ErrorTable {
  double time = 0.0;
  std::vector<ErrorRow> rows;
  double slope_l2() const;
  double slope_h1() const;
};
// Least-squares slope of log(error) against log(dt).
double fitted_slope(const std::vector<double>& dts, const std::vector<double>& errors);

// One run per time step; the mesh and frequency operators are shared.
ErrorTable convergence_study(const RunConfig& config, const std::vector<double>& dts, double time);
void write_error_table(std::ostream& out, const ErrorTable& table);

struct StabilityReport {
  double incident_peak = 0.0;
  double max_field = 0.0;
  double max_middle_half = 0.0;
  double max_last_quarter = 0.0;
  std::vector<double> step_max;  // max |w_n| over the nodes

  bool bounded(double factor = 10.0) const { return max_field <= factor * incident_peak; }
  bool no_late_growth() const { return max_last_quarter <= max_middle_half; }
};
// Needs every nodal field stored.
StabilityReport stability_report(const FieldMovie& movie, const Pulse& trace_pulse, double T);

struct RunResult {
  FieldMovie movie;
  nlohmann::json manifest;
  std::vector<ErrorSample> errors;
  std::optional<StabilityReport> stability;
};
// Writes probes.csv, modes.csv, optional field dumps and manifest.json into
// output.directory (or out_dir when non-empty).
RunResult run(const RunConfig& config, const std::string& out_dir = "");

// Legacy VTK unstructured grid with one point scalar.
void write_vtk(const std::string& path, const QuadMesh& mesh, const DofMap& dofmap,
               const Eigen::VectorXd& nodal, double time);
// Parses a file written by write_vtk; throws ParseError on malformed input.
struct VtkField {
  std::vector<Vertex> points;
  std::vector<std::array<int, 4>> cells;
  std::vector<double> values;
};
VtkField read_vtk(const std::string& path);

}  // namespace cqgrating
