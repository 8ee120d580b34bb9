// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cqgrating/harness.hpp"

using namespace cqgrating;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

std::string rates(const ErrorTable& t, bool h1) {
  std::string out;
  for (std::size_t k = 1; k < t.rows.size(); ++k) {
    out += (k > 1 ? "/" : "") + fmt("%.2f", h1 ? t.rows[k].rate_h1 : t.rows[k].rate_l2);
  }
  return out;
}

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

// Time-step ladder against the two-layer solution at t = 1.5.
Outcome criterion1() {
  RunConfig cfg = preset("convergence41");
  cfg.workers = 0;
  const std::vector<double> dts = {cfg.T / 64, cfg.T / 128, cfg.T / 256, cfg.T / 512};
  const ErrorTable bdf2 = convergence_study(cfg, dts, 1.5);
  cfg.rule = MultistepRule::backward_euler;
  const ErrorTable be = convergence_study(cfg, dts, 1.5);
  const bool ok = in_band(bdf2.slope_l2(), 1.7, 2.3) && in_band(bdf2.slope_h1(), 1.7, 2.3) &&
                  in_band(be.slope_l2(), 0.8, 1.2);
  std::ostringstream d;
  d << "BDF2 slope L2 " << fmt("%.3f", bdf2.slope_l2()) << " (rates " << rates(bdf2, false)
    << "), H1 " << fmt("%.3f", bdf2.slope_h1()) << " (rates " << rates(bdf2, true)
    << "); BE slope L2 " << fmt("%.3f", be.slope_l2()) << " (rates " << rates(be, false)
    << "); BE H1 " << fmt("%.3f", be.slope_h1()) << " (rates " << rates(be, true)
    << ", errors " << fmt("%.3e", be.rows.front().h1) << " to " << fmt("%.3e", be.rows.back().h1)
    << ", not gated)";
  return {ok, d.str()};
}

// Reflected and transmitted peaks at the probes of the finest run.
Outcome criterion2() {
  RunConfig cfg = preset("convergence41");
  cfg.workers = 0;
  const fs::path dir = fs::temp_directory_path() / "cqgrating_acceptance_c2";
  const RunResult result = run(cfg, dir.string());
  const auto coeffs = reflection_transmission_coeffs(cfg.oracle_layers());
  const FieldMovie& m = result.movie;
  // probe 0 at z = 0.05: the incident pulse has left by t = 0.9, the
  // reflection arrives at t = 0.95
  double reflected = 0.0, transmitted = 0.0;
  for (int n = 0; n <= m.n_steps; ++n) {
    if (m.times[n] > 0.9) reflected = std::max(reflected, std::abs(m.probe_traces[0][n]));
    transmitted = std::max(transmitted, std::abs(m.probe_traces[1][n]));
  }
  const double er = std::abs(reflected - coeffs.r) / coeffs.r;
  const double et = std::abs(transmitted - coeffs.t) / coeffs.t;
  std::ostringstream d;
  d << "reflected peak " << fmt("%.5f", reflected) << " vs r " << fmt("%.5f", coeffs.r) << " ("
    << fmt("%.2e", er) << "), transmitted peak " << fmt("%.5f", transmitted) << " vs t "
    << fmt("%.5f", coeffs.t) << " (" << fmt("%.2e", et) << ")";
  return {er <= 0.02 && et <= 0.02, d.str()};
}

// Frequency solves on the flat interface against the layered oracle.
Outcome criterion3() {
  const CqPlan contour = plan(MultistepRule::bdf2, 0.2, 19);
  std::vector<Complex> samples;
  for (int l = 0; l < 10; ++l) samples.push_back(contour.frequencies[static_cast<std::size_t>(l)]);
  const MaterialMap mats({{0, ConstantModel{}}, {1, ConstantModel{{0.25, 0.0}}}},
                         ConstantModel{{0.25, 0.0}});
  const auto geom = IncidentGeometry::from_degrees(90.0, true, 1.0, 1.0);
  std::vector<FrequencySolver> solvers;
  for (const int n : {16, 32, 64}) {
    solvers.emplace_back(
        QuadMesh::build_structured(1.0, 1.0, n, n, [](double, double z) { return z > 0.5 ? 1 : 0; }),
        mats, geom, 1.0, 2);
  }
  double worst_ratio = 1e300;
  double worst_error = 0.0;
  for (const Complex s : samples) {
    const LayeredSolution exact =
        layered_frequency_oracle({Layer{1.0, 0.0}, Layer{0.25, 0.0}}, s, 1.0, 0.0, 0.5);
    std::vector<double> errors;
    for (const auto& solver : solvers) {
      const FrequencySolution sol = solver.solve(s, 1.0);
      const Eigen::VectorXd re = sol.w_hat.real();
      const Eigen::VectorXd im = sol.w_hat.imag();
      auto grad_of = [&](bool real_part) {
        return [&, real_part](double, double z) {
          const Complex g = exact.field_dz(z);
          return std::array<double, 2>{0.0, real_part ? g.real() : g.imag()};
        };
      };
      const auto& mesh = solver.mesh();
      const auto& dofs = solver.dofmap();
      const FieldNorms er = error_norms(mesh, dofs, re,
                                        [&](double, double z) { return exact.field(z).real(); },
                                        grad_of(true));
      const FieldNorms ei = error_norms(mesh, dofs, im,
                                        [&](double, double z) { return exact.field(z).imag(); },
                                        grad_of(false));
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(re.size());
      const FieldNorms nr = error_norms(mesh, dofs, zero,
                                        [&](double, double z) { return exact.field(z).real(); },
                                        grad_of(true));
      const FieldNorms ni = error_norms(mesh, dofs, zero,
                                        [&](double, double z) { return exact.field(z).imag(); },
                                        grad_of(false));
      errors.push_back(std::hypot(er.l2, ei.l2) / std::hypot(nr.l2, ni.l2));
    }
    worst_error = std::max(worst_error, errors.back());
    for (std::size_t k = 1; k < errors.size(); ++k) {
      worst_ratio = std::min(worst_ratio, errors[k - 1] / errors[k]);
    }
  }
  std::ostringstream d;
  d << samples.size() << " contour points with |s| up to "
    << fmt("%.2f", std::abs(samples.back())) << ", meshes 16/32/64: smallest error ratio "
    << fmt("%.3f", worst_ratio) << ", largest relative L2 error on the finest mesh "
    << fmt("%.2e", worst_error);
  return {worst_ratio >= 3.5, d.str()};
}

// Margins of the dispersive presets along their planned contours.
Outcome criterion4() {
  std::ostringstream d;
  int total = 0;
  for (const std::string name : {"drude421", "sellmeier422"}) {
    const RunConfig cfg = preset(name);
    const double d1 = cfg.geometry().d1;
    const CqPlan contour = plan(cfg.rule, cfg.dt(), cfg.n_steps, cfg.cq_epsilon, false);
    std::vector<std::pair<std::string, MaterialModel>> models;
    for (const auto& [label, model] : cfg.materials) models.emplace_back("region " + std::to_string(label), model);
    models.emplace_back("above", cfg.above);
    for (const auto& [label, model] : models) {
      const double bound = analytic_margin_bound(model, d1);
      if (std::isnan(bound)) continue;
      int violations = 0;
      double lowest = 1e300;
      for (const Complex s : contour.frequencies) {
        const double m = assumption1_margin(model, s, d1);
        lowest = std::min(lowest, m);
        if (m < bound - 1e-12 * std::abs(bound)) ++violations;
      }
      total += violations;
      d << name << " " << label << ": " << violations << " of " << contour.size()
        << " below bound " << fmt("%.5f", bound) << " (lowest " << fmt("%.5f", lowest) << "); ";
    }
  }
  d << "total violations " << total;
  return {total == 0, d.str()};
}

// Long runs of the dispersive presets with every step stored.
Outcome criterion5() {
  std::ostringstream d;
  bool ok = true;
  for (const std::string name : {"drude421", "sellmeier422"}) {
    RunConfig cfg = preset(name);
    cfg.workers = 0;
    cfg.output.vtk = false;
    cfg.output.field_norms = true;
    const fs::path dir = fs::temp_directory_path() / ("cqgrating_acceptance_" + name);
    const RunResult result = run(cfg, dir.string());
    const auto& s = *result.stability;
    const bool pass = s.bounded(10.0) && s.no_late_growth();
    ok = ok && pass;
    d << name << ": max " << fmt("%.4f", s.max_field) << " vs incident peak "
      << fmt("%.4f", s.incident_peak) << ", middle half " << fmt("%.4f", s.max_middle_half)
      << ", last quarter " << fmt("%.4f", s.max_last_quarter)
      << (name == std::string("drude421") ? "; " : "");
  }
  return {ok, d.str()};
}

// Contour transform, difference stencils and mode-zero transparency.
Outcome criterion6() {
  const int M = 511;
  const CqPlan contour = plan(MultistepRule::bdf2, 4.0 / 512, M);
  std::mt19937 rng(42);
  std::normal_distribution<double> g;
  std::vector<Complex> x(M + 1);
  double peak = 0.0;
  for (auto& v : x) {
    v = {g(rng), g(rng)};
    peak = std::max(peak, std::abs(v));
  }
  ScaledDft dft(M + 1, contour.radius);
  const auto back = dft.inverse(dft.forward(x));
  double roundtrip = 0.0;
  for (int n = 0; n <= M; ++n) roundtrip = std::max(roundtrip, std::abs(back[n] - x[n]));
  roundtrip /= peak;

  const SinMPulse pulse{6, 4.0, 0.25};
  double slopes[2][2] = {};
  for (const auto rule : {MultistepRule::backward_euler, MultistepRule::bdf2}) {
    std::vector<double> dts, stencil, contour_errors;
    for (const int steps : {100, 200, 400, 800}) {
      const double dt = 2.0 / steps;
      std::vector<double> samples(static_cast<std::size_t>(steps + 1));
      for (int n = 0; n <= steps; ++n) samples[n] = eval_pulse(pulse, n * dt);
      const auto a = discrete_time_derivative(samples, rule, dt);
      const auto b = cq_apply(plan(rule, dt, steps), samples, [](Complex s) { return s; });
      double ea = 0.0, eb = 0.0;
      for (int n = 0; n <= steps; ++n) {
        const double exact = eval_pulse_derivative(pulse, n * dt);
        ea = std::max(ea, std::abs(a[n] - exact));
        eb = std::max(eb, std::abs(b[n] - exact));
      }
      dts.push_back(dt);
      stencil.push_back(ea);
      contour_errors.push_back(eb);
    }
    const int k = rule == MultistepRule::bdf2;
    slopes[k][0] = fitted_slope(dts, stencil);
    slopes[k][1] = fitted_slope(dts, contour_errors);
  }
  bool slopes_ok = true;
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 2; ++j) slopes_ok = slopes_ok && std::abs(slopes[k][j] - (k + 1)) <= 0.3;
  }

  double transparency = 0.0;
  for (const Complex s : contour.frequencies) {
    const Complex kappa = kappa_transmitted(s, 1.0, 0.0, 1.0, 0, 1.0);
    transparency = std::max(transparency, std::abs(reflection_multiplier(kappa, s, 1.0, 1.0)));
  }
  std::ostringstream d;
  d << "round trip " << fmt("%.2e", roundtrip) << " at M = 511; derivative slopes BE "
    << fmt("%.3f", slopes[0][0]) << "/" << fmt("%.3f", slopes[0][1]) << ", BDF2 "
    << fmt("%.3f", slopes[1][0]) << "/" << fmt("%.3f", slopes[1][1])
    << " (stencil/contour); mode-0 multiplier max " << fmt("%.1e", transparency);
  return {roundtrip <= 1e-10 && slopes_ok && transparency <= 1e-14, d.str()};
}

// Fourier Gram matrices, mesh round trips and discrete coercivity.
Outcome criterion7() {
  double gram = 0.0;
  bool roundtrip = true;
  int samples = 0, violations = 0;
  std::mt19937 rng(17);
  std::normal_distribution<double> g;
  for (const auto& name : preset_names()) {
    const RunConfig cfg = preset(name);
    const QuadMesh mesh = cfg.build_mesh();
    const DofMap dofs = DofMap::build(mesh);
    const CellOperators ops = CellOperators::build(mesh, dofs, cfg.N);
    const int m = 2 * cfg.N + 1;
    for (const auto* tc : {&ops.trace_bottom, &ops.trace_top}) {
      const Eigen::MatrixXcd dev = tc->gram - cfg.L * Eigen::MatrixXcd::Identity(m, m);
      gram = std::max(gram, dev.cwiseAbs().maxCoeff() / cfg.L);
    }

    std::stringstream first;
    write_mesh(first, mesh);
    const std::string text = first.str();
    const QuadMesh back = read_mesh(first);
    std::stringstream second;
    write_mesh(second, back);
    roundtrip = roundtrip && second.str() == text;
    for (std::size_t e = 0; e < mesh.elements().size(); ++e) {
      roundtrip = roundtrip && back.elements()[e].v == mesh.elements()[e].v &&
                  back.elements()[e].region == mesh.elements()[e].region;
    }

    // Re(conj(s) v^H A_vol v) >= sigma min(1, gamma0) (v^H K v + |s|^2/c^2 v^H M v)
    const MaterialMap mats = cfg.material_map();
    const auto geom = cfg.geometry();
    const double gamma0 = mats.default_gamma0(geom.d1);
    const CqPlan contour = plan(cfg.rule, cfg.dt(), cfg.n_steps, cfg.cq_epsilon, false);
    std::uniform_int_distribution<int> pick(0, contour.size() - 1);
    const ComplexSparse K = ops.stiffness.cast<Complex>();
    const ComplexSparse C = ops.convection.cast<Complex>();
    const ComplexSparse M = ops.mass.cast<Complex>();
    for (int k = 0; k < 20; ++k) {
      const Complex s = contour.frequencies[static_cast<std::size_t>(pick(rng))];
      const Complex sc = s / geom.c;
      Eigen::VectorXcd v(ops.n_dofs);
      for (int i = 0; i < v.size(); ++i) v(i) = {g(rng), g(rng)};
      Eigen::VectorXcd Av = K * v + 2.0 * sc * geom.d1 * (C * v);
      for (const auto& [label, mass] : ops.mass_by_region) {
        const Complex w = sc * sc * (eval_bhat(mats.region(label), s) - geom.d1 * geom.d1);
        Av += w * (mass.cast<Complex>() * v);
      }
      const double lhs = (std::conj(s) * v.dot(Av)).real();
      const double vk = v.dot(K * v).real();
      const double vm = v.dot(M * v).real();
      const double rhs = s.real() * std::min(1.0, gamma0) * (vk + std::norm(sc) * vm);
      ++samples;
      if (lhs < rhs - 1e-10 * std::abs(rhs)) ++violations;
    }
  }
  std::ostringstream d;
  d << "Gram deviation " << fmt("%.1e", gram) << " (relative to L); mesh round trips "
    << (roundtrip ? "identical" : "DIFFER") << "; coercivity violations " << violations << " of "
    << samples;
  return {gram <= 1e-13 && roundtrip && violations == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3,
                                                          criterion4, criterion5, criterion6,
                                                          criterion7};
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu: %s  %s [%.0f s]\n", k + 1, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
