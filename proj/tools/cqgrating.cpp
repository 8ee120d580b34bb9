// Command line front end for the grating solver.
//
//   cqgrating solve <config.json|manifest.json> [--out DIR]
//   cqgrating preset <name> [--out DIR] [--print]
//   cqgrating convergence <config.json> --dts a,b,c [--time t] [--out DIR]
//   cqgrating validate <config.json>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "cqgrating/harness.hpp"

namespace {

using namespace cqgrating;

void print_summary(const RunResult& result) {
  const auto& m = result.manifest;
  std::cout << "steps: " << result.movie.n_steps << "  dt: " << result.movie.dt << '\n';
  std::cout << "contour radius: " << m["contour"]["radius"].get<double>()
            << "  solved frequencies: " << m["contour"]["solved"].get<int>() << '\n';
  std::cout << "max transmission residual: " << result.movie.max_residual << '\n';
  std::cout << "max imaginary residue: " << result.movie.max_imag_residue << '\n';
  for (const auto& e : result.errors) {
    std::cout << "t = " << e.time << "  L2 error " << e.l2 << "  H1 error " << e.h1 << '\n';
  }
  if (result.stability) {
    const auto& s = *result.stability;
    std::cout << "max |w| " << s.max_field << " (incident peak " << s.incident_peak
              << "), middle half " << s.max_middle_half << ", last quarter "
              << s.max_last_quarter << '\n';
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw Error(ErrorCode::InvalidConfig, "bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolution quadrature solver for periodic gratings"};
  app.require_subcommand(1);
  int workers = -1;
  app.add_option("--workers", workers, "frequency solves in parallel (0 = all cores)");

  std::string config_path, out_dir, preset_name, dts_text;
  double error_time = 1.5;
  bool print_only = false;

  auto* solve = app.add_subcommand("solve", "run a configuration or re-run a manifest");
  solve->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  solve->add_option("--out", out_dir, "output directory");

  auto* pre = app.add_subcommand("preset", "run a built-in experiment");
  pre->add_option("name", preset_name)->required()->check(CLI::IsMember(preset_names()));
  pre->add_option("--out", out_dir, "output directory");
  pre->add_flag("--print", print_only, "print the preset configuration and exit");

  auto* conv = app.add_subcommand("convergence", "time-step refinement against the layered oracle");
  conv->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  conv->add_option("--dts", dts_text, "comma separated time steps")->required();
  conv->add_option("--time", error_time, "evaluation time");
  conv->add_option("--out", out_dir, "directory for errors.csv");

  auto* val = app.add_subcommand("validate", "dry-run checks of a configuration");
  val->add_option("config", config_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve || *pre) {
      RunConfig config = *solve ? load_config(config_path) : preset(preset_name);
      if (print_only) {
        std::cout << std::setw(2) << preset_document(preset_name) << '\n';
        return 0;
      }
      if (workers >= 0) config.workers = workers;
      const RunResult result = run(config, out_dir);
      print_summary(result);
      std::cout << "outputs written to "
                << (out_dir.empty() ? config.output.directory : out_dir) << '\n';
      return 0;
    }
    if (*conv) {
      RunConfig config = load_config(config_path);
      if (workers >= 0) config.workers = workers;
      const ErrorTable table = convergence_study(config, parse_list(dts_text), error_time);
      write_error_table(std::cout, table);
      std::cout << "fitted slope L2 " << table.slope_l2() << "  H1 " << table.slope_h1() << '\n';
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(std::filesystem::path(out_dir) / "errors.csv");
        write_error_table(out, table);
      }
      return 0;
    }
    if (*val) {
      const RunConfig config = load_config(config_path);
      const ValidationReport report = validate(config);
      for (const auto& m : report.messages) std::cout << m << '\n';
      std::cout << (report.ok ? "valid" : "invalid") << '\n';
      return report.ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
