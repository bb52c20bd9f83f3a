#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinorsurf/pipeline.hpp"

using namespace spinorsurf;

namespace {

void print_spectrum(const SpectrumReport& rep) {
  std::printf("%6s %10s %14s\n", "level", "eigenvalue", "multiplicity");
  for (const auto& r : rep.rows) std::printf("%6d %10g %14lld\n", r.level, r.eigenvalue, r.multiplicity);
  std::printf("basis size %lld\n", rep.basis_size);
  if (rep.validated) {
    std::printf("eigen residual %.3e\ngram error %.3e\n", rep.eigen_residual, rep.gram_error);
  }
}

void print_bubble(const BubbleReport& rep) {
  std::printf("flat energy         %.12g (closed form %.12g, tail %.2e)\n", rep.flat.value, rep.flat.analytic,
              rep.flat.tail_estimate);
  if (rep.bubble.dim == 2) {
    std::printf("captured L2 mass    %.12g (loss %.2e at J = %d)\n", rep.captured_fraction, rep.loss, rep.truncation);
    std::printf("sphere energy       %.12g\n", rep.sphere_energy);
    std::printf("equation residual   %.3e\n", rep.equation_residual);
    std::printf("norm law error      %.3e\n", rep.norm_law_error);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral solver for the critical nonlinear Dirac equation on S^2 and the surfaces it encodes"};
  app.require_subcommand(1);

  int spec_J = 2;
  int spec_dim = 2;
  std::string spec_json;
  auto* spectrum = app.add_subcommand("spectrum", "Dirac spectrum on S^m and basis validation");
  spectrum->add_option("-J,--truncation", spec_J, "highest level j")->capture_default_str();
  spectrum->add_option("-m,--dim", spec_dim, "sphere dimension")->capture_default_str();
  spectrum->add_option("--json", spec_json, "also write the table as JSON");

  std::vector<double> center{0.0, 0.0, 1.0};
  double scale = 1.0;
  double q_center = 1.0;
  int bubble_J = 16;
  int bubble_dim = 2;
  std::string bubble_json;
  auto* bubble = app.add_subcommand("bubble", "Bubble energies and transport to S^2");
  bubble->add_option("--center", center, "centre y on S^2")->expected(3)->capture_default_str();
  bubble->add_option("--scale", scale, "scale rho > 0")->capture_default_str();
  bubble->add_option("--q", q_center, "Q(y) > 0")->capture_default_str();
  bubble->add_option("-J,--truncation", bubble_J, "truncation for the transport")->capture_default_str();
  bubble->add_option("-m,--dim", bubble_dim, "flat dimension (2 or 3)")->capture_default_str();
  bubble->add_option("--json", bubble_json, "also write the report as JSON");

  std::string config_path;
  std::string output_dir;
  std::string state_path;
  std::string mesh_path;
  int level = -1;
  std::string format;

  auto* solve = app.add_subcommand("solve", "Hypothesis check, continuation solve and diagnostics");
  solve->add_option("-c,--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);
  solve->add_option("-o,--output-dir", output_dir, "override output_dir");

  auto* diagnose = app.add_subcommand("diagnose", "Re-run diagnostics on a state file");
  diagnose->add_option("-c,--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);
  diagnose->add_option("-s,--state", state_path, "coefficient file")->required()->check(CLI::ExistingFile);
  diagnose->add_option("-o,--output-dir", output_dir, "override output_dir");

  auto* immerse = app.add_subcommand("immerse", "Reconstruct and export the immersed surface");
  immerse->add_option("-c,--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);
  immerse->add_option("-s,--state", state_path, "coefficient file")->required()->check(CLI::ExistingFile);
  immerse->add_option("--out", mesh_path, "mesh path (.obj or .ply)")->required();
  immerse->add_option("--level", level, "icosphere level (default from config)");
  immerse->add_option("--format", format, "obj, ply or both (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors count as configuration errors; --help exits 0.
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*spectrum) {
      const SpectrumReport rep = run_spectrum(spec_J, spec_dim);
      print_spectrum(rep);
      if (!spec_json.empty()) {
        std::ofstream out(spec_json);
        out << rep.to_json().dump(2) << "\n";
      }
      return kExitOk;
    }
    if (*bubble) {
      if (!(scale > 0.0) || !(q_center > 0.0)) throw ConfigError("scale and Q(y) must be positive");
      const Eigen::Vector3d y(center[0], center[1], center[2]);
      if (!(y.norm() > 0.0)) throw ConfigError("centre must be nonzero");
      const BubbleReport rep = run_bubble(Bubble::make(y.normalized(), scale, q_center, bubble_dim), bubble_J);
      print_bubble(rep);
      if (!bubble_json.empty()) {
        std::ofstream out(bubble_json);
        out << rep.to_json().dump(2) << "\n";
      }
      return kExitOk;
    }

    RunConfig cfg = load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (level >= 0) cfg.mesh.level = level;
    if (!format.empty()) cfg.mesh.format = format;
    cfg.validate();

    SolveOutcome out;
    if (*solve) {
      out = run_solve(cfg, &std::cerr);
    } else if (*diagnose) {
      out = run_diagnose(cfg, state_path, &std::cerr);
    } else {
      out = run_immerse(cfg, state_path, {mesh_path}, &std::cerr);
    }
    std::cerr << "status: " << out.status << " (exit " << out.exit_code << ")\n";
    return out.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
