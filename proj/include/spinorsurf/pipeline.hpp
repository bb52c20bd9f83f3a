#pragma once

#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spinorsurf/conformal.hpp"
#include "spinorsurf/energy.hpp"
#include "spinorsurf/geometry_out.hpp"
#include "spinorsurf/reduction_solver.hpp"

namespace spinorsurf {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitBlowUp = 3,
  kExitStagnation = 4,
  kExitPostcondition = 5,
};

/// Exit code for an exception escaping a pipeline stage.
int exit_code_for(const std::exception& e);

// ---------------------------------------------------------------------------
// Run configuration (JSON, schema version 1). Unknown keys are rejected.
//
// {
//   "version": 1,
//   "truncation": 16,            J >= 4
//   "grid_degree": 0,            0 selects the default
//   "Q": {...},                  see CurvatureField
//   "schedule": [3.0, 3.4, 3.7, 3.9, 3.97, 4.0],
//   "tolerances": {"inner": 1e-10, "stage": 1e-8, "final": 1e-10, "descent_switch": 1e-3},
//   "limits": {"max_inner": 60, "max_cg": 400, "descent_steps": 40, "max_newton": 40, "max_minres": 2000},
//   "blowup": {"fraction": 0.9, "spacings": 3, "stages": 2, "radii": [...]},
//   "init": {"type": "bubble", "center": [0, 0, 1], "scale": 0.3}
//         | {"type": "state", "path": "state.coef"}
//         | {"type": "random"},
//   "seed": 0,
//   "nodal": {"candidate_threshold": 0.5, "zero_tolerance": 1e-6},
//   "mesh": {"level": 4, "format": "obj", "edge_quadrature": 8, "period_tolerance": 1e-6},
//   "output_dir": "run"
// }
// ---------------------------------------------------------------------------

struct InitConfig {
  std::string type = "bubble";  // "bubble", "state", "random"
  std::optional<Eigen::Vector3d> center;  // default: a maximum of Q
  double scale = 0.3;
  std::string path;
};

struct MeshConfig {
  int level = 4;
  std::string format = "obj";  // "obj", "ply", "both"
  int edge_quadrature = 8;
  double period_tolerance = 1e-6;
};

struct RunConfig {
  int version = kConfigVersion;
  int truncation = 16;
  int grid_degree = 0;
  CurvatureField Q;
  SolverOptions solver;
  InitConfig init;
  NodalOptions nodal;
  MeshConfig mesh;
  std::string output_dir = "run";

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws ConfigError.
  void validate() const;
};

RunConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

struct SpectrumRow {
  int level = 0;
  double eigenvalue = 0.0;
  long long multiplicity = 0;
};

struct SpectrumReport {
  int dim = 2;
  int truncation = 0;
  std::vector<SpectrumRow> rows;  // levels ascending, + before -
  long long basis_size = 0;
  /// Only for dim = 2: max L2 residual of D eta - lambda eta over the basis
  /// and max deviation of the quadrature Gram matrix from the identity.
  double eigen_residual = 0.0;
  double gram_error = 0.0;
  bool validated = false;

  nlohmann::json to_json() const;
};

SpectrumReport run_spectrum(int truncation, int dim = 2);

struct BubbleReport {
  Bubble bubble;
  BubbleEnergy flat;
  int truncation = 0;
  double captured_fraction = 0.0;
  double loss = 0.0;
  double sphere_energy = 0.0;    // int |psi|^4 of the truncated transport
  double equation_residual = 0.0;  // L2 norm of D psi - Q(y) |psi|^2 psi
  double norm_law_error = 0.0;     // max |psi| deviation from the closed form on the grid

  nlohmann::json to_json() const;
};

BubbleReport run_bubble(const Bubble& b, int truncation);

struct SolveOutcome {
  int exit_code = kExitOk;
  std::string status;  // "ok", "blow-up", "stagnation", "postcondition", "config"
  nlohmann::json report;
  std::optional<SpectralSpinor> psi;
};

/// Hypothesis report, continuation, nodal analysis and Willmore energy.
/// Writes trace.csv, state.coef and report.json into cfg.output_dir.
SolveOutcome run_solve(const RunConfig& cfg, std::ostream* log = nullptr);

/// Re-runs every diagnostic on a stored state; writes diagnose.json.
SolveOutcome run_diagnose(const RunConfig& cfg, const std::string& state_path, std::ostream* log = nullptr);

struct ImmerseOptions {
  std::string out_path;              // mesh file; format from the extension unless cfg.mesh.format is "both"
  double residual_tolerance = 1e-8;  // the state must solve the equation to this E*-residual
};

/// Re-validates the state, reconstructs the immersion, writes the mesh(es)
/// and immersion.json next to the mesh.
SolveOutcome run_immerse(const RunConfig& cfg, const std::string& state_path, const ImmerseOptions& opts,
                         std::ostream* log = nullptr);

}  // namespace spinorsurf
