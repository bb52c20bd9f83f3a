#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spinorsurf/conformal.hpp"
#include "spinorsurf/energy.hpp"
#include "spinorsurf/errors.hpp"

namespace spinorsurf {

// ---------------------------------------------------------------------------
// Linear algebra on coefficient vectors with the real inner product
// Re(x^H y), under which every operator used below is self-adjoint.
// ---------------------------------------------------------------------------

using LinearMap = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

struct KrylovResult {
  Eigen::VectorXcd x;
  int iterations = 0;
  double residual = 0.0;  // preconditioned residual norm relative to the rhs
  bool converged = false;
};

/// Preconditioned conjugate gradients for a positive definite A.
KrylovResult conjugate_gradient(const LinearMap& A, const Eigen::VectorXcd& b, const Eigen::VectorXd& precond_diag,
                                double rel_tol, int max_iter);

/// Preconditioned MINRES for a symmetric, possibly indefinite or singular A.
/// The preconditioner is diag(precond_diag), which must be positive.
KrylovResult minres(const LinearMap& A, const Eigen::VectorXcd& b, const Eigen::VectorXd& precond_diag,
                    double rel_tol, int max_iter);

// ---------------------------------------------------------------------------
// Reduction to E+.
// ---------------------------------------------------------------------------

struct ReduceOptions {
  double tol = 1e-10;  // E*-norm of L_p'(u + h) restricted to E-
  int max_iter = 60;
  int max_cg = 400;
};

struct ReductionResult {
  SpectralSpinor u;
  SpectralSpinor h;
  double I = 0.0;           // I_p(u) = L_p(u + h)
  double A = 0.0;           // int Q |u + h|^p
  SpectralSpinor gradient;  // H^{1/2} gradient of I_p at u (lies in E+)
  SpectralSpinor residual;  // dual residual of L_p' at u + h
  double minus_residual = 0.0;
  int iterations = 0;
  int cg_iterations = 0;

  SpectralSpinor psi() const { return u + h; }
};

/// Maximizer h of v -> L_p(u + v) over E- by Newton-CG with Armijo steps.
/// `guess` warm-starts the E- component.
ReductionResult reduce(const EnergyFunctional& energy, const SpectralSpinor& u, double p,
                       const SpectralSpinor* guess = nullptr, const ReduceOptions& opts = {});

struct NehariState {
  SpectralSpinor u;   // t(u_in) u_in, on the Nehari set
  double t = 0.0;     // scaling of the input direction
  ReductionResult reduction;
  double I = 0.0;
  double F = 0.0;                  // ((2p / (p - 2)) I)^{(p-2)/p}
  double second_derivative = 0.0;  // d^2/ds^2 I(s u) at s = 1
  int evaluations = 0;
};

/// Unique t > 0 with I_p'(t u)[u] = 0, found by bracketing and a TOMS 748
/// root search. Throws ConvergenceError if no sign change is found.
NehariState nehari_project(const EnergyFunctional& energy, const SpectralSpinor& u, double p,
                           const SpectralSpinor* guess = nullptr, const ReduceOptions& opts = {});

/// F_p(u) from the Nehari value.
double F_from_I(double I, double p);

/// max over v in E- of the Rayleigh quotient R_p(u + v), computed directly
/// by preconditioned ascent. Independent of the reduction machinery.
struct RayleighMax {
  double value = 0.0;
  SpectralSpinor v;
  int iterations = 0;
};
RayleighMax rayleigh_max(const EnergyFunctional& energy, const SpectralSpinor& u, double p, double tol = 1e-12,
                         int max_iter = 500);

struct TauEstimate {
  double value = 0.0;  // min over samples (an upper bound for tau_p)
  std::vector<double> samples;
  std::size_t argmin = 0;
};

/// Upper estimate of tau_p from the E+ parts of the given samples.
TauEstimate estimate_tau(const EnergyFunctional& energy, double p, const std::vector<SpectralSpinor>& samples,
                         const ReduceOptions& opts = {});

// ---------------------------------------------------------------------------
// Concentration and barycenter.
// ---------------------------------------------------------------------------

struct ConcentrationProfile {
  std::vector<double> radii;
  std::vector<double> theta;  // sup over centers of int_{B_r(a)} |psi|^p
  std::vector<Eigen::Vector3d> centers;
  double total = 0.0;         // int |psi|^p
};

/// Theta(r) with candidate centers at the `candidates` nodes of largest
/// density (all nodes when candidates <= 0).
ConcentrationProfile concentration_profile(const QuadratureGrid& grid, const GridSpinor& psi, double p,
                                           const std::vector<double>& radii, int candidates = 64);
ConcentrationProfile concentration_profile(const EnergyFunctional& energy, const SpectralSpinor& psi, double p,
                                           const std::vector<double>& radii, int candidates = 64);

/// Upsilon(psi) = int zeta(S_0 xi) |psi|^4 / int |psi|^4 with zeta the radial
/// clamp at R0 and S_0 the stereographic chart centred at `chart_base`.
Eigen::Vector2d barycenter(const QuadratureGrid& grid, const GridSpinor& psi, const Eigen::Vector3d& chart_base,
                           double R0);
Eigen::Vector2d clamp_radial(const Eigen::Vector2d& x, double R0);

// ---------------------------------------------------------------------------
// Continuation solver.
// ---------------------------------------------------------------------------

/// Raised when the monitor sees the |psi|^p mass collapse into a small ball.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, Eigen::Vector3d point, double fraction, double p)
      : Error(what), point_(point), fraction_(fraction), p_(p) {}
  const Eigen::Vector3d& point() const { return point_; }
  double fraction() const { return fraction_; }
  double p() const { return p_; }

 private:
  Eigen::Vector3d point_;
  double fraction_;
  double p_;
};

/// Raised when an outer iteration stops making progress.
class StagnationError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

struct SolverOptions {
  std::vector<double> schedule{3.0, 3.4, 3.7, 3.9, 3.97, 4.0};
  ReduceOptions inner;
  double tol_stage = 1e-8;     // E*-residual accepted at intermediate p
  double tol_final = 1e-10;    // E*-residual required at p = 4
  int descent_steps = 40;      // projected-gradient steps on the Nehari set per stage
  double descent_switch = 1e-3;  // hand over to Newton below this residual
  int max_newton = 40;
  int max_minres = 2000;
  double blowup_fraction = 0.9;
  double blowup_spacings = 3.0;
  int blowup_stages = 2;
  double min_capture = 0.99;   // bubble initialization must keep this L2 fraction
  double barycenter_radius = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> radii{0.1, 0.2, 0.4, 0.8, 1.6, 3.141592653589793};

  void validate() const;
  nlohmann::json to_json() const;
};

struct TraceRecord {
  int stage = 0;
  double p = 0.0;
  int iter = 0;
  std::string phase;  // "init", "descent", "newton"
  double I = 0.0;
  double residual = 0.0;
  double nehari_defect = 0.0;
  double theta_star = 0.0;  // Theta(r*) / int |psi|^p
  Eigen::Vector2d upsilon = Eigen::Vector2d::Zero();
  double min_abs = 0.0;
};

struct StageSummary {
  double p = 0.0;
  double I = 0.0;
  double residual = 0.0;
  double A = 0.0;             // int Q |psi|^p
  double nehari_defect = 0.0;
  ConcentrationProfile profile;
  double theta_star = 0.0;
  Eigen::Vector3d concentration_center = Eigen::Vector3d::Zero();
  Eigen::Vector2d upsilon = Eigen::Vector2d::Zero();
  double min_abs = 0.0;
  int descent_iterations = 0;
  int newton_iterations = 0;
  bool converged = false;
};

struct SolverTrace {
  nlohmann::json config;
  std::vector<TraceRecord> records;
  std::vector<StageSummary> stages;
  double r_star = 0.0;

  /// CSV with a leading "# config: {...}" line; doubles at 17 digits.
  void write_csv(std::ostream& out) const;
  void save_csv(const std::string& path) const;
  nlohmann::json stages_json() const;
};

struct SolverInit {
  std::optional<Bubble> bubble;
  std::optional<SpectralSpinor> state;
};

struct SolveResult {
  SpectralSpinor psi;
  SolverTrace trace;
  double residual = 0.0;
  double energy = 0.0;  // int Q |psi|^4
  double I = 0.0;
  double window_low = 0.0;   // 4 pi / Q_max
  double window_high = 0.0;  // 8 pi / Q_max
  bool in_window = false;
};

/// Default initial bubble: centre at a maximum of Q, scale 0.3.
Bubble default_init_bubble(const CurvatureField& Q, double scale = 0.3);

/// Continuation p_n -> 4 with Nehari descent and Newton-MINRES polishing.
/// Progress lines go to `log` when it is non-null. Throws BlowUpError,
/// StagnationError, or DomainError for an unusable initialization; the
/// partial trace is written into *trace_out when provided.
SolveResult solve_continuation(const EnergyFunctional& energy, const SolverInit& init, const SolverOptions& opts,
                               std::ostream* log = nullptr, SolverTrace* trace_out = nullptr);

}  // namespace spinorsurf
