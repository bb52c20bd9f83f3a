#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spinorsurf/spectral_basis.hpp"

namespace spinorsurf {

/// Real orthonormal spherical harmonic (l, m) at a unit vector. m > 0 uses
/// cos(m phi), m < 0 uses sin(|m| phi), both scaled by sqrt 2.
double real_harmonic(int l, int m, const Eigen::Vector3d& x);

/// Prescribed curvature Q on S^2.
///
/// Families:
///   constant    Q = c
///   polynomial  Q = c + b.x + x^T A x (A symmetric), x the ambient point.
///               Stored as "affine" when A = 0 and "quadratic" otherwise.
///   harmonic    Q = sum c_lm Y_lm (real orthonormal harmonics)
/// JSON: {"family": "constant", "value": c}
///       {"family": "quadratic", "c": 1, "b": [0,0,0], "A": [[0,0,0],[0,0,0],[0,0,0.3]]}
///       {"family": "affine", "c": 1, "b": [0,0,0.2]}
///       {"family": "harmonic", "terms": [{"l": 0, "m": 0, "value": 3.5}, ...]}
/// Any family accepts an optional "scale" multiplier.
class CurvatureField {
 public:
  enum class Family { constant, polynomial, harmonic };

  struct HarmonicTerm {
    int l = 0;
    int m = 0;
    double value = 0.0;
  };

  CurvatureField() = default;

  static CurvatureField constant(double c);
  static CurvatureField polynomial(double c, const Eigen::Vector3d& b, const Eigen::Matrix3d& A);
  static CurvatureField harmonic(std::vector<HarmonicTerm> terms);
  static CurvatureField from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  Family family() const { return family_; }
  std::string family_name() const;
  /// Non-constant affine polynomial Q = c + b.x.
  bool is_affine() const;
  bool is_constant() const;
  /// Spherical-harmonic degree of Q (enters the de-aliasing requirement).
  int degree() const;

  double value(const Eigen::Vector3d& x) const;
  /// Tangential gradient (ambient components).
  Eigen::Vector3d gradient(const Eigen::Vector3d& x) const;
  /// Riemannian Hessian as a symmetric ambient 3x3 acting on the tangent plane.
  Eigen::Matrix3d hessian(const Eigen::Vector3d& x) const;

  Eigen::VectorXd sample(const QuadratureGrid& grid) const;

  /// int_{S^2} Q dvol.
  double integral() const;
  CurvatureField scaled(double s) const;
  /// Copy with int Q dvol = 1.
  CurvatureField normalized() const;

  /// Extremal values estimated from a fine grid refined by Newton steps.
  double max_value() const;
  double min_value() const;

 private:
  Family family_ = Family::constant;
  double c_ = 1.0;
  Eigen::Vector3d b_ = Eigen::Vector3d::Zero();
  Eigen::Matrix3d A_ = Eigen::Matrix3d::Zero();
  std::vector<HarmonicTerm> terms_;
  double scale_ = 1.0;

  double ambient_value(const Eigen::Vector3d& y) const;
  mutable std::optional<std::pair<double, double>> extrema_;
};

struct CriticalPoint {
  Eigen::Vector3d x;
  double value = 0.0;
  Eigen::Vector2d hessian_eigenvalues = Eigen::Vector2d::Zero();
  std::string kind;  // "max", "min", "saddle", "degenerate"
  int merged = 1;    // number of Newton limits collapsed into this entry
};

struct HypothesisReport {
  std::string family;
  std::string classification;  // "constant", "affine-obstruction", "generic"
  double q_max = 0.0;
  double q_min = 0.0;
  double half_q_max = 0.0;     // 2^{-1/(m-1)} Q_max with m = 2
  double d_lower = 0.0;        // max(2^{-1/(m-1)} Q_max, Q_min)
  double d_upper = 0.0;        // Q_max
  bool d_interval_nonempty = false;
  /// Sub-interval of d for which every critical point with value in [d, Q_max)
  /// has a positive definite Hessian.
  double admissible_lower = 0.0;
  bool admissible_nonempty = false;
  std::vector<CriticalPoint> critical_points;
  std::vector<CriticalPoint> maxima;
  bool maxima_nondegenerate = false;
  bool search_converged = true;
  std::string topological_clauses = "not checked";
  std::string note;

  nlohmann::json to_json() const;
};

/// Critical points by multi-start Riemannian Newton, classification by the
/// tangential Hessian, and the analytic parts of the hypothesis on Q.
HypothesisReport check_Q_hypothesis(const CurvatureField& Q, int starts = 400);

/// Random coefficients: complex Gaussian scaled by |lambda|^{-decay}.
SpectralSpinor random_spinor(int truncation, std::mt19937_64& rng, double decay = 1.0);

struct EnergyReport {
  double value = 0.0;     // L_p
  double A = 0.0;         // int Q |psi|^p
  double plus_norm2 = 0.0;
  double minus_norm2 = 0.0;
  SpectralSpinor gradient;  // H^{1/2} Riesz representative of L_p'
  SpectralSpinor residual;  // dual residual lambda a - N (coefficients of L_p')
  double dual_norm = 0.0;   // ||L_p'||_{E*} on the truncated space
};

struct RayleighReport {
  double value = 0.0;
  double A = 0.0;
  SpectralSpinor gradient;  // H^{1/2} Riesz representative of R_p'
};

/// Grid data of the second variation of (1/p) int Q |psi|^p at a fixed psi.
struct Linearization {
  GridSpinor psi;
  Eigen::VectorXd w1;  // Q |psi|^{p-2}
  Eigen::VectorXd w2;  // (p-2) Q |psi|^{p-4}, zero where psi = 0
};

/// L_p(psi) = 1/2 int (D psi, psi) - 1/p int Q |psi|^p on a truncated space.
class EnergyFunctional {
 public:
  /// grid_degree <= 0 selects 4 (J + 1) + max(2, deg Q).
  EnergyFunctional(int truncation, CurvatureField Q, int grid_degree = 0);

  static int default_grid_degree(int truncation, const CurvatureField& Q);

  int truncation() const { return transform_.truncation(); }
  const CurvatureField& Q() const { return Q_; }
  const SpectralTransform& transform() const { return transform_; }
  const QuadratureGrid& grid() const { return transform_.grid(); }
  const Eigen::VectorXd& q_nodes() const { return q_; }
  const Eigen::VectorXd& lambda() const { return lambda_; }

  /// Throws DomainError for p outside (2, 4] and AliasingError if the grid
  /// cannot integrate the nonlinearity at this p.
  void check_exponent(double p) const;

  double A(const SpectralSpinor& psi, double p) const;
  double A(const GridSpinor& values, double p) const;
  /// Coefficients of the projection of Q |psi|^{p-2} psi.
  SpectralSpinor nonlinear_term(const SpectralSpinor& psi, double p) const;

  EnergyReport eval(const SpectralSpinor& psi, double p) const;
  double value(const SpectralSpinor& psi, double p) const;
  RayleighReport rayleigh(const SpectralSpinor& psi, double p) const;

  Linearization linearize(const SpectralSpinor& psi, double p) const;
  /// Coefficients of the second variation of the nonlinear part applied to phi.
  SpectralSpinor nonlinear_hessian(const Linearization& lin, const SpectralSpinor& phi) const;
  /// Dual coefficients of L_p''(psi) phi.
  SpectralSpinor hessian_apply(const Linearization& lin, const SpectralSpinor& phi) const;

  /// G_p(z) = (1/p) int Q |z|^p and its first two derivatives.
  double G(const SpectralSpinor& z, double p) const;
  double G_first(const SpectralSpinor& z, const SpectralSpinor& w, double p) const;
  double G_second(const SpectralSpinor& z, const SpectralSpinor& w1, const SpectralSpinor& w2, double p) const;

  /// H^{1/2} Riesz map and dual norm on coefficient vectors.
  SpectralSpinor riesz(const SpectralSpinor& dual) const;
  double dual_norm(const SpectralSpinor& dual) const;

 private:
  CurvatureField Q_;
  SpectralTransform transform_;
  Eigen::VectorXd q_;
  Eigen::VectorXd lambda_;
};

/// Free-function forms.
EnergyReport eval_L(const SpectralSpinor& psi, double p, const EnergyFunctional& energy);
RayleighReport eval_rayleigh(const SpectralSpinor& psi, double p, const EnergyFunctional& energy);

}  // namespace spinorsurf
