#pragma once

#include <array>

#include <Eigen/Dense>

#include "spinorsurf/spectral_basis.hpp"

namespace spinorsurf {

/// Stereographic chart S_base of S^2: base point -> 0, antipode -> infinity.
///
/// In the chart the round metric is f(x)^2 |dx|^2 with f(x) = 2 / (1 + |x|^2).
/// Flat spinors in the coordinate frame are carried to the ambient
/// trivialization by V_base U(x), where V_base lifts the rotation e_z -> base
/// and U(x) = (1 - i (x1 sigma_y - x2 sigma_x)) / sqrt(1 + |x|^2) lifts the
/// rotation carrying (e_x, e_y, e_z) to the normalized coordinate frame and
/// normal at S_base^{-1}(x).
class StereoChart {
 public:
  explicit StereoChart(const Eigen::Vector3d& base = Eigen::Vector3d::UnitZ());

  const Eigen::Vector3d& base() const { return base_; }

  Eigen::Vector2d to_chart(const Eigen::Vector3d& xi) const;
  Eigen::Vector3d from_chart(const Eigen::Vector2d& x) const;

  static double factor(const Eigen::Vector2d& x) { return 2.0 / (1.0 + x.squaredNorm()); }

  /// Unitary map from flat frame spinors at x to ambient spinors at S^{-1}(x).
  Eigen::Matrix2cd frame_lift(const Eigen::Vector2d& x) const;

  /// Spinor on S^2 at S^{-1}(x) corresponding to a flat spinor phi(x):
  /// psi = f^{-1/2} F^{-1}(phi). Solutions of the flat critical equation are
  /// mapped to solutions on the sphere.
  SpinorValue flat_to_sphere(const Eigen::Vector2d& x, const SpinorValue& phi) const;
  SpinorValue sphere_to_flat(const Eigen::Vector3d& xi, const SpinorValue& psi) const;

 private:
  Eigen::Vector3d base_;
  Eigen::Matrix3d rotation_;
  Eigen::Matrix2cd spin_;
};

/// Killing-spinor bubble phi_{y,rho}(x) = Q(y)^{-(m-1)/2} rho^{-(m-1)/2} phi(x / rho)
/// with phi(x) = f(x)^{m/2} (1 - x) . phi0, in the chart centred at y.
struct Bubble {
  Eigen::Vector3d center = Eigen::Vector3d::UnitZ();
  double scale = 1.0;
  double q_center = 1.0;
  int dim = 2;
  Eigen::Vector2cd base_spinor = default_base_spinor(2);

  /// phi0 = (1/sqrt 2)(m/2)^{(m-1)/2} (1, 0).
  static Eigen::Vector2cd default_base_spinor(int dim);
  static Bubble make(const Eigen::Vector3d& center, double scale, double q_center = 1.0, int dim = 2);
};

/// Flat Clifford multiplication used by bubbles in R^m (m = 2 or 3).
Eigen::Matrix2cd flat_clifford(int dim, const Eigen::VectorXd& x);

/// phi_{y,rho}(x) for x in R^m (chart coordinates around y).
SpinorValue bubble_eval(const Bubble& b, const Eigen::VectorXd& x);

/// |phi_{y,rho}| at radius r from the closed-form norm law.
double bubble_norm_law(const Bubble& b, double r);

struct BubbleEnergy {
  double value = 0.0;          // quadrature of int |phi|^{2*}
  double analytic = 0.0;       // Q(y)^{-m} (m/2)^m omega_m
  double tail_estimate = 0.0;  // difference between two quadrature orders
};

/// int_{R^m} |phi_{y,rho}|^{2m/(m-1)} by radial quadrature.
BubbleEnergy bubble_energy(const Bubble& b);

/// Volume of the unit m-sphere.
double sphere_volume(int dim);

/// psi_{y,rho} at a point of S^2 (ambient trivialization), closed form.
SpinorValue sphere_bubble_eval(const Bubble& b, const Eigen::Vector3d& xi);

struct SphereBubble {
  SpectralSpinor psi;
  double l2_mass = 0.0;           // int |psi_{y,rho}|^2
  double captured_fraction = 0.0; // coefficient mass / l2_mass
  double loss = 0.0;              // 1 - captured_fraction
  bool lossy = false;
};

/// Spectral coefficients of psi_{y,rho} at truncation J, with the L^2 mass
/// that falls outside the truncation.
SphereBubble bubble_to_sphere(const Bubble& b, int truncation, double loss_tolerance = 0.01);

/// Spinor of (S^2, f^2 g) obtained from a spinor of (S^2, g) through the
/// fiberwise isometry F. Components are carried over unchanged; the conformal
/// factor is stored alongside.
struct ConformalSpinorField {
  GridSpinor values;
  Eigen::VectorXd factor;
};

ConformalSpinorField conformal_push(const GridSpinor& psi, const Eigen::VectorXd& factor);

/// Fiber norms |F(psi)|_{f^2 g}; equal to |psi|_g.
Eigen::VectorXd fiber_norm(const ConformalSpinorField& field);

/// Round-sphere Dirac operator from tangential gradients (ambient parts):
/// D psi = psi + sum_a i sigma.(e_a x n) d_a psi.
GridSpinor dirac_from_gradient(const QuadratureGrid& grid, const GridSpinor& psi,
                               const std::array<GridSpinor, 3>& gradient);

/// Dirac operator of f^2 g applied to F(phi), from data of phi on (S^2, g):
/// D_{f^2 g} F(phi) = f^{-1} F(D phi + (1/2) grad(log f) . phi).
GridSpinor conformal_dirac(const QuadratureGrid& grid, const ConformalSpinorField& field,
                           const std::array<GridSpinor, 3>& gradient,
                           const std::array<Eigen::VectorXd, 3>& grad_log_factor);

}  // namespace spinorsurf
