#include "spinorsurf/clifford.hpp"

#include <array>
#include <cmath>

namespace spinorsurf::clifford {

namespace {

const cplx I{0.0, 1.0};

std::array<Eigen::Matrix2cd, 3> make_pauli() {
  std::array<Eigen::Matrix2cd, 3> s;
  s[0] << 0.0, 1.0, 1.0, 0.0;
  s[1] << 0.0, -I, I, 0.0;
  s[2] << 1.0, 0.0, 0.0, -1.0;
  return s;
}

std::array<Eigen::Matrix2cd, 2> make_gamma() {
  const auto& s = pauli(0);
  const auto& t = pauli(1);
  return {Eigen::Matrix2cd(-I * t), Eigen::Matrix2cd(I * s)};
}

// Rotation axis/angle taking e_z to target; the south pole uses the x axis.
void pole_rotation(const Eigen::Vector3d& target, Eigen::Vector3d& axis, double& angle) {
  const Eigen::Vector3d n = target.normalized();
  const Eigen::Vector3d ez(0.0, 0.0, 1.0);
  Eigen::Vector3d c = ez.cross(n);
  const double s = c.norm();
  angle = std::atan2(s, ez.dot(n));
  if (s < 1e-14) {
    axis = Eigen::Vector3d(1.0, 0.0, 0.0);
  } else {
    axis = c / s;
  }
}

}  // namespace

const Eigen::Matrix2cd& pauli(int a) {
  static const auto s = make_pauli();
  return s.at(static_cast<std::size_t>(a));
}

Eigen::Matrix2cd pauli_dot(const Eigen::Vector3d& v) {
  return v.x() * pauli(0) + v.y() * pauli(1) + v.z() * pauli(2);
}

const Eigen::Matrix2cd& gamma(int i) {
  static const auto g = make_gamma();
  return g.at(static_cast<std::size_t>(i));
}

Eigen::Matrix2cd action(const TangentValue& x) { return x.x() * gamma(0) + x.y() * gamma(1); }

SpinorValue clifford_mul(const TangentValue& x, const SpinorValue& phi) { return action(x) * phi; }

cplx hermitian(const SpinorValue& phi, const SpinorValue& chi) {
  return phi(0) * std::conj(chi(0)) + phi(1) * std::conj(chi(1));
}

Eigen::Matrix2cd sphere_action(const Eigen::Vector3d& x, const Eigen::Vector3d& normal) {
  return I * pauli_dot(x.cross(normal));
}

Eigen::Matrix2cd spin_lift(const Eigen::Vector3d& axis, double angle) {
  return std::cos(0.5 * angle) * Eigen::Matrix2cd::Identity() -
         I * std::sin(0.5 * angle) * pauli_dot(axis.normalized());
}

Eigen::Matrix2cd spin_lift_from_pole(const Eigen::Vector3d& target) {
  Eigen::Vector3d axis;
  double angle = 0.0;
  pole_rotation(target, axis, angle);
  return spin_lift(axis, angle);
}

Eigen::Matrix3d rotation_from_pole(const Eigen::Vector3d& target) {
  Eigen::Vector3d axis;
  double angle = 0.0;
  pole_rotation(target, axis, angle);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

}  // namespace spinorsurf::clifford
