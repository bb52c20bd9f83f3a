#pragma once

#include <complex>

#include <Eigen/Dense>

namespace spinorsurf {

using cplx = std::complex<double>;

/// Fiber element of the rank-2 complex spinor bundle of a surface.
using SpinorValue = Eigen::Vector2cd;

/// Orthonormal-frame coordinates of a tangent vector.
using TangentValue = Eigen::Vector2d;

namespace clifford {

/// Pauli matrices sigma_x, sigma_y, sigma_z (a = 0, 1, 2).
const Eigen::Matrix2cd& pauli(int a);

/// sigma . v for an ambient vector v.
Eigen::Matrix2cd pauli_dot(const Eigen::Vector3d& v);

/// Clifford action of the frame vectors on C^2.
///
/// The representation is fixed project-wide:
///   e1 . = -i sigma_y = [[0, -1], [1, 0]]
///   e2 . =  i sigma_x = [[0,  i], [i, 0]]
/// It is the restriction of the ambient rule X . = i sigma.(X x n) at the
/// north pole n = e_z, so frame spinors and the ambient trivialization of
/// S^2 agree there.
const Eigen::Matrix2cd& gamma(int i);

/// Matrix of X . for a frame vector X.
Eigen::Matrix2cd action(const TangentValue& x);

SpinorValue clifford_mul(const TangentValue& x, const SpinorValue& phi);

/// (phi, chi) = sum_i phi_i conj(chi_i); linear in the first slot.
cplx hermitian(const SpinorValue& phi, const SpinorValue& chi);

/// Clifford multiplication on S^2 in the ambient trivialization: a tangent
/// vector X at the point with unit normal n acts by i sigma.(X x n).
Eigen::Matrix2cd sphere_action(const Eigen::Vector3d& x, const Eigen::Vector3d& normal);

/// SU(2) lift of the rotation by `angle` about the unit `axis`:
/// exp(-i angle sigma.axis / 2). It satisfies U (sigma.v) U^H = sigma.(R v).
Eigen::Matrix2cd spin_lift(const Eigen::Vector3d& axis, double angle);

/// SU(2) lift of the rotation that takes e_z to `target` along the great circle.
Eigen::Matrix2cd spin_lift_from_pole(const Eigen::Vector3d& target);

/// Rotation matrix that takes e_z to `target` along the great circle.
Eigen::Matrix3d rotation_from_pole(const Eigen::Vector3d& target);

}  // namespace clifford
}  // namespace spinorsurf
