#include <random>

#include <doctest.h>

#include "spinorsurf/clifford.hpp"

using namespace spinorsurf;
using namespace spinorsurf::clifford;

namespace {

SpinorValue random_spinor_value(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return {cplx(n(rng), n(rng)), cplx(n(rng), n(rng))};
}

TangentValue random_tangent(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return {n(rng), n(rng)};
}

}  // namespace

TEST_CASE("frame gammas satisfy the Clifford relation exactly") {
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const Eigen::Matrix2cd anti = gamma(i) * gamma(j) + gamma(j) * gamma(i);
      const Eigen::Matrix2cd expected = (i == j ? -2.0 : 0.0) * Eigen::Matrix2cd::Identity();
      CHECK((anti - expected).norm() == 0.0);
    }
  }
}

TEST_CASE("clifford_mul examples") {
  std::mt19937_64 rng(1);
  const SpinorValue phi = random_spinor_value(rng);
  CHECK(clifford_mul(TangentValue::Zero(), phi).norm() == 0.0);
  const TangentValue e1(1.0, 0.0);
  CHECK((clifford_mul(e1, clifford_mul(e1, phi)) + phi).norm() < 1e-15);
}

TEST_CASE("Clifford action is skew-adjoint and isometric") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const SpinorValue phi = random_spinor_value(rng);
    const SpinorValue chi = random_spinor_value(rng);
    const TangentValue x = random_tangent(rng);
    const TangentValue e1(1.0, 0.0);
    CHECK(std::abs(hermitian(clifford_mul(e1, phi), chi) + hermitian(phi, clifford_mul(e1, chi))) < 1e-14);
    CHECK(std::abs(hermitian(clifford_mul(x, phi), chi) + hermitian(phi, clifford_mul(x, chi))) < 1e-13);
    CHECK(std::abs(hermitian(clifford_mul(e1, phi), clifford_mul(e1, chi)) - hermitian(phi, chi)) < 1e-14);
    CHECK(clifford_mul(x, phi).norm() == doctest::Approx(x.norm() * phi.norm()).epsilon(1e-14));
  }
}

TEST_CASE("hermitian product") {
  CHECK(hermitian(SpinorValue(1.0, 0.0), SpinorValue(1.0, 0.0)) == cplx(1.0, 0.0));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const SpinorValue phi = random_spinor_value(rng);
    const SpinorValue chi = random_spinor_value(rng);
    CHECK(std::abs(hermitian(phi, chi) - std::conj(hermitian(chi, phi))) < 1e-15);
    CHECK(std::abs(hermitian(phi, phi).imag()) == 0.0);
    CHECK(hermitian(phi, phi).real() == doctest::Approx(phi.squaredNorm()));
    const cplx a(0.3, -1.2);
    CHECK(std::abs(hermitian(a * phi, chi) - a * hermitian(phi, chi)) < 1e-14);
  }
}

TEST_CASE("sphere action agrees with the frame gammas at the north pole") {
  const Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
  CHECK((sphere_action(Eigen::Vector3d::UnitX(), n) - gamma(0)).norm() < 1e-15);
  CHECK((sphere_action(Eigen::Vector3d::UnitY(), n) - gamma(1)).norm() < 1e-15);
}

TEST_CASE("sphere action satisfies the Clifford relation on tangent vectors") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector3d n = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    Eigen::Vector3d x(g(rng), g(rng), g(rng));
    Eigen::Vector3d y(g(rng), g(rng), g(rng));
    x -= x.dot(n) * n;
    y -= y.dot(n) * n;
    const Eigen::Matrix2cd X = sphere_action(x, n);
    const Eigen::Matrix2cd Y = sphere_action(y, n);
    CHECK((X * Y + Y * X + 2.0 * x.dot(y) * Eigen::Matrix2cd::Identity()).norm() < 1e-13);
    CHECK((X.adjoint() + X).norm() < 1e-14);
  }
}

TEST_CASE("spin lifts cover rotations") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector3d target = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const Eigen::Matrix3d R = rotation_from_pole(target);
    CHECK((R * Eigen::Vector3d::UnitZ() - target).norm() < 1e-14);
    CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-14);
    const Eigen::Matrix2cd U = spin_lift_from_pole(target);
    const Eigen::Vector3d v(g(rng), g(rng), g(rng));
    CHECK((U * pauli_dot(v) * U.adjoint() - pauli_dot(R * v)).norm() < 1e-13);
  }
}
