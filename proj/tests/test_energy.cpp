#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "spinorsurf/energy.hpp"
#include "spinorsurf/errors.hpp"

using namespace spinorsurf;

namespace {

constexpr double kPi = std::numbers::pi;

CurvatureField quadratic_q() {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  A(2, 2) = 0.3;
  return CurvatureField::polynomial(1.0, Eigen::Vector3d::Zero(), A);
}

SpectralSpinor eta1(int J) { return SpectralSpinor::basis(J, BasisIndex{0, +1, 0}, std::sqrt(1.0)); }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("curvature field families") {
  const CurvatureField c = CurvatureField::constant(2.5);
  CHECK(c.is_constant());
  CHECK(c.integral() == doctest::Approx(10 * kPi));
  CHECK(c.normalized().integral() == doctest::Approx(1.0));
  CHECK(c.normalized().value(Eigen::Vector3d::UnitX()) == doctest::Approx(1 / (4 * kPi)));

  const CurvatureField q = quadratic_q();
  CHECK_FALSE(q.is_affine());
  CHECK(q.degree() == 2);
  CHECK(q.max_value() == doctest::Approx(1.3).epsilon(1e-10));
  CHECK(q.min_value() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(q.integral() == doctest::Approx(4 * kPi * 1.1).epsilon(1e-12));

  const CurvatureField a = CurvatureField::from_json({{"family", "affine"}, {"c", 1.0}, {"b", {0.0, 0.0, 0.2}}});
  CHECK(a.is_affine());
  CHECK(a.degree() == 1);

  const CurvatureField h = CurvatureField::harmonic({{0, 0, 3.5}, {2, 0, 0.4}});
  const Eigen::Vector3d x = Eigen::Vector3d(0.3, 0.4, 0.5).normalized();
  CHECK(h.value(x) == doctest::Approx(3.5 * real_harmonic(0, 0, x) + 0.4 * real_harmonic(2, 0, x)));
  CHECK(h.integral() == doctest::Approx(3.5 * std::sqrt(4 * kPi)).epsilon(1e-12));

  for (const CurvatureField& f : {q, a, h}) {
    const CurvatureField g = CurvatureField::from_json(f.to_json());
    CHECK(g.family_name() == f.family_name());
    CHECK(g.value(x) == doctest::Approx(f.value(x)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(CurvatureField::from_json({{"family", "cubic"}}), ConfigError);
  CHECK_THROWS_AS(EnergyFunctional(4, CurvatureField::constant(-1.0)), DomainError);
}

TEST_CASE("curvature derivatives match finite differences") {
  const CurvatureField fields[] = {
      quadratic_q(),
      CurvatureField::from_json({{"family", "affine"}, {"c", 2.0}, {"b", {0.1, -0.3, 0.2}}}),
      CurvatureField::harmonic({{0, 0, 5.0}, {1, -1, 0.3}, {2, 1, 0.2}, {3, 2, -0.1}}),
  };
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  for (const CurvatureField& Q : fields) {
    for (int t = 0; t < 10; ++t) {
      const Eigen::Vector3d x = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
      const Eigen::Vector3d e = x.unitOrthogonal();
      const double h = 1e-4;
      auto along = [&](double s) { return std::cos(s) * x + std::sin(s) * e; };
      const double d1 = (Q.value(along(h)) - Q.value(along(-h))) / (2 * h);
      CHECK(std::abs(Q.gradient(x).dot(e) - d1) <= 1e-7);
      CHECK(std::abs(Q.gradient(x).dot(x)) <= 1e-12);
      // Second derivative along a geodesic is the Riemannian Hessian.
      const double d2 = (Q.value(along(h)) - 2 * Q.value(x) + Q.value(along(-h))) / (h * h);
      CHECK(std::abs(e.dot(Q.hessian(x) * e) - d2) <= 1e-5);
    }
  }
}

TEST_CASE("hypothesis report") {
  const HypothesisReport c = check_Q_hypothesis(CurvatureField::constant(1.0));
  CHECK(c.classification == "constant");
  CHECK_FALSE(c.d_interval_nonempty);
  CHECK_FALSE(c.admissible_nonempty);

  const HypothesisReport q = check_Q_hypothesis(quadratic_q());
  CHECK(q.classification == "generic");
  CHECK(q.q_max == doctest::Approx(1.3).epsilon(1e-12));
  CHECK(q.q_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.half_q_max == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(q.d_lower == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.admissible_nonempty);
  REQUIRE(q.maxima.size() == 2);
  CHECK(std::abs(q.maxima[0].x.z()) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(q.maxima[0].x.z() * q.maxima[1].x.z() < 0.0);
  CHECK(q.maxima_nondegenerate);
  for (const auto& m : q.maxima) {
    CHECK(m.hessian_eigenvalues(0) == doctest::Approx(-0.6).epsilon(1e-6));
    CHECK(m.hessian_eigenvalues(1) == doctest::Approx(-0.6).epsilon(1e-6));
  }
  bool equator = false;
  for (const auto& p : q.critical_points) {
    if (std::abs(p.value - 1.0) < 1e-9 && std::abs(p.x.z()) < 1e-6) equator = true;
  }
  CHECK(equator);
  CHECK(q.topological_clauses == "not checked");

  const HypothesisReport a =
      check_Q_hypothesis(CurvatureField::from_json({{"family", "affine"}, {"c", 1.0}, {"b", {0.0, 0.0, 0.2}}}));
  CHECK(a.classification == "affine-obstruction");
  CHECK(a.maxima.size() == 1);
  CHECK(a.maxima[0].x.z() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("energy at zero and from parts") {
  const EnergyFunctional e(6, quadratic_q());
  const EnergyReport z = e.eval(SpectralSpinor(6), 3.5);
  CHECK(z.value == 0.0);
  CHECK(z.gradient.coeffs().norm() == 0.0);

  std::mt19937_64 rng(32);
  for (double p : {2.5, 3.0, 4.0}) {
    const SpectralSpinor psi = random_spinor(6, rng);
    const EnergyReport r = e.eval(psi, p);
    CHECK(std::abs(r.value - (0.5 * (r.plus_norm2 - r.minus_norm2) - r.A / p)) <= 1e-12 * (1 + std::abs(r.value)));
    CHECK(std::abs(r.value - e.value(psi, p)) <= 1e-12 * (1 + std::abs(r.value)));
    CHECK(r.plus_norm2 == doctest::Approx(h_half_norm2(psi.plus())).epsilon(1e-13));
    CHECK(r.minus_norm2 == doctest::Approx(h_half_norm2(psi.minus())).epsilon(1e-13));
  }
}

TEST_CASE("exponent and grid checks") {
  const EnergyFunctional e(6, CurvatureField::constant(1.0));
  const SpectralSpinor psi = eta1(6);
  CHECK_THROWS_AS(e.eval(psi, 2.0), DomainError);
  CHECK_THROWS_AS(e.eval(psi, 4.5), DomainError);
  CHECK_NOTHROW(e.eval(psi, 4.0));
  const EnergyFunctional coarse(6, CurvatureField::constant(1.0), 20);
  CHECK_NOTHROW(coarse.eval(psi, 2.5));
  CHECK_THROWS_AS(coarse.eval(psi, 4.0), AliasingError);
  CHECK(EnergyFunctional::default_grid_degree(16, quadratic_q()) == 70);
}

TEST_CASE("one-dimensional reduction along eta1") {
  const int J = 4;
  const EnergyFunctional e(J, CurvatureField::constant(1.0));
  const SpectralSpinor eta = eta1(J);
  for (double p : {3.0, 4.0}) {
    const double c = e.A(eta, p);
    const double tmax = std::pow(c, -1.0 / (p - 2));
    double best_t = 0.0;
    double best = -1e300;
    for (int i = 1; i <= 4000; ++i) {
      const double t = 2.0 * tmax * i / 4000.0;
      const double v = e.value(t * eta, p);
      CHECK(std::abs(v - (t * t / 2 - std::pow(t, p) * c / p)) <= 1e-12 * (1 + std::abs(v)));
      if (v > best) {
        best = v;
        best_t = t;
      }
    }
    CHECK(std::abs(best_t - tmax) <= 2.0 * tmax / 4000.0);
    // The gradient vanishes at the maximum of the ray.
    CHECK(e.eval(tmax * eta, p).dual_norm <= 1e-12);
  }
}

TEST_CASE("energy gradient matches finite differences") {
  const EnergyFunctional e(8, quadratic_q());
  std::mt19937_64 rng(33);
  const double h = 1e-4;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double p = 2.5 + 1.5 * (t % 4) / 3.0;
    const SpectralSpinor psi = random_spinor(8, rng);
    const SpectralSpinor phi = random_spinor(8, rng);
    const EnergyReport r = e.eval(psi, p);
    const double fd = (e.value(psi + h * phi, p) - e.value(psi - h * phi, p)) / (2 * h);
    worst = std::max(worst, rel(h_half_inner(r.gradient, phi), fd));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("second variation matches finite differences") {
  const EnergyFunctional e(6, quadratic_q());
  std::mt19937_64 rng(34);
  const double h = 1e-5;
  for (double p : {3.0, 4.0}) {
    const SpectralSpinor psi = random_spinor(6, rng);
    const SpectralSpinor phi = random_spinor(6, rng);
    const SpectralSpinor chi = random_spinor(6, rng);
    const Linearization lin = e.linearize(psi, p);
    const double hv = l2_inner(e.hessian_apply(lin, phi), chi);
    const double fd = (l2_inner(e.eval(psi + h * phi, p).residual, chi) - l2_inner(e.eval(psi - h * phi, p).residual, chi)) /
                      (2 * h);
    CHECK(rel(hv, fd) <= 1e-6);
    CHECK(rel(e.G_second(psi, phi, chi, p), l2_inner(e.nonlinear_hessian(lin, phi), chi)) <= 1e-10);
    const double g1 = (e.G(psi + h * phi, p) - e.G(psi - h * phi, p)) / (2 * h);
    CHECK(rel(e.G_first(psi, phi, p), g1) <= 1e-6);
  }
}

TEST_CASE("Rayleigh quotient") {
  const EnergyFunctional e(8, quadratic_q());
  std::mt19937_64 rng(35);
  for (int t = 0; t < 5; ++t) {
    const double p = 3.0 + 0.5 * (t % 3);
    const SpectralSpinor psi = random_spinor(8, rng);
    const double r0 = e.rayleigh(psi, p).value;
    for (double s : {0.5, 2.0, 10.0}) CHECK(rel(e.rayleigh(s * psi, p).value, r0) <= 1e-10);
    const SpectralSpinor phi = random_spinor(8, rng);
    const double h = 1e-4;
    const double fd = (e.rayleigh(psi + h * phi, p).value - e.rayleigh(psi - h * phi, p).value) / (2 * h);
    CHECK(rel(h_half_inner(e.rayleigh(psi, p).gradient, phi), fd) <= 1e-5);
  }
  const EnergyFunctional one(6, CurvatureField::constant(1.0));
  const SpectralSpinor eta = eta1(6);
  // Direct quadrature of |eta|^4 from pointwise values.
  const QuadratureGrid grid = QuadratureGrid::gauss(30);
  Eigen::VectorXd n4(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    n4(static_cast<Eigen::Index>(i)) = std::pow(eigenspinor_eval({0, +1, 0}, grid.nodes[i]).squaredNorm(), 2);
  }
  CHECK(rel(eval_rayleigh(eta, 4.0, one).value, 1.0 / std::sqrt(integrate(grid, n4))) <= 1e-12);
  CHECK_THROWS_AS(one.rayleigh(SpectralSpinor(6), 4.0), DomainError);
}

TEST_CASE("convexity inequality of the nonlinear part") {
  const EnergyFunctional e(6, quadratic_q());
  std::mt19937_64 rng(36);
  for (int t = 0; t < 100; ++t) {
    const double p = 2.2 + 1.8 * (t % 10) / 9.0;
    const SpectralSpinor z = random_spinor(6, rng);
    const SpectralSpinor w = (0.1 + 0.2 * (t % 7)) * random_spinor(6, rng);
    const double lhs = (e.G_second(z, z, z, p) - e.G_first(z, z, p)) + 2 * (e.G_second(z, z, w, p) - e.G_first(z, w, p)) +
                       e.G_second(z, w, w, p);
    CHECK(lhs >= (p - 2) / (p - 1) * e.A(z, p) - 1e-12);
  }
}

TEST_CASE("weighted L^q means are monotone") {
  const EnergyFunctional e(6, quadratic_q().normalized());
  std::mt19937_64 rng(37);
  for (int t = 0; t < 5; ++t) {
    const SpectralSpinor psi = random_spinor(6, rng);
    double prev = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double q = 2.0 + 0.1 * k;
      const double m = std::pow(e.A(psi, q), 1.0 / q);
      CHECK(m >= prev * (1 - 1e-13));
      prev = m;
    }
  }
}
