#include "spinorsurf/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "spinorsurf/errors.hpp"

namespace spinorsurf {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx I{0.0, 1.0};

// Radial integral of |phi_rho|^{2*} r^{m-1} over [0, inf) with r = rho tan(t/2).
double radial_energy(const Bubble& b, int n) {
  std::vector<double> x;
  std::vector<double> w;
  gauss_legendre(n, x, w);
  const double m = b.dim;
  const double crit = 2.0 * m / (m - 1.0);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = 0.5 * kPi * (x[static_cast<std::size_t>(i)] + 1.0);
    const double half = 0.5 * t;
    const double r = b.scale * std::tan(half);
    const double drdt = 0.5 * b.scale / (std::cos(half) * std::cos(half));
    const double v = std::pow(bubble_norm_law(b, r), crit) * std::pow(r, m - 1.0) * drdt;
    s += 0.5 * kPi * w[static_cast<std::size_t>(i)] * v;
  }
  const double area = m == 2 ? 2.0 * kPi : 4.0 * kPi;
  return s * area;
}

}  // namespace

// --- charts -----------------------------------------------------------------

StereoChart::StereoChart(const Eigen::Vector3d& base)
    : base_(base.normalized()),
      rotation_(clifford::rotation_from_pole(base_)),
      spin_(clifford::spin_lift_from_pole(base_)) {}

Eigen::Vector2d StereoChart::to_chart(const Eigen::Vector3d& xi) const {
  const Eigen::Vector3d eta = rotation_.transpose() * xi.normalized();
  return Eigen::Vector2d(eta.x(), eta.y()) / (1.0 + eta.z());
}

Eigen::Vector3d StereoChart::from_chart(const Eigen::Vector2d& x) const {
  const double r2 = x.squaredNorm();
  const Eigen::Vector3d eta(2.0 * x.x(), 2.0 * x.y(), 1.0 - r2);
  return rotation_ * (eta / (1.0 + r2));
}

Eigen::Matrix2cd StereoChart::frame_lift(const Eigen::Vector2d& x) const {
  const Eigen::Matrix2cd a = x.x() * clifford::pauli(1) - x.y() * clifford::pauli(0);
  const Eigen::Matrix2cd u = (Eigen::Matrix2cd::Identity() - I * a) / std::sqrt(1.0 + x.squaredNorm());
  return spin_ * u;
}

SpinorValue StereoChart::flat_to_sphere(const Eigen::Vector2d& x, const SpinorValue& phi) const {
  return frame_lift(x) * phi / std::sqrt(factor(x));
}

SpinorValue StereoChart::sphere_to_flat(const Eigen::Vector3d& xi, const SpinorValue& psi) const {
  const Eigen::Vector2d x = to_chart(xi);
  return std::sqrt(factor(x)) * (frame_lift(x).adjoint() * psi);
}

// --- bubbles ----------------------------------------------------------------

Eigen::Vector2cd Bubble::default_base_spinor(int dim) {
  const double len = std::sqrt(0.5) * std::pow(0.5 * dim, 0.5 * (dim - 1));
  return Eigen::Vector2cd(len, 0.0);
}

Bubble Bubble::make(const Eigen::Vector3d& center, double scale, double q_center, int dim) {
  Bubble b;
  b.center = center.normalized();
  b.scale = scale;
  b.q_center = q_center;
  b.dim = dim;
  b.base_spinor = default_base_spinor(dim);
  return b;
}

Eigen::Matrix2cd flat_clifford(int dim, const Eigen::VectorXd& x) {
  if (dim == 2) return clifford::action(TangentValue(x(0), x(1)));
  if (dim == 3) return I * clifford::pauli_dot(Eigen::Vector3d(x(0), x(1), x(2)));
  throw DomainError("flat bubbles are implemented for m = 2 and m = 3");
}

SpinorValue bubble_eval(const Bubble& b, const Eigen::VectorXd& x) {
  if (!(b.scale > 0.0)) throw DomainError("bubble scale must be positive");
  if (x.size() != b.dim) throw DomainError("bubble_eval: point dimension does not match bubble dimension");
  const double m = b.dim;
  const Eigen::VectorXd z = x / b.scale;
  const double f = 2.0 / (1.0 + z.squaredNorm());
  const SpinorValue core = std::pow(f, 0.5 * m) * (b.base_spinor - flat_clifford(b.dim, z) * b.base_spinor);
  return std::pow(b.q_center * b.scale, -0.5 * (m - 1.0)) * core;
}

double bubble_norm_law(const Bubble& b, double r) {
  const double m = b.dim;
  const double z = r / b.scale;
  const double f = 2.0 / (1.0 + z * z);
  const double base = b.base_spinor.norm() * std::sqrt(2.0);
  return std::pow(b.q_center * b.scale, -0.5 * (m - 1.0)) * base * std::pow(f, 0.5 * (m - 1.0));
}

double sphere_volume(int dim) {
  // omega_m = 2 pi^{(m+1)/2} / Gamma((m+1)/2)
  return 2.0 * std::pow(kPi, 0.5 * (dim + 1)) / std::tgamma(0.5 * (dim + 1));
}

BubbleEnergy bubble_energy(const Bubble& b) {
  if (!(b.scale > 0.0)) throw DomainError("bubble scale must be positive");
  if (b.dim != 2 && b.dim != 3) throw DomainError("bubble energy is implemented for m = 2 and m = 3");
  BubbleEnergy e;
  const double m = b.dim;
  const double lo = radial_energy(b, 64);
  e.value = radial_energy(b, 128);
  e.tail_estimate = std::abs(e.value - lo);
  const double base_ratio = b.base_spinor.norm() / Bubble::default_base_spinor(b.dim).norm();
  e.analytic = std::pow(b.q_center, -m) * std::pow(0.5 * m, m) * sphere_volume(b.dim) *
               std::pow(base_ratio, 2.0 * m / (m - 1.0));
  if (e.tail_estimate > 1e-8 * std::max(1.0, std::abs(e.value))) {
    throw ConvergenceError("bubble energy quadrature did not converge", e.tail_estimate);
  }
  return e;
}

SpinorValue sphere_bubble_eval(const Bubble& b, const Eigen::Vector3d& xi) {
  if (b.dim != 2) throw DomainError("sphere bubbles are implemented for m = 2");
  if (!(b.scale > 0.0)) throw DomainError("bubble scale must be positive");
  const Eigen::Matrix3d rot = clifford::rotation_from_pole(b.center);
  const Eigen::Vector3d eta = rot.transpose() * xi.normalized();
  const double rho = b.scale;
  // f^{-1/2} U(x) phi_rho(x) simplified and multiplied through by (1 + eta_z),
  // which keeps the expression regular at the antipode of the centre.
  const Eigen::Matrix2cd a = eta.x() * clifford::pauli(1) - eta.y() * clifford::pauli(0);
  const Eigen::Matrix2cd num = ((1.0 + eta.z()) + (1.0 - eta.z()) / rho) * Eigen::Matrix2cd::Identity() +
                               I * (1.0 / rho - 1.0) * a;
  const double den = rho * rho * (1.0 + eta.z()) + (1.0 - eta.z());
  const SpinorValue local = std::sqrt(2.0) * std::pow(rho, 1.5) / den * (num * b.base_spinor);
  return clifford::spin_lift_from_pole(b.center) * local / std::sqrt(b.q_center);
}

SphereBubble bubble_to_sphere(const Bubble& b, int truncation, double loss_tolerance) {
  // Sample on a grid well beyond the truncation so the projection is not
  // polluted by aliasing of the tail.
  const int degree = std::max(4 * (truncation + 1), 2 * (truncation + 1) + 96);
  const SpectralTransform transform(truncation, QuadratureGrid::gauss(degree));
  const QuadratureGrid& grid = transform.grid();
  GridSpinor samples = GridSpinor::zero(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) samples.set(i, sphere_bubble_eval(b, grid.nodes[i]));
  SphereBubble out;
  out.psi = transform.analyze(samples);
  out.l2_mass = integrate(grid, samples.norm2());
  const double kept = out.psi.coeffs().squaredNorm();
  out.captured_fraction = out.l2_mass > 0.0 ? kept / out.l2_mass : 1.0;
  out.loss = std::max(0.0, 1.0 - out.captured_fraction);
  out.lossy = out.loss > loss_tolerance;
  return out;
}

// --- conformal change -------------------------------------------------------

ConformalSpinorField conformal_push(const GridSpinor& psi, const Eigen::VectorXd& factor) {
  if (static_cast<std::size_t>(factor.size()) != psi.size()) {
    throw DomainError("conformal_push: factor and field sizes differ");
  }
  if ((factor.array() <= 0.0).any() || !factor.allFinite()) {
    throw DomainError("conformal_push: conformal factor must be positive");
  }
  return {psi, factor};
}

Eigen::VectorXd fiber_norm(const ConformalSpinorField& field) { return field.values.norm2().cwiseSqrt(); }

GridSpinor dirac_from_gradient(const QuadratureGrid& grid, const GridSpinor& psi,
                               const std::array<GridSpinor, 3>& gradient) {
  GridSpinor out = psi;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::Vector3d& n = grid.nodes[i];
    SpinorValue v = psi.at(i);
    for (int a = 0; a < 3; ++a) {
      const Eigen::Vector3d e = Eigen::Vector3d::Unit(a);
      v += clifford::sphere_action(e, n) * gradient[static_cast<std::size_t>(a)].at(i);
    }
    out.set(i, v);
  }
  return out;
}

GridSpinor conformal_dirac(const QuadratureGrid& grid, const ConformalSpinorField& field,
                           const std::array<GridSpinor, 3>& gradient,
                           const std::array<Eigen::VectorXd, 3>& grad_log_factor) {
  GridSpinor out = dirac_from_gradient(grid, field.values, gradient);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const Eigen::Vector3d du(grad_log_factor[0](idx), grad_log_factor[1](idx), grad_log_factor[2](idx));
    const SpinorValue v =
        out.at(i) + 0.5 * (clifford::sphere_action(du, grid.nodes[i]) * field.values.at(i));
    out.set(i, v / field.factor(idx));
  }
  return out;
}

}  // namespace spinorsurf
