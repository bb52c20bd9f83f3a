#include "spinorsurf/spectral_basis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "spinorsurf/errors.hpp"
#include "spinorsurf/io.hpp"

namespace spinorsurf {

namespace {

constexpr double kPi = std::numbers::pi;

inline std::size_t tri(int l, int m) {
  return static_cast<std::size_t>(l) * static_cast<std::size_t>(l + 1) / 2 + static_cast<std::size_t>(m);
}

inline Eigen::Index sh_index(int l, int m) { return static_cast<Eigen::Index>(l * l + l + m); }

// Orthonormal associated Legendre functions with the Condon-Shortley phase,
// Y_l^m = P(l, m) e^{i m phi}, m >= 0. Also returns d/dtheta when requested.
void legendre(int lmax, double x, double s, double* p, double* dp) {
  p[tri(0, 0)] = 0.5 / std::sqrt(kPi);
  for (int m = 1; m <= lmax; ++m) {
    p[tri(m, m)] = -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[tri(m - 1, m - 1)];
  }
  for (int m = 0; m < lmax; ++m) {
    p[tri(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * x * p[tri(m, m)];
  }
  for (int m = 0; m <= lmax; ++m) {
    for (int l = m + 2; l <= lmax; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
      const double b = std::sqrt(((l - 1.0) * (l - 1.0) - static_cast<double>(m) * m) /
                                 (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
    }
  }
  if (dp == nullptr) return;
  // 2 dP_l^m = c+ P_l^{m+1} - c- P_l^{m-1}, with P_l^{-1} = -P_l^1.
  for (int l = 0; l <= lmax; ++l) {
    for (int m = 0; m <= l; ++m) {
      const double cp = std::sqrt(static_cast<double>(l - m) * (l + m + 1));
      const double cm = std::sqrt(static_cast<double>(l + m) * (l - m + 1));
      const double up = (m + 1 <= l) ? p[tri(l, m + 1)] : 0.0;
      const double down = (m == 0) ? (l >= 1 ? -p[tri(l, 1)] : 0.0) : p[tri(l, m - 1)];
      dp[tri(l, m)] = 0.5 * (cp * up - cm * down);
    }
  }
}

inline double signed_legendre(const double* p, int l, int m) {
  const int am = m < 0 ? -m : m;
  const double v = p[tri(l, am)];
  return (m < 0 && (am % 2 == 1)) ? -v : v;
}

// Clebsch-Gordan decomposition of basis element k into scalar harmonics of
// its two components.
struct ComponentEntry {
  int l;
  int m_up;
  int m_dn;
  double c_up;
  double c_dn;
};

ComponentEntry component_entry(const BasisIndex& k) {
  const int j = k.level;
  const int d = k.degeneracy;
  ComponentEntry e{};
  e.m_up = d - j - 1;
  e.m_dn = d - j;
  if (k.sign > 0) {
    e.l = j;
    e.c_up = std::sqrt(static_cast<double>(d) / (2.0 * j + 1.0));
    e.c_dn = std::sqrt(static_cast<double>(2 * j + 1 - d) / (2.0 * j + 1.0));
  } else {
    e.l = j + 1;
    e.c_up = -std::sqrt(static_cast<double>(2 * j + 2 - d) / (2.0 * j + 3.0));
    e.c_dn = std::sqrt(static_cast<double>(d + 1) / (2.0 * j + 3.0));
  }
  if (std::abs(e.m_up) > e.l) e.c_up = 0.0;
  if (std::abs(e.m_dn) > e.l) e.c_dn = 0.0;
  return e;
}

void require_same(const SpectralSpinor& a, const SpectralSpinor& b) {
  if (a.truncation() != b.truncation()) {
    throw TruncationMismatch("spectral spinors have truncation " + std::to_string(a.truncation()) + " and " +
                             std::to_string(b.truncation()));
  }
}

}  // namespace

// --- spectrum ---------------------------------------------------------------

double dirac_eigenvalue(int dim, int level, int sign) {
  if (dim < 2 || level < 0) throw DomainError("dirac_eigenvalue: need dim >= 2 and level >= 0");
  return (sign > 0 ? 1.0 : -1.0) * (0.5 * dim + level);
}

long long dirac_multiplicity(int dim, int level) {
  if (dim < 2 || level < 0) throw DomainError("dirac_multiplicity: need dim >= 2 and level >= 0");
  long long binom = 1;
  for (int i = 1; i <= level; ++i) binom = binom * (level + dim - 1 - level + i) / i;
  return (1LL << (dim / 2)) * binom;
}

std::size_t basis_size(int truncation) {
  if (truncation < 0) return 0;
  const auto J = static_cast<std::size_t>(truncation);
  return 2 * (J + 1) * (J + 2);
}

std::size_t basis_position(const BasisIndex& k) {
  const auto j = static_cast<std::size_t>(k.level);
  const std::size_t offset = 2 * j * (j + 1);
  return offset + (k.sign > 0 ? 0 : 2 * j + 2) + static_cast<std::size_t>(k.degeneracy);
}

BasisIndex basis_index(std::size_t position) {
  std::size_t j = 0;
  while (2 * (j + 1) * (j + 2) <= position) ++j;
  std::size_t rest = position - 2 * j * (j + 1);
  const std::size_t block = 2 * j + 2;
  BasisIndex k;
  k.level = static_cast<int>(j);
  k.sign = rest < block ? 1 : -1;
  k.degeneracy = static_cast<int>(rest < block ? rest : rest - block);
  return k;
}

double eigenvalue(const BasisIndex& k) { return k.sign * (1.0 + k.level); }

Eigen::VectorXd eigenvalues(int truncation) {
  Eigen::VectorXd lam(static_cast<Eigen::Index>(basis_size(truncation)));
  Eigen::Index pos = 0;
  for (int j = 0; j <= truncation; ++j) {
    for (int s : {1, -1}) {
      for (int d = 0; d < 2 * j + 2; ++d) lam(pos++) = s * (1.0 + j);
    }
  }
  return lam;
}

// --- SpectralSpinor ---------------------------------------------------------

SpectralSpinor::SpectralSpinor(int truncation)
    : truncation_(truncation), coeffs_(Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis_size(truncation)))) {
  if (truncation < 0) throw DomainError("truncation level must be nonnegative");
}

SpectralSpinor::SpectralSpinor(int truncation, Eigen::VectorXcd coeffs)
    : truncation_(truncation), coeffs_(std::move(coeffs)) {
  if (truncation < 0) throw DomainError("truncation level must be nonnegative");
  if (static_cast<std::size_t>(coeffs_.size()) != basis_size(truncation)) {
    throw TruncationMismatch("coefficient vector length does not match truncation " + std::to_string(truncation));
  }
}

SpectralSpinor SpectralSpinor::basis(int truncation, const BasisIndex& k, cplx value) {
  if (k.level > truncation || k.level < 0 || k.degeneracy < 0 || k.degeneracy >= 2 * k.level + 2) {
    throw DomainError("basis index outside truncation");
  }
  SpectralSpinor s(truncation);
  s[k] = value;
  return s;
}

SpectralSpinor SpectralSpinor::plus() const {
  SpectralSpinor out(*this);
  for (std::size_t i = 0; i < size(); ++i) {
    if (basis_index(i).sign < 0) out.coeffs_(static_cast<Eigen::Index>(i)) = 0.0;
  }
  return out;
}

SpectralSpinor SpectralSpinor::minus() const {
  SpectralSpinor out(*this);
  for (std::size_t i = 0; i < size(); ++i) {
    if (basis_index(i).sign > 0) out.coeffs_(static_cast<Eigen::Index>(i)) = 0.0;
  }
  return out;
}

SpectralSpinor SpectralSpinor::resized(int truncation) const {
  SpectralSpinor out(truncation);
  const auto n = std::min(out.coeffs_.size(), coeffs_.size());
  out.coeffs_.head(n) = coeffs_.head(n);
  return out;
}

SpectralSpinor& SpectralSpinor::operator+=(const SpectralSpinor& o) {
  require_same(*this, o);
  coeffs_ += o.coeffs_;
  return *this;
}

SpectralSpinor& SpectralSpinor::operator-=(const SpectralSpinor& o) {
  require_same(*this, o);
  coeffs_ -= o.coeffs_;
  return *this;
}

SpectralSpinor& SpectralSpinor::operator*=(cplx s) {
  coeffs_ *= s;
  return *this;
}

SpectralSpinor operator+(SpectralSpinor a, const SpectralSpinor& b) { return a += b; }
SpectralSpinor operator-(SpectralSpinor a, const SpectralSpinor& b) { return a -= b; }
SpectralSpinor operator*(cplx s, SpectralSpinor a) { return a *= s; }
SpectralSpinor operator*(double s, SpectralSpinor a) { return a *= cplx(s, 0.0); }

SpectralSpinor dirac_apply(const SpectralSpinor& psi) {
  SpectralSpinor out(psi);
  out.coeffs() = psi.coeffs().cwiseProduct(eigenvalues(psi.truncation()).cast<cplx>());
  return out;
}

double h_half_inner(const SpectralSpinor& psi, const SpectralSpinor& phi) {
  require_same(psi, phi);
  const Eigen::VectorXd lam = eigenvalues(psi.truncation()).cwiseAbs();
  double s = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) s += lam(i) * std::real(psi.coeffs()(i) * std::conj(phi.coeffs()(i)));
  return s;
}

double h_half_norm2(const SpectralSpinor& psi) { return h_half_inner(psi, psi); }

double l2_inner(const SpectralSpinor& psi, const SpectralSpinor& phi) {
  require_same(psi, phi);
  return std::real(phi.coeffs().dot(psi.coeffs()));
}

double dirac_action(const SpectralSpinor& psi) {
  const Eigen::VectorXd lam = eigenvalues(psi.truncation());
  return (lam.array() * psi.coeffs().array().abs2()).sum();
}

std::pair<SpectralSpinor, SpectralSpinor> split(const SpectralSpinor& psi) { return {psi.plus(), psi.minus()}; }

// --- grids ------------------------------------------------------------------

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw DomainError("Gauss-Legendre rule needs at least one node");
  x.resize(static_cast<std::size_t>(n));
  w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (z * p1 - pnm1) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

QuadratureGrid QuadratureGrid::gauss(int degree) {
  if (degree < 0) throw DomainError("quadrature degree must be nonnegative");
  QuadratureGrid g;
  g.degree = degree;
  g.n_lat = degree / 2 + 1;
  g.n_lon = degree + 1;
  gauss_legendre(g.n_lat, g.cos_theta, g.lat_weights);
  g.sin_theta.resize(g.cos_theta.size());
  for (std::size_t i = 0; i < g.cos_theta.size(); ++i) {
    g.sin_theta[i] = std::sqrt(std::max(0.0, 1.0 - g.cos_theta[i] * g.cos_theta[i]));
  }
  g.phi.resize(static_cast<std::size_t>(g.n_lon));
  for (int j = 0; j < g.n_lon; ++j) g.phi[static_cast<std::size_t>(j)] = 2.0 * kPi * j / g.n_lon;

  g.nodes.reserve(static_cast<std::size_t>(g.n_lat * g.n_lon));
  g.weights.resize(static_cast<Eigen::Index>(g.n_lat) * g.n_lon);
  const double dphi = 2.0 * kPi / g.n_lon;
  for (int i = 0; i < g.n_lat; ++i) {
    for (int j = 0; j < g.n_lon; ++j) {
      const double st = g.sin_theta[static_cast<std::size_t>(i)];
      const double ph = g.phi[static_cast<std::size_t>(j)];
      g.nodes.emplace_back(st * std::cos(ph), st * std::sin(ph), g.cos_theta[static_cast<std::size_t>(i)]);
      g.weights(static_cast<Eigen::Index>(g.node(i, j))) = g.lat_weights[static_cast<std::size_t>(i)] * dphi;
    }
  }
  return g;
}

double QuadratureGrid::spacing() const { return kPi / std::max(1, n_lat); }

Eigen::Vector2d north_chart(const Eigen::Vector3d& x) { return Eigen::Vector2d(x.x(), x.y()) / (1.0 + x.z()); }

Eigen::Vector2d south_chart(const Eigen::Vector3d& x) { return Eigen::Vector2d(x.x(), -x.y()) / (1.0 - x.z()); }

GridSpinor GridSpinor::zero(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {Eigen::VectorXcd::Zero(m), Eigen::VectorXcd::Zero(m)};
}

Eigen::VectorXd GridSpinor::norm2() const { return up.cwiseAbs2() + dn.cwiseAbs2(); }

double integrate(const QuadratureGrid& grid, const Eigen::VectorXd& f) { return grid.weights.dot(f); }

// --- transforms -------------------------------------------------------------

SpectralTransform::SpectralTransform(int truncation, QuadratureGrid grid)
    : truncation_(truncation), lmax_(truncation + 1), grid_(std::move(grid)) {
  if (truncation < 0) throw DomainError("truncation level must be nonnegative");
  if (grid_.degree < 2 * lmax_) {
    throw AliasingError("quadrature degree " + std::to_string(grid_.degree) + " cannot resolve truncation " +
                        std::to_string(truncation) + " (need degree >= " + std::to_string(2 * lmax_) + ")");
  }
  const std::size_t ntri = tri(lmax_, lmax_) + 1;
  legendre_.resize(ntri * static_cast<std::size_t>(grid_.n_lat));
  dlegendre_.resize(legendre_.size());
  for (int i = 0; i < grid_.n_lat; ++i) {
    legendre(lmax_, grid_.cos_theta[static_cast<std::size_t>(i)], grid_.sin_theta[static_cast<std::size_t>(i)],
             &legendre_[static_cast<std::size_t>(i) * ntri], &dlegendre_[static_cast<std::size_t>(i) * ntri]);
  }
  fourier_.resize(grid_.n_lon, 2 * lmax_ + 1);
  for (int j = 0; j < grid_.n_lon; ++j) {
    for (int m = -lmax_; m <= lmax_; ++m) {
      fourier_(j, m + lmax_) = std::polar(1.0, m * grid_.phi[static_cast<std::size_t>(j)]);
    }
  }
}

SpectralTransform::ComponentCoeffs SpectralTransform::to_components(const SpectralSpinor& psi) const {
  if (psi.truncation() != truncation_) {
    throw TruncationMismatch("transform built for truncation " + std::to_string(truncation_) + ", got " +
                             std::to_string(psi.truncation()));
  }
  const auto n = static_cast<Eigen::Index>((lmax_ + 1) * (lmax_ + 1));
  ComponentCoeffs c{Eigen::VectorXcd::Zero(n), Eigen::VectorXcd::Zero(n)};
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const cplx a = psi.coeffs()(static_cast<Eigen::Index>(k));
    if (a == cplx(0.0, 0.0)) continue;
    const ComponentEntry e = component_entry(basis_index(k));
    if (e.c_up != 0.0) c.up(sh_index(e.l, e.m_up)) += e.c_up * a;
    if (e.c_dn != 0.0) c.dn(sh_index(e.l, e.m_dn)) += e.c_dn * a;
  }
  return c;
}

SpectralSpinor SpectralTransform::from_components(const ComponentCoeffs& c) const {
  SpectralSpinor psi(truncation_);
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const ComponentEntry e = component_entry(basis_index(k));
    cplx a = 0.0;
    if (e.c_up != 0.0) a += e.c_up * c.up(sh_index(e.l, e.m_up));
    if (e.c_dn != 0.0) a += e.c_dn * c.dn(sh_index(e.l, e.m_dn));
    psi.coeffs()(static_cast<Eigen::Index>(k)) = a;
  }
  return psi;
}

void SpectralTransform::synthesize_component(const Eigen::VectorXcd& c, const std::vector<double>& table,
                                             bool phi_derivative, Eigen::VectorXcd& out) const {
  const std::size_t ntri = tri(lmax_, lmax_) + 1;
  const int nm = 2 * lmax_ + 1;
  Eigen::VectorXcd g(nm);
  out.resize(static_cast<Eigen::Index>(grid_.size()));
  for (int i = 0; i < grid_.n_lat; ++i) {
    const double* p = &table[static_cast<std::size_t>(i) * ntri];
    for (int m = -lmax_; m <= lmax_; ++m) {
      cplx acc = 0.0;
      for (int l = std::abs(m); l <= lmax_; ++l) acc += c(sh_index(l, m)) * signed_legendre(p, l, m);
      if (phi_derivative) acc *= cplx(0.0, m / grid_.sin_theta[static_cast<std::size_t>(i)]);
      g(m + lmax_) = acc;
    }
    out.segment(static_cast<Eigen::Index>(grid_.node(i, 0)), grid_.n_lon) = fourier_ * g;
  }
}

GridSpinor SpectralTransform::synthesize(const SpectralSpinor& psi) const {
  const ComponentCoeffs c = to_components(psi);
  GridSpinor f;
  synthesize_component(c.up, legendre_, false, f.up);
  synthesize_component(c.dn, legendre_, false, f.dn);
  return f;
}

SpectralSpinor SpectralTransform::analyze(const GridSpinor& f) const {
  if (f.size() != grid_.size()) throw DomainError("grid spinor does not match the transform grid");
  const std::size_t ntri = tri(lmax_, lmax_) + 1;
  const auto n = static_cast<Eigen::Index>((lmax_ + 1) * (lmax_ + 1));
  ComponentCoeffs c{Eigen::VectorXcd::Zero(n), Eigen::VectorXcd::Zero(n)};
  const double dphi = 2.0 * std::numbers::pi / grid_.n_lon;
  const Eigen::MatrixXcd adjoint = fourier_.adjoint();
  for (int i = 0; i < grid_.n_lat; ++i) {
    const double* p = &legendre_[static_cast<std::size_t>(i) * ntri];
    const double w = grid_.lat_weights[static_cast<std::size_t>(i)] * dphi;
    const auto seg = static_cast<Eigen::Index>(grid_.node(i, 0));
    const Eigen::VectorXcd gu = adjoint * f.up.segment(seg, grid_.n_lon);
    const Eigen::VectorXcd gd = adjoint * f.dn.segment(seg, grid_.n_lon);
    for (int m = -lmax_; m <= lmax_; ++m) {
      for (int l = std::abs(m); l <= lmax_; ++l) {
        const double pw = w * signed_legendre(p, l, m);
        c.up(sh_index(l, m)) += pw * gu(m + lmax_);
        c.dn(sh_index(l, m)) += pw * gd(m + lmax_);
      }
    }
  }
  return from_components(c);
}

std::array<GridSpinor, 3> SpectralTransform::gradient(const SpectralSpinor& psi) const {
  const ComponentCoeffs c = to_components(psi);
  GridSpinor dtheta;
  GridSpinor dphi;
  synthesize_component(c.up, dlegendre_, false, dtheta.up);
  synthesize_component(c.dn, dlegendre_, false, dtheta.dn);
  synthesize_component(c.up, legendre_, true, dphi.up);
  synthesize_component(c.dn, legendre_, true, dphi.dn);
  std::array<GridSpinor, 3> grad;
  for (auto& g : grad) g = GridSpinor::zero(grid_.size());
  for (int i = 0; i < grid_.n_lat; ++i) {
    const double ct = grid_.cos_theta[static_cast<std::size_t>(i)];
    const double st = grid_.sin_theta[static_cast<std::size_t>(i)];
    for (int j = 0; j < grid_.n_lon; ++j) {
      const double ph = grid_.phi[static_cast<std::size_t>(j)];
      const Eigen::Vector3d et(ct * std::cos(ph), ct * std::sin(ph), -st);
      const Eigen::Vector3d ep(-std::sin(ph), std::cos(ph), 0.0);
      const auto n = static_cast<Eigen::Index>(grid_.node(i, j));
      for (int a = 0; a < 3; ++a) {
        grad[static_cast<std::size_t>(a)].up(n) = et(a) * dtheta.up(n) + ep(a) * dphi.up(n);
        grad[static_cast<std::size_t>(a)].dn(n) = et(a) * dtheta.dn(n) + ep(a) * dphi.dn(n);
      }
    }
  }
  return grad;
}

GridSpinor SpectralTransform::laplacian(const SpectralSpinor& psi) const {
  ComponentCoeffs c = to_components(psi);
  for (int l = 0; l <= lmax_; ++l) {
    for (int m = -l; m <= l; ++m) {
      c.up(sh_index(l, m)) *= -static_cast<double>(l) * (l + 1);
      c.dn(sh_index(l, m)) *= -static_cast<double>(l) * (l + 1);
    }
  }
  GridSpinor f;
  synthesize_component(c.up, legendre_, false, f.up);
  synthesize_component(c.dn, legendre_, false, f.dn);
  return f;
}

// --- pointwise evaluation ---------------------------------------------------

namespace {

struct PointHarmonics {
  int lmax;
  std::vector<double> p;
  double phi;
};

PointHarmonics point_harmonics(int lmax, const Eigen::Vector3d& x) {
  const Eigen::Vector3d u = x.normalized();
  const double ct = std::clamp(u.z(), -1.0, 1.0);
  const double st = std::hypot(u.x(), u.y());
  PointHarmonics h{lmax, std::vector<double>(tri(lmax, lmax) + 1), std::atan2(u.y(), u.x())};
  legendre(lmax, ct, st, h.p.data(), nullptr);
  return h;
}

cplx ylm(const PointHarmonics& h, int l, int m) { return signed_legendre(h.p.data(), l, m) * std::polar(1.0, m * h.phi); }

SpinorValue eval_entry(const PointHarmonics& h, const BasisIndex& k) {
  const ComponentEntry e = component_entry(k);
  SpinorValue v = SpinorValue::Zero();
  if (e.c_up != 0.0) v(0) = e.c_up * ylm(h, e.l, e.m_up);
  if (e.c_dn != 0.0) v(1) = e.c_dn * ylm(h, e.l, e.m_dn);
  return v;
}

}  // namespace

cplx scalar_harmonic(int l, int m, const Eigen::Vector3d& x) {
  if (l < 0 || m < -l || m > l) throw DomainError("scalar_harmonic: need |m| <= l");
  return ylm(point_harmonics(l, x), l, m);
}

SpinorValue eigenspinor_eval(const BasisIndex& k, const Eigen::Vector3d& x) {
  return eval_entry(point_harmonics(k.level + 1, x), k);
}

SpinorValue evaluate(const SpectralSpinor& psi, const Eigen::Vector3d& x) {
  const PointHarmonics h = point_harmonics(psi.truncation() + 1, x);
  SpinorValue v = SpinorValue::Zero();
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const cplx a = psi.coeffs()(static_cast<Eigen::Index>(k));
    if (a != cplx(0.0, 0.0)) v += a * eval_entry(h, basis_index(k));
  }
  return v;
}

// --- coefficient files ------------------------------------------------------

void write_coefficients(std::ostream& out, const SpectralSpinor& psi) {
  out << "# spinorsurf spectral coefficients\n";
  out << "version " << kCoefficientFileVersion << "\n";
  out << "truncation " << psi.truncation() << "\n";
  out << "count " << psi.size() << "\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const BasisIndex b = basis_index(k);
    const cplx a = psi.coeffs()(static_cast<Eigen::Index>(k));
    out << b.level << ' ' << (b.sign > 0 ? "+1" : "-1") << ' ' << b.degeneracy << ' ' << a.real() << ' ' << a.imag()
        << '\n';
  }
}

SpectralSpinor read_coefficients(std::istream& in) {
  std::string line;
  int version = -1;
  int truncation = -1;
  long long count = -1;
  auto next_content = [&](std::string& l) {
    while (std::getline(in, l)) {
      if (!l.empty() && l[0] != '#') return true;
    }
    return false;
  };
  for (int field = 0; field < 3; ++field) {
    if (!next_content(line)) throw ConfigError("coefficient file: truncated header");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "version") {
      ss >> version;
    } else if (key == "truncation") {
      ss >> truncation;
    } else if (key == "count") {
      ss >> count;
    } else {
      throw ConfigError("coefficient file: unexpected header key '" + key + "'");
    }
  }
  if (version != kCoefficientFileVersion) throw ConfigError("coefficient file: unsupported version");
  if (truncation < 0 || count != static_cast<long long>(basis_size(truncation))) {
    throw ConfigError("coefficient file: count does not match truncation");
  }
  SpectralSpinor psi(truncation);
  for (long long r = 0; r < count; ++r) {
    if (!next_content(line)) throw ConfigError("coefficient file: missing rows");
    std::istringstream ss(line);
    int j = 0;
    int s = 0;
    int d = 0;
    double re = 0.0;
    double im = 0.0;
    if (!(ss >> j >> s >> d >> re >> im)) throw ConfigError("coefficient file: malformed row '" + line + "'");
    const BasisIndex k{j, s, d};
    if (j < 0 || j > truncation || (s != 1 && s != -1) || d < 0 || d >= 2 * j + 2) {
      throw ConfigError("coefficient file: index out of range in row '" + line + "'");
    }
    psi[k] = cplx(re, im);
  }
  return psi;
}

void save_coefficients(const std::string& path, const SpectralSpinor& psi) {
  write_atomic(path, [&](std::ostream& out) { write_coefficients(out, psi); });
}

SpectralSpinor load_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coefficient file '" + path + "'");
  return read_coefficients(in);
}

}  // namespace spinorsurf
