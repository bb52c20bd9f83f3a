#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spinorsurf/clifford.hpp"

namespace spinorsurf {

// ---------------------------------------------------------------------------
// Spectrum of the Dirac operator on the round S^m.
//
// Eigenvalues are +-(m/2 + j), j >= 0, each with multiplicity
// 2^[m/2] * binom(j + m - 1, j). The multiplicity formula is usually quoted
// with a free dimension symbol "n"; it is read here as the sphere dimension m,
// which reproduces the classical 2(j + 1) for S^2.
// ---------------------------------------------------------------------------

double dirac_eigenvalue(int dim, int level, int sign);
long long dirac_multiplicity(int dim, int level);

/// Index of an eigenspinor on S^2.
///
/// Level j carries eigenvalue sign * (1 + j). Within a level the degeneracy
/// index d in [0, 2j + 2) enumerates the magnetic quantum number
/// mu = d - (j + 1/2) of total angular momentum j + 1/2 in increasing order.
/// Coefficient vectors are ordered by (j ascending, sign + before -, d).
/// This ordering is convention version 1 of the coefficient file format.
struct BasisIndex {
  int level = 0;
  int sign = 1;
  int degeneracy = 0;

  bool operator==(const BasisIndex&) const = default;
};

/// Number of coefficients for truncation level J: 2 (J + 1)(J + 2).
std::size_t basis_size(int truncation);
std::size_t basis_position(const BasisIndex& k);
BasisIndex basis_index(std::size_t position);
double eigenvalue(const BasisIndex& k);

/// Eigenvalues lambda_k for all coefficients up to truncation J.
Eigen::VectorXd eigenvalues(int truncation);

/// Spinor field on S^2 expanded in the Dirac eigenbasis.
class SpectralSpinor {
 public:
  SpectralSpinor() = default;
  explicit SpectralSpinor(int truncation);
  SpectralSpinor(int truncation, Eigen::VectorXcd coeffs);

  static SpectralSpinor basis(int truncation, const BasisIndex& k, cplx value = 1.0);

  int truncation() const { return truncation_; }
  std::size_t size() const { return static_cast<std::size_t>(coeffs_.size()); }
  const Eigen::VectorXcd& coeffs() const { return coeffs_; }
  Eigen::VectorXcd& coeffs() { return coeffs_; }

  cplx operator[](const BasisIndex& k) const { return coeffs_(static_cast<Eigen::Index>(basis_position(k))); }
  cplx& operator[](const BasisIndex& k) { return coeffs_(static_cast<Eigen::Index>(basis_position(k))); }

  /// Positive (E+) and negative (E-) spectral parts as coefficient masks.
  SpectralSpinor plus() const;
  SpectralSpinor minus() const;

  /// Zero-padded or truncated copy at another level.
  SpectralSpinor resized(int truncation) const;

  bool is_zero() const { return coeffs_.squaredNorm() == 0.0; }

  SpectralSpinor& operator+=(const SpectralSpinor& o);
  SpectralSpinor& operator-=(const SpectralSpinor& o);
  SpectralSpinor& operator*=(cplx s);

 private:
  int truncation_ = -1;
  Eigen::VectorXcd coeffs_;
};

SpectralSpinor operator+(SpectralSpinor a, const SpectralSpinor& b);
SpectralSpinor operator-(SpectralSpinor a, const SpectralSpinor& b);
SpectralSpinor operator*(cplx s, SpectralSpinor a);
SpectralSpinor operator*(double s, SpectralSpinor a);

/// a_k -> lambda_k a_k.
SpectralSpinor dirac_apply(const SpectralSpinor& psi);

/// <psi, phi> = sum |lambda_k| Re(a_k conj(b_k)), the H^{1/2} inner product.
double h_half_inner(const SpectralSpinor& psi, const SpectralSpinor& phi);
double h_half_norm2(const SpectralSpinor& psi);

/// Real L^2 inner product Re int (psi, phi).
double l2_inner(const SpectralSpinor& psi, const SpectralSpinor& phi);

/// int (D psi, psi) = sum lambda_k |a_k|^2.
double dirac_action(const SpectralSpinor& psi);

/// (psi+, psi-).
std::pair<SpectralSpinor, SpectralSpinor> split(const SpectralSpinor& psi);

// ---------------------------------------------------------------------------
// Quadrature and grid values.
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

/// Gauss-Legendre in cos(colatitude) times uniform longitude.
///
/// A grid of degree L integrates every spherical harmonic of degree <= L
/// exactly; weights sum to 4 pi.
struct QuadratureGrid {
  int degree = 0;
  int n_lat = 0;
  int n_lon = 0;
  std::vector<double> cos_theta;
  std::vector<double> sin_theta;
  std::vector<double> lat_weights;
  std::vector<double> phi;
  std::vector<Eigen::Vector3d> nodes;
  Eigen::VectorXd weights;

  static QuadratureGrid gauss(int degree);

  std::size_t size() const { return nodes.size(); }
  std::size_t node(int lat, int lon) const {
    return static_cast<std::size_t>(lat) * static_cast<std::size_t>(n_lon) + static_cast<std::size_t>(lon);
  }
  /// Typical geodesic node spacing, pi / n_lat.
  double spacing() const;
};

/// Stereographic chart coordinates of a point: north chart sends e_z to 0
/// (projection from the south pole), south chart sends -e_z to 0.
Eigen::Vector2d north_chart(const Eigen::Vector3d& x);
Eigen::Vector2d south_chart(const Eigen::Vector3d& x);

/// C^2-valued samples on a quadrature grid, in the ambient trivialization.
struct GridSpinor {
  Eigen::VectorXcd up;
  Eigen::VectorXcd dn;

  static GridSpinor zero(std::size_t n);
  std::size_t size() const { return static_cast<std::size_t>(up.size()); }
  SpinorValue at(std::size_t i) const { return {up(static_cast<Eigen::Index>(i)), dn(static_cast<Eigen::Index>(i))}; }
  void set(std::size_t i, const SpinorValue& v) {
    up(static_cast<Eigen::Index>(i)) = v(0);
    dn(static_cast<Eigen::Index>(i)) = v(1);
  }
  /// Pointwise |psi|^2.
  Eigen::VectorXd norm2() const;
};

/// Real-valued quadrature integral sum_i w_i f_i.
double integrate(const QuadratureGrid& grid, const Eigen::VectorXd& f);

/// Basis <-> grid transforms for a fixed truncation.
///
/// Eigenspinors are spinor spherical harmonics of total angular momentum
/// j + 1/2 in the ambient trivialization of the spinor bundle (restriction of
/// the trivial C^2 bundle of R^3), where the Dirac operator reads
/// D = 1 + sigma.L with L = -i x cross grad. Constant spinors are Killing
/// spinors of unit Killing number and span level 0 with sign +.
class SpectralTransform {
 public:
  SpectralTransform(int truncation, QuadratureGrid grid);

  int truncation() const { return truncation_; }
  const QuadratureGrid& grid() const { return grid_; }

  GridSpinor synthesize(const SpectralSpinor& psi) const;
  SpectralSpinor analyze(const GridSpinor& f) const;

  /// Tangential gradient of each component at the nodes, ambient x, y, z parts.
  std::array<GridSpinor, 3> gradient(const SpectralSpinor& psi) const;

  /// Componentwise Laplace-Beltrami operator of the trivialized field.
  GridSpinor laplacian(const SpectralSpinor& psi) const;

 private:
  struct ComponentCoeffs {
    Eigen::VectorXcd up;
    Eigen::VectorXcd dn;
  };
  ComponentCoeffs to_components(const SpectralSpinor& psi) const;
  SpectralSpinor from_components(const ComponentCoeffs& c) const;
  void synthesize_component(const Eigen::VectorXcd& c, const std::vector<double>& table, bool phi_derivative,
                            Eigen::VectorXcd& out) const;

  int truncation_;
  int lmax_;
  QuadratureGrid grid_;
  std::vector<double> legendre_;   // [lat][tri(l,m)]
  std::vector<double> dlegendre_;  // d/dtheta
  Eigen::MatrixXcd fourier_;       // [lon][m + lmax]
};

/// Orthonormal scalar spherical harmonic Y_l^m with the Condon-Shortley phase.
cplx scalar_harmonic(int l, int m, const Eigen::Vector3d& x);

/// Value of a single eigenspinor at a point of S^2.
SpinorValue eigenspinor_eval(const BasisIndex& k, const Eigen::Vector3d& x);

/// Value of an expanded field at an arbitrary point of S^2.
SpinorValue evaluate(const SpectralSpinor& psi, const Eigen::Vector3d& x);

// ---------------------------------------------------------------------------
// Coefficient files.
//
//   # spinorsurf spectral coefficients
//   version 1
//   truncation <J>
//   count <N>
//   <j> <sign> <degeneracy> <re> <im>      (N rows, 17 significant digits)
// ---------------------------------------------------------------------------

inline constexpr int kCoefficientFileVersion = 1;

void write_coefficients(std::ostream& out, const SpectralSpinor& psi);
SpectralSpinor read_coefficients(std::istream& in);
void save_coefficients(const std::string& path, const SpectralSpinor& psi);
SpectralSpinor load_coefficients(const std::string& path);

}  // namespace spinorsurf
