#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spinorsurf/energy.hpp"
#include "spinorsurf/errors.hpp"

namespace spinorsurf {

/// The Weierstrass 1-form did not integrate to a closed surface.
class PeriodError : public Error {
 public:
  PeriodError(const std::string& what, double defect) : Error(what), defect_(defect) {}
  double defect() const { return defect_; }

 private:
  double defect_;
};

// ---------------------------------------------------------------------------
// Zero set.
// ---------------------------------------------------------------------------

struct ZeroCandidate {
  Eigen::Vector3d x;
  double abs_value = 0.0;
  double order = 0.0;  // slope of log|psi| against log(distance)
  bool resolved = false;
};

struct NodalOptions {
  double genus = 0.0;
  double candidate_threshold = 0.5;  // local minima of |psi| below this fraction of max|psi|
  double zero_tolerance = 1e-6;      // refined |psi| below this (relative) counts as a zero
};

struct NodalReport {
  double min_abs = 0.0;
  Eigen::Vector3d min_location = Eigen::Vector3d::UnitZ();
  double max_abs = 0.0;
  std::vector<ZeroCandidate> candidates;
  int zeros = 0;
  double willmore = 0.0;          // int Q^2 |psi|^4
  double energy = 0.0;            // int Q |psi|^4
  double bound = 0.0;             // genus - 1 + int Q^2 |psi|^4 / (4 pi)
  double qmax_bound = 0.0;        // genus - 1 + Q_max int Q |psi|^4 / (4 pi)
  bool energy_below_threshold = false;  // int Q |psi|^4 < 8 pi / Q_max
  std::string verdict;            // "zero-free", "zeros", "inconclusive"
  std::string suggestion;

  bool zero_free() const { return verdict == "zero-free"; }
  nlohmann::json to_json() const;
};

/// Bound on the number of zeros of a solution on a surface of genus g.
double zero_count_bound(double genus, double willmore_integral);

NodalReport nodal_analysis(const EnergyFunctional& energy, const SpectralSpinor& psi, const NodalOptions& opts = {});

// ---------------------------------------------------------------------------
// Scalar curvature of g_1 = |psi|^4 g versus the spinorial expression.
// ---------------------------------------------------------------------------

struct ScalOptions {
  bool enforce_preconditions = true;
  double equation_tolerance = 1e-6;  // E*-residual of D psi = Q |psi|^2 psi
};

struct ScalReport {
  double equation_residual = 0.0;
  double min_abs = 0.0;
  double max_residual = 0.0;  // sup over nodes |Scal_1 - rhs|
  double l1_residual = 0.0;   // int |Scal_1 - rhs| dvol_{g_1}
  double l1_scale = 0.0;      // int |Scal_1| dvol_{g_1}
  double mean_scal = 0.0;     // area-weighted mean of Scal_1 in g_1
  Eigen::VectorXd lhs;
  Eigen::VectorXd rhs;

  nlohmann::json to_json() const;
};

/// Scal_{g_1} = 2 Q^2 - 4 sum_k |nabla_{e_k} phi + (Q/2) e_k . phi|^2 with
/// phi the unit spinor of g_1 built from psi. The left side comes from the
/// conformal factor alone.
ScalReport scal_identity_check(const EnergyFunctional& energy, const SpectralSpinor& psi,
                               const ScalOptions& opts = {});

// ---------------------------------------------------------------------------
// Willmore energy.
// ---------------------------------------------------------------------------

struct WillmoreReport {
  double W = 0.0;               // int Q^2 |psi|^4 = Willmore energy of the immersion
  double qmax_bound = 0.0;      // Q_max int Q |psi|^4
  double g1_area = 0.0;         // int |psi|^4
  double g1_integral = 0.0;     // int Q^2 dvol_{g_1}, the same integral after the change of measure
  bool embedded = false;        // W < 8 pi
  nlohmann::json to_json() const;
};

WillmoreReport willmore(const EnergyFunctional& energy, const SpectralSpinor& psi);

// ---------------------------------------------------------------------------
// Immersion.
// ---------------------------------------------------------------------------

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// Subdivided icosahedron projected to the unit sphere; 10 * 4^level + 2 vertices.
TriangleMesh icosphere(int level);

struct MeshDiagnostics {
  double area = 0.0;
  double volume = 0.0;
  double gauss_bonnet = 0.0;   // sum of angle defects
  int euler_characteristic = 0;
};

/// Cotangent-Laplacian mean curvature with mixed Voronoi areas. The sign is
/// positive for a convex surface oriented by its enclosed volume.
void discrete_mean_curvature(const TriangleMesh& mesh, std::vector<double>& H, std::vector<double>& vertex_area);
MeshDiagnostics mesh_diagnostics(const TriangleMesh& mesh);

struct ImmersionMesh {
  TriangleMesh mesh;                      // immersed surface in R^3
  std::vector<Eigen::Vector3d> domain;    // preimages on S^2
  std::vector<double> conformal_factor;   // |psi|^4
  std::vector<double> mean_curvature;     // discrete H
  std::vector<double> target_q;           // Q at the preimage
  std::vector<double> vertex_area;

  // reconstruction quality
  double period_defect = 0.0;      // max edge mismatch after the least-squares solve
  double circulation = 0.0;        // max |sum of edge integrals| around a triangle
  double mean_edge = 0.0;
  double h_relative_l2 = 0.0;      // || H - Q || / || Q || with vertex areas
  double edge_length_error = 0.0;  // max relative mismatch of chord vs g_1 length
  double gauss_bonnet = 0.0;
  int euler_characteristic = 0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double mean_radius = 0.0;
  double max_radial_deviation = 0.0;  // max | |x - c| - mean radius |

  nlohmann::json to_json() const;
};

struct ImmersionOptions {
  int level = 4;                 // icosphere subdivision level (2562 vertices)
  int edge_quadrature = 8;       // Gauss-Legendre points per edge
  double min_abs = 1e-3;         // refuse when |psi| falls below this anywhere sampled
  double period_tolerance = 1e-6;  // relative circulation allowed before refusing
};

/// Integrates d Pi(X) = (psi^H sigma.X psi, Re psi^T eps sigma.X psi, Im psi^T eps sigma.X psi),
/// eps = i sigma_y, over the edges of an icosphere and solves for vertex
/// positions in the least-squares sense. |d Pi(X)| = |psi|^2 |X|, so Pi is
/// conformal with factor |psi|^4; it is closed when psi solves the equation.
ImmersionMesh reconstruct_immersion(const SpectralSpinor& psi, const CurvatureField& Q,
                                    const ImmersionOptions& opts = {});

/// The 3x3 matrix of d Pi at a spinor value.
Eigen::Matrix3d weierstrass_matrix(const SpinorValue& psi);

enum class MeshFormat { obj, ply };
MeshFormat mesh_format_from_path(const std::string& path);

/// OBJ: "v x y z" at 17 significant digits, then one "# vd H Q factor" comment
/// line per vertex, then 1-based faces. PLY: ASCII with double x, y, z and
/// double properties mean_curvature, target_q, conformal_factor.
void export_mesh(const ImmersionMesh& mesh, const std::string& path, MeshFormat format);

struct LoadedMesh {
  TriangleMesh mesh;
  std::vector<double> mean_curvature;
  std::vector<double> target_q;
  std::vector<double> conformal_factor;
};

LoadedMesh read_obj(const std::string& path);
LoadedMesh read_ply(const std::string& path);

}  // namespace spinorsurf
