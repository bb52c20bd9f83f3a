#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <unistd.h>

#include <doctest.h>

#include "spinorsurf/clifford.hpp"
#include "spinorsurf/geometry_out.hpp"

using namespace spinorsurf;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

SpectralSpinor killing(int J) { return SpectralSpinor::basis(J, BasisIndex{0, +1, 0}, std::sqrt(4 * kPi)); }

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("spinorsurf_" + name + "_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("nodal analysis of the Killing solution") {
  const EnergyFunctional e(6, CurvatureField::constant(1.0));
  const NodalReport r = nodal_analysis(e, killing(6));
  CHECK(r.min_abs == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.max_abs == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.zeros == 0);
  CHECK(r.zero_free());
  CHECK(r.willmore == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(r.energy == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(std::abs(r.bound) <= 1e-12);
  CHECK(r.energy_below_threshold);
}

TEST_CASE("nodal analysis finds planted zeros") {
  // The j = 1 eigenspinor with d = 0 vanishes to first order at both poles.
  const SpectralSpinor z = SpectralSpinor::basis(3, BasisIndex{1, +1, 0});
  const EnergyFunctional e(3, CurvatureField::constant(1.0));
  const NodalReport r = nodal_analysis(e, z);
  CHECK(r.verdict == "zeros");
  CHECK(r.zeros == 2);
  int at_poles = 0;
  for (const auto& c : r.candidates) {
    if (!c.resolved) continue;
    if (std::abs(std::abs(c.x.z()) - 1.0) < 1e-6) ++at_poles;
    CHECK(c.order == doctest::Approx(1.0).epsilon(0.05));
    CHECK(c.abs_value <= 1e-6 * r.max_abs);
  }
  CHECK(at_poles == 2);
  CHECK(r.min_abs <= 1e-6 * r.max_abs);
}

TEST_CASE("zero-count bound") {
  CHECK(zero_count_bound(0.0, 4 * kPi) == doctest::Approx(0.0));
  double prev = -1e300;
  for (double w = 0.0; w < 40.0; w += 1.5) {
    const double b = zero_count_bound(1.0, w);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK(zero_count_bound(2.0, 8 * kPi) == doctest::Approx(3.0));
}

TEST_CASE("scalar curvature identity") {
  const EnergyFunctional e(6, CurvatureField::constant(1.0));
  const ScalReport s = scal_identity_check(e, killing(6));
  CHECK(s.l1_residual <= 1e-10 * s.l1_scale);
  CHECK(s.mean_scal == doctest::Approx(2.0).epsilon(1e-10));

  // A random non-solution violates it; the preconditions must be waived.
  std::mt19937_64 rng(51);
  SpectralSpinor psi = killing(6);
  psi += 0.2 * random_spinor(6, rng);
  CHECK_THROWS_AS(scal_identity_check(e, psi), DomainError);
  ScalOptions loose;
  loose.enforce_preconditions = false;
  const ScalReport bad = scal_identity_check(e, psi, loose);
  CHECK(bad.l1_residual >= 0.1 * bad.l1_scale);
}

TEST_CASE("Willmore energy") {
  const EnergyFunctional e(6, CurvatureField::constant(1.0));
  const WillmoreReport w = willmore(e, killing(6));
  CHECK(w.W == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(w.g1_area == doctest::Approx(4 * kPi).epsilon(1e-12));
  CHECK(w.embedded);

  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  A(2, 2) = 0.3;
  const EnergyFunctional q(6, CurvatureField::polynomial(1.0, Eigen::Vector3d::Zero(), A));
  std::mt19937_64 rng(52);
  for (int t = 0; t < 10; ++t) {
    const SpectralSpinor psi = random_spinor(6, rng);
    const WillmoreReport r = willmore(q, psi);
    CHECK(r.W <= r.qmax_bound * (1 + 1e-12));
    CHECK(std::abs(r.W - r.g1_integral) <= 1e-12 * r.W);
  }
}

TEST_CASE("icosphere and discrete curvature") {
  CHECK_THROWS_AS(icosphere(-1), DomainError);
  CHECK_THROWS_AS(icosphere(9), DomainError);
  for (int level : {0, 2, 4}) {
    const TriangleMesh m = icosphere(level);
    CHECK(m.vertices.size() == static_cast<std::size_t>(10 * (1 << (2 * level)) + 2));
    const MeshDiagnostics d = mesh_diagnostics(m);
    CHECK(d.euler_characteristic == 2);
    CHECK(d.gauss_bonnet == doctest::Approx(4 * kPi).epsilon(1e-10));
    for (const auto& v : m.vertices) CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-15));
  }
  const TriangleMesh m = icosphere(4);
  CHECK(m.vertices.size() == 2562);
  std::vector<double> H, area;
  discrete_mean_curvature(m, H, area);
  for (double h : H) CHECK(h == doctest::Approx(1.0).epsilon(0.01));
  double total = 0.0;
  for (double a : area) total += a;
  CHECK(total == doctest::Approx(mesh_diagnostics(m).area).epsilon(1e-12));
  CHECK(total == doctest::Approx(4 * kPi).epsilon(0.01));

  // Reversing the orientation does not change the sign convention.
  TriangleMesh flipped = m;
  for (auto& t : flipped.triangles) std::swap(t[1], t[2]);
  std::vector<double> H2;
  discrete_mean_curvature(flipped, H2, area);
  for (std::size_t i = 0; i < H.size(); ++i) CHECK(H2[i] == doctest::Approx(H[i]).epsilon(1e-12));
}

TEST_CASE("Weierstrass matrix is conformal") {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const SpinorValue psi(cplx(g(rng), g(rng)), cplx(g(rng), g(rng)));
    const Eigen::Matrix3d M = weierstrass_matrix(psi);
    const double n4 = std::pow(psi.squaredNorm(), 2);
    CHECK((M.transpose() * M - n4 * Eigen::Matrix3d::Identity()).norm() <= 1e-12 * n4);
    CHECK(M.determinant() > 0.0);
  }
}

TEST_CASE("immersion of the Killing solution is the round sphere") {
  ImmersionOptions o;
  o.level = 3;
  const ImmersionMesh im = reconstruct_immersion(killing(4), CurvatureField::constant(1.0), o);
  CHECK(im.circulation <= 1e-12);
  CHECK(im.center.norm() <= 1e-12);
  CHECK(im.mean_radius == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(im.max_radial_deviation <= 1e-10);
  CHECK(im.h_relative_l2 <= 0.01);
  CHECK(im.euler_characteristic == 2);
  CHECK(im.gauss_bonnet == doctest::Approx(4 * kPi).epsilon(1e-10));
  for (double f : im.conformal_factor) CHECK(f == doctest::Approx(1.0).epsilon(1e-12));

  const fs::path dir = scratch_dir("mesh");
  const std::string obj = (dir / "m.obj").string();
  const std::string ply = (dir / "m.ply").string();
  export_mesh(im, obj, mesh_format_from_path(obj));
  export_mesh(im, ply, mesh_format_from_path(ply));
  for (const LoadedMesh& l : {read_obj(obj), read_ply(ply)}) {
    CHECK(l.mesh.vertices == im.mesh.vertices);
    CHECK(l.mesh.triangles == im.mesh.triangles);
    CHECK(l.mean_curvature == im.mean_curvature);
    CHECK(l.target_q == im.target_q);
    CHECK(l.conformal_factor == im.conformal_factor);
  }
  std::ifstream in(obj);
  std::string line;
  std::size_t v = 0, f = 0;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  CHECK(v == im.mesh.vertices.size());
  CHECK(f == im.mesh.triangles.size());
  std::ifstream pin(ply);
  std::stringstream head;
  head << pin.rdbuf();
  CHECK(head.str().rfind("ply\nformat ascii 1.0\n", 0) == 0);
  CHECK(head.str().find("property double mean_curvature") != std::string::npos);
  CHECK_THROWS_AS(mesh_format_from_path((dir / "m.stl").string()), ConfigError);
  CHECK_THROWS_AS(read_obj((dir / "missing.obj").string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("immersion refuses non-solutions and zeros") {
  std::mt19937_64 rng(54);
  SpectralSpinor psi = killing(6);
  psi += 0.1 * random_spinor(6, rng);
  ImmersionOptions o;
  o.level = 2;
  CHECK_THROWS_AS(reconstruct_immersion(psi, CurvatureField::constant(1.0), o), PeriodError);
  const SpectralSpinor z = SpectralSpinor::basis(3, BasisIndex{1, +1, 0});
  CHECK_THROWS_AS(reconstruct_immersion(z, CurvatureField::constant(1.0), o), DomainError);
}
