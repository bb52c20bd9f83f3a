#include "spinorsurf/geometry_out.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "spinorsurf/clifford.hpp"
#include "spinorsurf/io.hpp"

namespace spinorsurf {

namespace {

constexpr double kPi = std::numbers::pi;

std::pair<Eigen::Vector3d, Eigen::Vector3d> tangent_frame(const Eigen::Vector3d& x) {
  const Eigen::Vector3d ref = std::abs(x.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d e1 = (ref - ref.dot(x) * x).normalized();
  return {e1, x.cross(e1)};
}

Eigen::Vector3d offset_point(const Eigen::Vector3d& x, const Eigen::Vector3d& e1, const Eigen::Vector3d& e2,
                             double s1, double s2) {
  return (x + s1 * e1 + s2 * e2).normalized();
}

Eigen::Vector4d real_parts(const SpinorValue& v) { return {v(0).real(), v(0).imag(), v(1).real(), v(1).imag()}; }

// Levenberg-Marquardt on psi: R^2 -> R^4 in a moving tangent chart.
Eigen::Vector3d refine_minimum(const SpectralSpinor& psi, Eigen::Vector3d x, double scale) {
  const double h = 1e-7;
  double mu = 1e-6;
  Eigen::Vector4d r = real_parts(evaluate(psi, x));
  for (int it = 0; it < 60; ++it) {
    const auto [e1, e2] = tangent_frame(x);
    Eigen::Matrix<double, 4, 2> J;
    J.col(0) = (real_parts(evaluate(psi, offset_point(x, e1, e2, h, 0))) -
                real_parts(evaluate(psi, offset_point(x, e1, e2, -h, 0)))) / (2 * h);
    J.col(1) = (real_parts(evaluate(psi, offset_point(x, e1, e2, 0, h))) -
                real_parts(evaluate(psi, offset_point(x, e1, e2, 0, -h)))) / (2 * h);
    const Eigen::Matrix2d JtJ = J.transpose() * J;
    const Eigen::Vector2d g = J.transpose() * r;
    bool moved = false;
    for (int k = 0; k < 12; ++k) {
      const Eigen::Matrix2d M = JtJ + mu * (JtJ.diagonal().maxCoeff() + 1e-300) * Eigen::Matrix2d::Identity();
      Eigen::Vector2d s = -M.ldlt().solve(g);
      if (s.norm() > 0.1) s *= 0.1 / s.norm();
      const Eigen::Vector3d xn = offset_point(x, e1, e2, s(0), s(1));
      const Eigen::Vector4d rn = real_parts(evaluate(psi, xn));
      if (rn.norm() < r.norm()) {
        x = xn;
        r = rn;
        mu = std::max(mu / 10, 1e-12);
        moved = s.norm() > 1e-14;
        break;
      }
      mu *= 10;
    }
    if (!moved || r.norm() < 1e-15 * scale) break;
  }
  return x;
}

// Slope of log(mean |psi| on a small circle) against log(radius).
double vanishing_order(const SpectralSpinor& psi, const Eigen::Vector3d& x) {
  const auto [e1, e2] = tangent_frame(x);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = 5;
  for (int k = 0; k < n; ++k) {
    const double d = 1e-3 * std::pow(2.0, k);
    double mean = 0;
    for (int a = 0; a < 8; ++a) {
      const double t = 2 * kPi * a / 8;
      mean += evaluate(psi, offset_point(x, e1, e2, d * std::cos(t), d * std::sin(t))).norm();
    }
    mean /= 8;
    const double lx = std::log(d);
    const double ly = std::log(std::max(mean, 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d arc_point(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double theta, double s) {
  if (theta < 1e-12) return a;
  return (std::sin((1 - s) * theta) * a + std::sin(s * theta) * b) / std::sin(theta);
}

Eigen::Vector3d arc_velocity(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double theta, double s) {
  if (theta < 1e-12) return b - a;
  return theta * (-std::cos((1 - s) * theta) * a + std::cos(s * theta) * b) / std::sin(theta);
}

double triangle_angle(const Eigen::Vector3d& at, const Eigen::Vector3d& p, const Eigen::Vector3d& q) {
  const Eigen::Vector3d u = p - at;
  const Eigen::Vector3d v = q - at;
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

double cot_at(const Eigen::Vector3d& at, const Eigen::Vector3d& p, const Eigen::Vector3d& q) {
  const Eigen::Vector3d u = p - at;
  const Eigen::Vector3d v = q - at;
  return u.dot(v) / std::max(u.cross(v).norm(), 1e-300);
}

double signed_volume(const TriangleMesh& mesh) {
  double vol = 0;
  for (const auto& t : mesh.triangles) {
    vol += mesh.vertices[static_cast<std::size_t>(t[0])].dot(
               mesh.vertices[static_cast<std::size_t>(t[1])].cross(mesh.vertices[static_cast<std::size_t>(t[2])])) /
           6.0;
  }
  return vol;
}

std::size_t edge_count(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)];
      const int b = t[static_cast<std::size_t>((k + 1) % 3)];
      edges.emplace(std::minmax(a, b), 0);
    }
  }
  return edges.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// Zero set.
// ---------------------------------------------------------------------------

nlohmann::json NodalReport::to_json() const {
  nlohmann::json j;
  j["min_abs"] = min_abs;
  j["min_location"] = vec_json(min_location);
  j["max_abs"] = max_abs;
  j["zeros"] = zeros;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) {
    j["candidates"].push_back(
        {{"x", vec_json(c.x)}, {"abs", c.abs_value}, {"order", c.order}, {"resolved", c.resolved}});
  }
  j["willmore"] = willmore;
  j["energy"] = energy;
  j["bound"] = bound;
  j["qmax_bound"] = qmax_bound;
  j["energy_below_threshold"] = energy_below_threshold;
  j["verdict"] = verdict;
  if (!suggestion.empty()) j["suggestion"] = suggestion;
  return j;
}

double zero_count_bound(double genus, double willmore_integral) {
  return genus - 1.0 + willmore_integral / (4.0 * kPi);
}

NodalReport nodal_analysis(const EnergyFunctional& energy, const SpectralSpinor& psi, const NodalOptions& opts) {
  const QuadratureGrid& grid = energy.grid();
  const GridSpinor values = energy.transform().synthesize(psi);
  const Eigen::VectorXd n2 = values.norm2();
  const Eigen::VectorXd abs = n2.cwiseSqrt();
  const Eigen::VectorXd q = energy.q_nodes();

  NodalReport rep;
  Eigen::Index imin = 0;
  rep.min_abs = abs.minCoeff(&imin);
  rep.min_location = grid.nodes[static_cast<std::size_t>(imin)];
  rep.max_abs = abs.maxCoeff();
  const Eigen::VectorXd n4 = n2.cwiseProduct(n2);
  rep.energy = integrate(grid, q.cwiseProduct(n4));
  rep.willmore = integrate(grid, q.cwiseProduct(q).cwiseProduct(n4));
  const double qmax = energy.Q().max_value();
  rep.bound = zero_count_bound(opts.genus, rep.willmore);
  rep.qmax_bound = opts.genus - 1.0 + qmax * rep.energy / (4.0 * kPi);
  rep.energy_below_threshold = rep.energy < 8.0 * kPi / qmax;

  if (rep.max_abs == 0.0) {
    rep.verdict = "inconclusive";
    rep.suggestion = "the field vanishes identically on the grid";
    return rep;
  }

  // Local minima of |psi| over the 8-neighbourhood; the polar rings are
  // also compared with the rest of their ring.
  const int nl = grid.n_lat;
  const int nm = grid.n_lon;
  std::vector<Eigen::Vector3d> starts;
  for (int i = 0; i < nl; ++i) {
    for (int k = 0; k < nm; ++k) {
      const double v = abs(static_cast<Eigen::Index>(grid.node(i, k)));
      if (v > opts.candidate_threshold * rep.max_abs) continue;
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= nl) continue;
        for (int dk = -1; dk <= 1; ++dk) {
          if (di == 0 && dk == 0) continue;
          const int kk = (k + dk + nm) % nm;
          if (abs(static_cast<Eigen::Index>(grid.node(ii, kk))) < v) {
            is_min = false;
            break;
          }
        }
      }
      if (is_min && (i == 0 || i == nl - 1)) {
        for (int kk = 0; kk < nm; ++kk) {
          if (abs(static_cast<Eigen::Index>(grid.node(i, kk))) < v) is_min = false;
        }
      }
      if (is_min) starts.push_back(grid.nodes[grid.node(i, k)]);
    }
  }

  const double zero_abs = opts.zero_tolerance * rep.max_abs;
  const double unresolved_abs = std::sqrt(opts.zero_tolerance) * rep.max_abs;
  bool inconclusive = false;
  for (const auto& s : starts) {
    ZeroCandidate c;
    c.x = refine_minimum(psi, s, rep.max_abs);
    c.abs_value = evaluate(psi, c.x).norm();
    bool duplicate = false;
    for (const auto& o : rep.candidates) {
      if ((o.x - c.x).norm() < 1e-6) duplicate = true;
    }
    if (duplicate) continue;
    c.resolved = c.abs_value <= zero_abs;
    if (c.resolved) {
      c.order = vanishing_order(psi, c.x);
      ++rep.zeros;
    } else if (c.abs_value <= unresolved_abs) {
      inconclusive = true;
    }
    rep.min_abs = std::min(rep.min_abs, c.abs_value);
    if (c.abs_value <= rep.min_abs) rep.min_location = c.x;
    rep.candidates.push_back(c);
  }

  if (rep.zeros > 0) {
    rep.verdict = "zeros";
  } else if (inconclusive) {
    rep.verdict = "inconclusive";
    rep.suggestion = "a near-zero of |psi| could not be resolved; rerun with a larger truncation J";
  } else {
    rep.verdict = "zero-free";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scalar curvature identity.
// ---------------------------------------------------------------------------

nlohmann::json ScalReport::to_json() const {
  return {{"equation_residual", equation_residual}, {"min_abs", min_abs},   {"max_residual", max_residual},
          {"l1_residual", l1_residual},             {"l1_scale", l1_scale}, {"mean_scal", mean_scal}};
}

ScalReport scal_identity_check(const EnergyFunctional& energy, const SpectralSpinor& psi, const ScalOptions& opts) {
  const QuadratureGrid& grid = energy.grid();
  const SpectralTransform& tr = energy.transform();
  const GridSpinor v = tr.synthesize(psi);
  const std::array<GridSpinor, 3> grad = tr.gradient(psi);
  const GridSpinor lap = tr.laplacian(psi);
  const Eigen::VectorXd n = v.norm2();
  const Eigen::VectorXd q = energy.q_nodes();

  ScalReport rep;
  rep.equation_residual = energy.eval(psi, 4.0).dual_norm;
  rep.min_abs = std::sqrt(n.minCoeff());
  if (opts.enforce_preconditions) {
    if (rep.equation_residual > opts.equation_tolerance) {
      std::ostringstream msg;
      msg << "spinor does not solve the equation: residual " << rep.equation_residual << " > "
          << opts.equation_tolerance;
      throw DomainError(msg.str());
    }
    if (rep.min_abs <= 1e-8 * std::sqrt(n.maxCoeff())) {
      throw DomainError("spinor has a zero; the metric |psi|^4 g degenerates there");
    }
  }

  const std::size_t N = grid.size();
  rep.lhs.resize(static_cast<Eigen::Index>(N));
  rep.rhs.resize(static_cast<Eigen::Index>(N));
  double l1 = 0, scale = 0, area = 0, mean = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::Vector3d& x = grid.nodes[i];
    const SpinorValue p = v.at(i);
    const double ni = n(ii);

    // Laplacian of u = log |psi|^2.
    Eigen::Vector3d grad_n;
    double grad_psi2 = 0;
    std::array<SpinorValue, 3> g;
    for (int a = 0; a < 3; ++a) {
      g[static_cast<std::size_t>(a)] = grad[static_cast<std::size_t>(a)].at(i);
      grad_n(a) = 2.0 * g[static_cast<std::size_t>(a)].dot(p).real();
      grad_psi2 += g[static_cast<std::size_t>(a)].squaredNorm();
    }
    const double lap_n = 2.0 * lap.at(i).dot(p).real() + 2.0 * grad_psi2;
    const double lap_u = lap_n / ni - grad_n.squaredNorm() / (ni * ni);
    const double scal = (2.0 - 2.0 * lap_u) / (ni * ni);

    const Eigen::Vector3d grad_u = grad_n / ni;
    const double root = std::sqrt(ni);
    const SpinorValue phi = p / root;
    const Eigen::Matrix2cd grad_u_act = clifford::sphere_action(grad_u, x);
    const auto [e1, e2] = tangent_frame(x);
    double sum = 0;
    for (const Eigen::Vector3d& e : {e1, e2}) {
      SpinorValue dpsi = SpinorValue::Zero();
      for (int a = 0; a < 3; ++a) dpsi += e(a) * g[static_cast<std::size_t>(a)];
      const Eigen::Matrix2cd e_act = clifford::sphere_action(e, x);
      const SpinorValue dphi = dpsi / root - p * (e.dot(grad_n) / (2.0 * ni * root));
      const SpinorValue nabla = dphi - 0.5 * (e_act * phi);
      const SpinorValue t = (nabla - 0.5 * (e_act * (grad_u_act * phi)) - 0.5 * e.dot(grad_u) * phi) / ni +
                            0.5 * q(ii) * (e_act * phi);
      sum += t.squaredNorm();
    }
    const double rhs = 2.0 * q(ii) * q(ii) - 4.0 * sum;
    rep.lhs(ii) = scal;
    rep.rhs(ii) = rhs;
    const double w = grid.weights(ii) * ni * ni;
    rep.max_residual = std::max(rep.max_residual, std::abs(scal - rhs));
    l1 += w * std::abs(scal - rhs);
    scale += w * std::abs(scal);
    area += w;
    mean += w * scal;
  }
  rep.l1_residual = l1;
  rep.l1_scale = scale;
  rep.mean_scal = mean / area;
  return rep;
}

// ---------------------------------------------------------------------------
// Willmore energy.
// ---------------------------------------------------------------------------

nlohmann::json WillmoreReport::to_json() const {
  return {{"W", W}, {"qmax_bound", qmax_bound}, {"g1_area", g1_area}, {"g1_integral", g1_integral},
          {"embedded", embedded}};
}

WillmoreReport willmore(const EnergyFunctional& energy, const SpectralSpinor& psi) {
  const QuadratureGrid& grid = energy.grid();
  const Eigen::VectorXd n2 = energy.transform().synthesize(psi).norm2();
  const Eigen::VectorXd n4 = n2.cwiseProduct(n2);
  const Eigen::VectorXd q = energy.q_nodes();
  WillmoreReport rep;
  rep.W = integrate(grid, q.cwiseProduct(q).cwiseProduct(n4));
  rep.qmax_bound = energy.Q().max_value() * integrate(grid, q.cwiseProduct(n4));
  // Same integral, accumulated as Q^2 against the g_1 volume element.
  const Eigen::VectorXd vol1 = grid.weights.cwiseProduct(n4);
  rep.g1_area = vol1.sum();
  rep.g1_integral = vol1.dot(q.cwiseProduct(q));
  rep.embedded = rep.W < 8.0 * kPi;
  return rep;
}

// ---------------------------------------------------------------------------
// Meshes.
// ---------------------------------------------------------------------------

TriangleMesh icosphere(int level) {
  if (level < 0 || level > 8) throw DomainError("icosphere level must lie in [0, 8]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  for (const auto& v : std::vector<Eigen::Vector3d>{{-1, t, 0},
                                                    {1, t, 0},
                                                    {-1, -t, 0},
                                                    {1, -t, 0},
                                                    {0, -1, t},
                                                    {0, 1, t},
                                                    {0, -1, -t},
                                                    {0, 1, -t},
                                                    {t, 0, -1},
                                                    {t, 0, 1},
                                                    {-t, 0, -1},
                                                    {-t, 0, 1}}) {
    m.vertices.push_back(v.normalized());
  }
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const int id = static_cast<int>(m.vertices.size());
      m.vertices.push_back(
          (m.vertices[static_cast<std::size_t>(a)] + m.vertices[static_cast<std::size_t>(b)]).normalized());
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& f : m.triangles) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return m;
}

void discrete_mean_curvature(const TriangleMesh& mesh, std::vector<double>& H, std::vector<double>& vertex_area) {
  const std::size_t nv = mesh.vertices.size();
  std::vector<Eigen::Vector3d> K(nv, Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> normal(nv, Eigen::Vector3d::Zero());
  vertex_area.assign(nv, 0.0);
  for (const auto& t : mesh.triangles) {
    const std::array<Eigen::Vector3d, 3> x{mesh.vertices[static_cast<std::size_t>(t[0])],
                                           mesh.vertices[static_cast<std::size_t>(t[1])],
                                           mesh.vertices[static_cast<std::size_t>(t[2])]};
    const Eigen::Vector3d fn = (x[1] - x[0]).cross(x[2] - x[0]);
    const double area = 0.5 * fn.norm();
    std::array<double, 3> cot{};
    std::array<bool, 3> obtuse{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& a = x[k];
      const auto& b = x[(k + 1) % 3];
      const auto& c = x[(k + 2) % 3];
      cot[k] = cot_at(a, b, c);
      obtuse[k] = (b - a).dot(c - a) < 0;
    }
    const bool any_obtuse = obtuse[0] || obtuse[1] || obtuse[2];
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t i = static_cast<std::size_t>(t[k]);
      // The edge to the next corner is opposite the previous one and vice versa.
      const double cij = cot[(k + 2) % 3];
      const double cil = cot[(k + 1) % 3];
      K[i] += 0.5 * (cij * (x[k] - x[(k + 1) % 3]) + cil * (x[k] - x[(k + 2) % 3]));
      normal[i] += fn;
      if (!any_obtuse) {
        vertex_area[i] += (cij * (x[k] - x[(k + 1) % 3]).squaredNorm() + cil * (x[k] - x[(k + 2) % 3]).squaredNorm()) / 8.0;
      } else {
        vertex_area[i] += obtuse[k] ? area / 2.0 : area / 4.0;
      }
    }
  }
  const double orient = signed_volume(mesh) >= 0 ? 1.0 : -1.0;
  H.assign(nv, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    const Eigen::Vector3d nrm = orient * normal[i].normalized();
    H[i] = K[i].dot(nrm) / (2.0 * vertex_area[i]);
  }
}

MeshDiagnostics mesh_diagnostics(const TriangleMesh& mesh) {
  MeshDiagnostics d;
  std::vector<double> angle_sum(mesh.vertices.size(), 0.0);
  for (const auto& t : mesh.triangles) {
    const auto& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const auto& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const auto& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    d.area += 0.5 * (b - a).cross(c - a).norm();
    angle_sum[static_cast<std::size_t>(t[0])] += triangle_angle(a, b, c);
    angle_sum[static_cast<std::size_t>(t[1])] += triangle_angle(b, c, a);
    angle_sum[static_cast<std::size_t>(t[2])] += triangle_angle(c, a, b);
  }
  d.volume = signed_volume(mesh);
  for (double s : angle_sum) d.gauss_bonnet += 2.0 * kPi - s;
  d.euler_characteristic = static_cast<int>(mesh.vertices.size()) - static_cast<int>(edge_count(mesh)) +
                           static_cast<int>(mesh.triangles.size());
  return d;
}

// ---------------------------------------------------------------------------
// Weierstrass reconstruction.
// ---------------------------------------------------------------------------

Eigen::Matrix3d weierstrass_matrix(const SpinorValue& psi) {
  Eigen::Matrix2cd eps;
  eps << 0, 1, -1, 0;
  Eigen::Matrix3d M;
  for (int a = 0; a < 3; ++a) {
    const Eigen::Matrix2cd& s = clifford::pauli(a);
    const cplx r1 = psi.dot(s * psi);
    const cplx w = psi.transpose() * eps * s * psi;
    M(0, a) = r1.real();
    M(1, a) = w.real();
    M(2, a) = w.imag();
  }
  return M;
}

nlohmann::json ImmersionMesh::to_json() const {
  return {{"vertices", mesh.vertices.size()},
          {"triangles", mesh.triangles.size()},
          {"period_defect", period_defect},
          {"circulation", circulation},
          {"mean_edge", mean_edge},
          {"h_relative_l2", h_relative_l2},
          {"edge_length_error", edge_length_error},
          {"gauss_bonnet", gauss_bonnet},
          {"euler_characteristic", euler_characteristic},
          {"center", vec_json(center)},
          {"mean_radius", mean_radius},
          {"max_radial_deviation", max_radial_deviation}};
}

ImmersionMesh reconstruct_immersion(const SpectralSpinor& psi, const CurvatureField& Q, const ImmersionOptions& opts) {
  if (opts.edge_quadrature < 1) throw DomainError("edge quadrature needs at least one point");
  const TriangleMesh dom = icosphere(opts.level);
  const std::size_t nv = dom.vertices.size();

  std::vector<double> gx;
  std::vector<double> gw;
  gauss_legendre(opts.edge_quadrature, gx, gw);

  std::vector<SpinorValue> at_vertex(nv);
  double min_abs = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nv; ++i) {
    at_vertex[i] = evaluate(psi, dom.vertices[i]);
    min_abs = std::min(min_abs, at_vertex[i].norm());
  }

  // Unique edges, oriented from the lower to the higher index.
  std::map<std::pair<int, int>, int> edge_id;
  std::vector<std::pair<int, int>> edges;
  for (const auto& t : dom.triangles) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto key = std::minmax(t[k], t[(k + 1) % 3]);
      if (edge_id.emplace(key, static_cast<int>(edges.size())).second) edges.push_back(key);
    }
  }
  std::vector<Eigen::Vector3d> integral(edges.size());
  std::vector<double> g1_length(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Eigen::Vector3d& a = dom.vertices[static_cast<std::size_t>(edges[e].first)];
    const Eigen::Vector3d& b = dom.vertices[static_cast<std::size_t>(edges[e].second)];
    const double theta = std::atan2(a.cross(b).norm(), a.dot(b));
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    double len = 0;
    for (std::size_t k = 0; k < gx.size(); ++k) {
      const double s = 0.5 * (gx[k] + 1.0);
      const Eigen::Vector3d y = arc_point(a, b, theta, s);
      const Eigen::Vector3d dy = arc_velocity(a, b, theta, s);
      const SpinorValue v = evaluate(psi, y);
      min_abs = std::min(min_abs, v.norm());
      acc += 0.5 * gw[k] * (weierstrass_matrix(v) * dy);
      len += 0.5 * gw[k] * v.squaredNorm() * dy.norm();
    }
    integral[e] = acc;
    g1_length[e] = len;
  }
  if (min_abs < opts.min_abs) {
    std::ostringstream msg;
    msg << "|psi| drops to " << min_abs << " on the reconstruction mesh; the immersion is branched or degenerate";
    throw DomainError(msg.str());
  }

  ImmersionMesh out;
  for (const auto& I : integral) out.mean_edge += I.norm();
  out.mean_edge /= static_cast<double>(integral.size());

  auto signed_edge = [&](int a, int b) -> Eigen::Vector3d {
    const auto& I = integral[static_cast<std::size_t>(edge_id.at(std::minmax(a, b)))];
    return a < b ? I : Eigen::Vector3d(-I);
  };
  for (const auto& t : dom.triangles) {
    const Eigen::Vector3d c = signed_edge(t[0], t[1]) + signed_edge(t[1], t[2]) + signed_edge(t[2], t[0]);
    out.circulation = std::max(out.circulation, c.norm());
  }
  if (out.circulation > opts.period_tolerance * out.mean_edge) {
    std::ostringstream msg;
    msg << "Weierstrass form does not close: circulation " << out.circulation << " (relative "
        << out.circulation / out.mean_edge << ")";
    throw PeriodError(msg.str(), out.circulation);
  }

  // Graph least squares: B^T B X = B^T I with vertex 0 pinned at the origin.
  using Sparse = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nv), 3);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int a = edges[e].first;
    const int b = edges[e].second;
    trip.emplace_back(a, a, 1.0);
    trip.emplace_back(b, b, 1.0);
    trip.emplace_back(a, b, -1.0);
    trip.emplace_back(b, a, -1.0);
    rhs.row(b) += integral[e].transpose();
    rhs.row(a) -= integral[e].transpose();
  }
  trip.emplace_back(0, 0, 1.0);
  Sparse L(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nv));
  L.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Sparse> solver(L);
  if (solver.info() != Eigen::Success) throw ConvergenceError("graph Laplacian factorization failed", 0.0);
  const Eigen::MatrixXd X = solver.solve(rhs);

  out.domain = dom.vertices;
  out.mesh.triangles = dom.triangles;
  out.mesh.vertices.resize(nv);
  const Eigen::Vector3d mean = X.colwise().mean().transpose();
  for (std::size_t i = 0; i < nv; ++i) out.mesh.vertices[i] = X.row(static_cast<Eigen::Index>(i)).transpose() - mean;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Eigen::Vector3d d = out.mesh.vertices[static_cast<std::size_t>(edges[e].second)] -
                              out.mesh.vertices[static_cast<std::size_t>(edges[e].first)];
    out.period_defect = std::max(out.period_defect, (d - integral[e]).norm());
    out.edge_length_error = std::max(out.edge_length_error, std::abs(d.norm() - g1_length[e]) / g1_length[e]);
  }
  if (signed_volume(out.mesh) < 0) {
    for (auto& t : out.mesh.triangles) std::swap(t[1], t[2]);
  }

  discrete_mean_curvature(out.mesh, out.mean_curvature, out.vertex_area);
  out.conformal_factor.resize(nv);
  out.target_q.resize(nv);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < nv; ++i) {
    out.conformal_factor[i] = std::pow(at_vertex[i].squaredNorm(), 2);
    out.target_q[i] = Q.value(dom.vertices[i]);
    const double d = out.mean_curvature[i] - out.target_q[i];
    num += out.vertex_area[i] * d * d;
    den += out.vertex_area[i] * out.target_q[i] * out.target_q[i];
  }
  out.h_relative_l2 = std::sqrt(num / den);

  const MeshDiagnostics diag = mesh_diagnostics(out.mesh);
  out.gauss_bonnet = diag.gauss_bonnet;
  out.euler_characteristic = diag.euler_characteristic;

  // Algebraic sphere fit |x|^2 = 2 c.x + k.
  Eigen::MatrixXd A(static_cast<Eigen::Index>(nv), 4);
  Eigen::VectorXd b(static_cast<Eigen::Index>(nv));
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& x = out.mesh.vertices[i];
    const auto r = static_cast<Eigen::Index>(i);
    A.row(r) << 2 * x.x(), 2 * x.y(), 2 * x.z(), 1.0;
    b(r) = x.squaredNorm();
  }
  const Eigen::Vector4d sol = A.colPivHouseholderQr().solve(b);
  out.center = sol.head<3>();
  for (const auto& x : out.mesh.vertices) out.mean_radius += (x - out.center).norm();
  out.mean_radius /= static_cast<double>(nv);
  for (const auto& x : out.mesh.vertices) {
    out.max_radial_deviation = std::max(out.max_radial_deviation, std::abs((x - out.center).norm() - out.mean_radius));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mesh files.
// ---------------------------------------------------------------------------

MeshFormat mesh_format_from_path(const std::string& path) {
  auto ends_with = [&](const std::string& suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with(".obj")) return MeshFormat::obj;
  if (ends_with(".ply")) return MeshFormat::ply;
  throw ConfigError("mesh path '" + path + "' must end in .obj or .ply");
}

void export_mesh(const ImmersionMesh& m, const std::string& path, MeshFormat format) {
  const std::size_t nv = m.mesh.vertices.size();
  if (m.mean_curvature.size() != nv || m.target_q.size() != nv || m.conformal_factor.size() != nv) {
    throw DomainError("mesh attributes do not match the vertex count");
  }
  char buf[160];
  write_atomic(path, [&](std::ostream& out) {
    if (format == MeshFormat::obj) {
      out << "# spinorsurf immersion mesh\n";
      for (const auto& v : m.mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
      }
      for (std::size_t i = 0; i < nv; ++i) {
        std::snprintf(buf, sizeof buf, "# vd %.17g %.17g %.17g\n", m.mean_curvature[i], m.target_q[i],
                      m.conformal_factor[i]);
        out << buf;
      }
      for (const auto& t : m.mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    } else {
      out << "ply\nformat ascii 1.0\ncomment spinorsurf immersion mesh\n"
          << "element vertex " << nv << "\n"
          << "property double x\nproperty double y\nproperty double z\n"
          << "property double mean_curvature\nproperty double target_q\nproperty double conformal_factor\n"
          << "element face " << m.mesh.triangles.size() << "\n"
          << "property list uchar int vertex_indices\nend_header\n";
      for (std::size_t i = 0; i < nv; ++i) {
        const auto& v = m.mesh.vertices[i];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n", v.x(), v.y(), v.z(),
                      m.mean_curvature[i], m.target_q[i], m.conformal_factor[i]);
        out << buf;
      }
      for (const auto& t : m.mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
  });
}

LoadedMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh '" + path + "'");
  LoadedMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Eigen::Vector3d v;
      ss >> v.x() >> v.y() >> v.z();
      m.mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> t{};
      ss >> t[0] >> t[1] >> t[2];
      for (auto& k : t) --k;
      m.mesh.triangles.push_back(t);
    } else if (tag == "#") {
      std::string sub;
      ss >> sub;
      if (sub != "vd") continue;
      double h = 0, q = 0, f = 0;
      ss >> h >> q >> f;
      m.mean_curvature.push_back(h);
      m.target_q.push_back(q);
      m.conformal_factor.push_back(f);
    } else {
      continue;
    }
    if (!ss) throw ConfigError("malformed OBJ line '" + line + "' in " + path);
  }
  return m;
}

LoadedMesh read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ConfigError(path + " is not a PLY file");
  std::size_t nv = 0, nf = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string kind;
      ss >> kind;
      if (kind != "ascii") throw ConfigError(path + ": only ASCII PLY is supported");
    } else if (tag == "element") {
      std::string what;
      std::size_t count = 0;
      ss >> what >> count;
      in_vertex = what == "vertex";
      if (in_vertex) nv = count;
      if (what == "face") nf = count;
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      props.push_back(name);
    }
  }
  auto column = [&](const char* name) {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int cx = column("x"), cy = column("y"), cz = column("z");
  if (cx < 0 || cy < 0 || cz < 0) throw ConfigError(path + ": vertex element lacks x, y, z");
  const int ch = column("mean_curvature"), cq = column("target_q"), cf = column("conformal_factor");

  LoadedMesh m;
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < nv; ++i) {
    for (auto& r : row) in >> r;
    if (!in) throw ConfigError(path + ": truncated vertex list");
    m.mesh.vertices.emplace_back(row[static_cast<std::size_t>(cx)], row[static_cast<std::size_t>(cy)],
                                 row[static_cast<std::size_t>(cz)]);
    if (ch >= 0) m.mean_curvature.push_back(row[static_cast<std::size_t>(ch)]);
    if (cq >= 0) m.target_q.push_back(row[static_cast<std::size_t>(cq)]);
    if (cf >= 0) m.conformal_factor.push_back(row[static_cast<std::size_t>(cf)]);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    int count = 0;
    std::array<int, 3> t{};
    in >> count >> t[0] >> t[1] >> t[2];
    if (!in || count != 3) throw ConfigError(path + ": only triangle faces are supported");
    m.mesh.triangles.push_back(t);
  }
  return m;
}

}  // namespace spinorsurf
