#include "spinorsurf/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spinorsurf/errors.hpp"

namespace spinorsurf {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Vector3d read_vec3(const nlohmann::json& j, const char* key) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  if (!j.contains(key)) return v;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ConfigError(std::string("Q spec: '") + key + "' must be a 3-vector");
  for (int i = 0; i < 3; ++i) v(i) = a.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Eigen::Matrix3d read_mat3(const nlohmann::json& j, const char* key) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  if (!j.contains(key)) return m;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ConfigError(std::string("Q spec: '") + key + "' must be 3x3");
  for (int r = 0; r < 3; ++r) {
    const auto& row = a.at(static_cast<std::size_t>(r));
    if (!row.is_array() || row.size() != 3) throw ConfigError(std::string("Q spec: '") + key + "' must be 3x3");
    for (int c = 0; c < 3; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

// Orthonormal basis of the tangent plane at x.
std::pair<Eigen::Vector3d, Eigen::Vector3d> tangent_basis(const Eigen::Vector3d& x) {
  const Eigen::Vector3d t1 = x.unitOrthogonal();
  return {t1, x.cross(t1)};
}

Eigen::Vector2d tangent_hessian_eigs(const CurvatureField& Q, const Eigen::Vector3d& x) {
  const auto [t1, t2] = tangent_basis(x);
  const Eigen::Matrix3d H = Q.hessian(x);
  Eigen::Matrix2d h;
  h << t1.dot(H * t1), t1.dot(H * t2), t2.dot(H * t1), t2.dot(H * t2);
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(h).eigenvalues();
}

struct NewtonResult {
  Eigen::Vector3d x;
  bool converged = false;
};

// Riemannian Newton iteration for grad Q = 0 with a pseudo-inverse step, so
// that degenerate critical manifolds are still reached.
NewtonResult critical_newton(const CurvatureField& Q, Eigen::Vector3d x, double gtol) {
  for (int it = 0; it < 200; ++it) {
    const Eigen::Vector3d g = Q.gradient(x);
    if (g.norm() < gtol) return {x, true};
    const auto [t1, t2] = tangent_basis(x);
    const Eigen::Matrix3d H = Q.hessian(x);
    Eigen::Matrix2d h;
    h << t1.dot(H * t1), t1.dot(H * t2), t2.dot(H * t1), t2.dot(H * t2);
    const Eigen::Vector2d g2(t1.dot(g), t2.dot(g));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (int k = 0; k < 2; ++k) {
      const double ev = es.eigenvalues()(k);
      if (std::abs(ev) > 1e-8 * scale) s -= es.eigenvectors().col(k) * (es.eigenvectors().col(k).dot(g2) / ev);
    }
    if (!s.allFinite() || s.norm() == 0.0) s = -g2;
    if (s.norm() > 0.3) s *= 0.3 / s.norm();
    x = (x + s(0) * t1 + s(1) * t2).normalized();
  }
  return {x, Q.gradient(x).norm() < 1e3 * gtol};
}

// Fibonacci lattice on S^2.
std::vector<Eigen::Vector3d> fibonacci_points(int n) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    pts.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
  }
  return pts;
}

std::string classify(const Eigen::Vector2d& eigs, double tol) {
  if (eigs(1) < -tol) return "max";
  if (eigs(0) > tol) return "min";
  if (eigs(0) < -tol && eigs(1) > tol) return "saddle";
  return "degenerate";
}

nlohmann::json point_json(const CriticalPoint& c) {
  return {{"x", {c.x(0), c.x(1), c.x(2)}},
          {"value", c.value},
          {"hessian_eigenvalues", {c.hessian_eigenvalues(0), c.hessian_eigenvalues(1)}},
          {"kind", c.kind},
          {"merged", c.merged}};
}

}  // namespace

double real_harmonic(int l, int m, const Eigen::Vector3d& x) {
  if (m == 0) return scalar_harmonic(l, 0, x).real();
  const double sign = (m % 2 == 0) ? 1.0 : -1.0;
  const cplx y = scalar_harmonic(l, std::abs(m), x);
  return std::sqrt(2.0) * sign * (m > 0 ? y.real() : y.imag());
}

// --- CurvatureField -----------------------------------------------------------

CurvatureField CurvatureField::constant(double c) {
  CurvatureField q(polynomial(c, Eigen::Vector3d::Zero(), Eigen::Matrix3d::Zero()));
  q.family_ = Family::constant;
  return q;
}

CurvatureField CurvatureField::polynomial(double c, const Eigen::Vector3d& b, const Eigen::Matrix3d& A) {
  CurvatureField q;
  q.family_ = Family::polynomial;
  q.c_ = c;
  q.b_ = b;
  q.A_ = 0.5 * (A + A.transpose());
  q.extrema_.reset();
  return q;
}

CurvatureField CurvatureField::harmonic(std::vector<HarmonicTerm> terms) {
  for (const auto& t : terms) {
    if (t.l < 0 || std::abs(t.m) > t.l) throw ConfigError("Q spec: harmonic term needs 0 <= |m| <= l");
  }
  CurvatureField q;
  q.family_ = Family::harmonic;
  q.terms_ = std::move(terms);
  q.c_ = 0.0;
  return q;
}

CurvatureField CurvatureField::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family")) throw ConfigError("Q spec: missing 'family'");
  const std::string fam = j.at("family").get<std::string>();
  CurvatureField q;
  try {
    if (fam == "constant") {
      q = constant(j.value("value", 1.0));
    } else if (fam == "affine" || fam == "quadratic" || fam == "polynomial") {
      if (fam == "affine" && j.contains("A")) throw ConfigError("Q spec: affine family takes no 'A'");
      q = polynomial(j.value("c", 0.0), read_vec3(j, "b"), read_mat3(j, "A"));
    } else if (fam == "harmonic") {
      std::vector<HarmonicTerm> terms;
      for (const auto& t : j.at("terms")) terms.push_back({t.at("l").get<int>(), t.at("m").get<int>(), t.at("value").get<double>()});
      q = harmonic(std::move(terms));
    } else {
      throw ConfigError("Q spec: unknown family '" + fam + "'");
    }
    if (j.contains("scale")) q = q.scaled(j.at("scale").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("Q spec: ") + e.what());
  }
  return q;
}

nlohmann::json CurvatureField::to_json() const {
  nlohmann::json j;
  j["family"] = family_name();
  switch (family_) {
    case Family::constant:
      j["value"] = c_;
      break;
    case Family::polynomial:
      j["c"] = c_;
      j["b"] = {b_(0), b_(1), b_(2)};
      if (!A_.isZero(0.0)) {
        j["A"] = nlohmann::json::array();
        for (int r = 0; r < 3; ++r) j["A"].push_back({A_(r, 0), A_(r, 1), A_(r, 2)});
      }
      break;
    case Family::harmonic:
      j["terms"] = nlohmann::json::array();
      for (const auto& t : terms_) j["terms"].push_back({{"l", t.l}, {"m", t.m}, {"value", t.value}});
      break;
  }
  if (scale_ != 1.0) j["scale"] = scale_;
  return j;
}

std::string CurvatureField::family_name() const {
  switch (family_) {
    case Family::constant:
      return "constant";
    case Family::polynomial:
      return A_.isZero(0.0) ? "affine" : "quadratic";
    case Family::harmonic:
      return "harmonic";
  }
  return "unknown";
}

bool CurvatureField::is_affine() const {
  return family_ == Family::polynomial && A_.isZero(0.0) && !b_.isZero(0.0);
}

bool CurvatureField::is_constant() const {
  if (family_ == Family::constant) return true;
  if (family_ == Family::polynomial) return b_.isZero(0.0) && (A_ - A_(0, 0) * Eigen::Matrix3d::Identity()).isZero(0.0);
  return std::all_of(terms_.begin(), terms_.end(), [](const HarmonicTerm& t) { return t.l == 0 || t.value == 0.0; });
}

int CurvatureField::degree() const {
  switch (family_) {
    case Family::constant:
      return 0;
    case Family::polynomial:
      return A_.isZero(0.0) ? (b_.isZero(0.0) ? 0 : 1) : 2;
    case Family::harmonic: {
      int d = 0;
      for (const auto& t : terms_) d = std::max(d, t.l);
      return d;
    }
  }
  return 0;
}

double CurvatureField::ambient_value(const Eigen::Vector3d& y) const {
  if (family_ == Family::harmonic) {
    const Eigen::Vector3d x = y.normalized();
    double s = 0.0;
    for (const auto& t : terms_) s += t.value * real_harmonic(t.l, t.m, x);
    return scale_ * s;
  }
  return scale_ * (c_ + b_.dot(y) + y.dot(A_ * y));
}

double CurvatureField::value(const Eigen::Vector3d& x) const { return ambient_value(x.normalized()); }

Eigen::Vector3d CurvatureField::gradient(const Eigen::Vector3d& x0) const {
  const Eigen::Vector3d x = x0.normalized();
  const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - x * x.transpose();
  if (family_ != Family::harmonic) return scale_ * (P * (b_ + 2.0 * A_ * x));
  // The 0-homogeneous extension has no radial derivative on the sphere.
  const double h = 1e-6;
  Eigen::Vector3d g;
  for (int a = 0; a < 3; ++a) {
    const Eigen::Vector3d e = h * Eigen::Vector3d::Unit(a);
    g(a) = (ambient_value(x + e) - ambient_value(x - e)) / (2.0 * h);
  }
  return P * g;
}

Eigen::Matrix3d CurvatureField::hessian(const Eigen::Vector3d& x0) const {
  const Eigen::Vector3d x = x0.normalized();
  const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - x * x.transpose();
  if (family_ != Family::harmonic) {
    const Eigen::Vector3d df = scale_ * (b_ + 2.0 * A_ * x);
    return P * (2.0 * scale_ * A_) * P - x.dot(df) * P;
  }
  const double h = 1e-4;
  Eigen::Matrix3d H;
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const Eigen::Vector3d ea = h * Eigen::Vector3d::Unit(a);
      const Eigen::Vector3d eb = h * Eigen::Vector3d::Unit(b);
      H(a, b) = (ambient_value(x + ea + eb) - ambient_value(x + ea - eb) - ambient_value(x - ea + eb) +
                 ambient_value(x - ea - eb)) /
                (4.0 * h * h);
      H(b, a) = H(a, b);
    }
  }
  return P * H * P;
}

Eigen::VectorXd CurvatureField::sample(const QuadratureGrid& grid) const {
  Eigen::VectorXd q(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) q(static_cast<Eigen::Index>(i)) = ambient_value(grid.nodes[i]);
  return q;
}

double CurvatureField::integral() const {
  if (family_ == Family::harmonic) {
    double s = 0.0;
    for (const auto& t : terms_) {
      if (t.l == 0) s += t.value * std::sqrt(4.0 * kPi);
    }
    return scale_ * s;
  }
  return scale_ * (4.0 * kPi * c_ + 4.0 * kPi / 3.0 * A_.trace());
}

CurvatureField CurvatureField::scaled(double s) const {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("Q scale factor must be positive");
  CurvatureField q = *this;
  q.scale_ *= s;
  q.extrema_.reset();
  return q;
}

CurvatureField CurvatureField::normalized() const {
  const double I = integral();
  if (!(I > 0.0)) throw DomainError("cannot normalize Q with nonpositive integral");
  return scaled(1.0 / I);
}

double CurvatureField::max_value() const {
  if (!extrema_) {
    const QuadratureGrid grid = QuadratureGrid::gauss(std::max(48, 4 * degree()));
    const Eigen::VectorXd q = sample(grid);
    Eigen::Index imax = 0;
    Eigen::Index imin = 0;
    double hi = q.maxCoeff(&imax);
    double lo = q.minCoeff(&imin);
    const double gtol = 1e-12 * std::max(1.0, std::abs(hi));
    hi = std::max(hi, value(critical_newton(*this, grid.nodes[static_cast<std::size_t>(imax)], gtol).x));
    lo = std::min(lo, value(critical_newton(*this, grid.nodes[static_cast<std::size_t>(imin)], gtol).x));
    extrema_ = std::make_pair(lo, hi);
  }
  return extrema_->second;
}

double CurvatureField::min_value() const {
  max_value();
  return extrema_->first;
}

// --- hypothesis report ---------------------------------------------------------

nlohmann::json HypothesisReport::to_json() const {
  nlohmann::json j;
  j["family"] = family;
  j["classification"] = classification;
  j["q_max"] = q_max;
  j["q_min"] = q_min;
  j["half_q_max"] = half_q_max;
  j["d_interval"] = {d_lower, d_upper};
  j["d_interval_nonempty"] = d_interval_nonempty;
  j["admissible_d_lower"] = admissible_lower;
  j["admissible_nonempty"] = admissible_nonempty;
  j["critical_points"] = nlohmann::json::array();
  for (const auto& c : critical_points) j["critical_points"].push_back(point_json(c));
  j["maxima"] = nlohmann::json::array();
  for (const auto& c : maxima) j["maxima"].push_back(point_json(c));
  j["maxima_nondegenerate"] = maxima_nondegenerate;
  j["search_converged"] = search_converged;
  j["topological_clauses"] = topological_clauses;
  if (!note.empty()) j["note"] = note;
  return j;
}

HypothesisReport check_Q_hypothesis(const CurvatureField& Q, int starts) {
  HypothesisReport r;
  r.family = Q.family_name();
  const auto pts = fibonacci_points(std::max(starts, 8));
  double qscale = 0.0;
  for (const auto& x : pts) qscale = std::max(qscale, std::abs(Q.value(x)));
  const double gtol = 1e-11 * std::max(1.0, qscale);
  const double htol = 1e-6 * std::max(1.0, qscale);

  std::vector<CriticalPoint> found;
  int failed = 0;
  for (const auto& x0 : pts) {
    const NewtonResult nr = critical_newton(Q, x0, gtol);
    if (!nr.converged) {
      ++failed;
      continue;
    }
    bool dup = false;
    for (auto& c : found) {
      if ((c.x - nr.x).norm() < 1e-6) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    CriticalPoint c;
    c.x = nr.x;
    c.value = Q.value(nr.x);
    c.hessian_eigenvalues = tangent_hessian_eigs(Q, nr.x);
    c.kind = classify(c.hessian_eigenvalues, htol);
    found.push_back(c);
  }
  // Degenerate critical manifolds (circles, the whole sphere for constant Q)
  // produce many Newton limits; keep one representative per value.
  for (auto& c : found) {
    if (c.kind == "degenerate") {
      auto it = std::find_if(r.critical_points.begin(), r.critical_points.end(), [&](const CriticalPoint& o) {
        return o.kind == "degenerate" && std::abs(o.value - c.value) < 1e-9 * std::max(1.0, qscale);
      });
      if (it != r.critical_points.end()) {
        ++it->merged;
        continue;
      }
    }
    r.critical_points.push_back(c);
  }
  std::sort(r.critical_points.begin(), r.critical_points.end(),
            [](const CriticalPoint& a, const CriticalPoint& b) { return a.value > b.value; });

  r.q_max = Q.max_value();
  r.q_min = Q.min_value();
  for (const auto& c : r.critical_points) {
    r.q_max = std::max(r.q_max, c.value);
    r.q_min = std::min(r.q_min, c.value);
  }
  r.search_converged = !r.critical_points.empty() && failed < static_cast<int>(pts.size()) / 2;
  r.half_q_max = 0.5 * r.q_max;
  r.d_lower = std::max(r.half_q_max, r.q_min);
  r.d_upper = r.q_max;
  const double vtol = 1e-9 * std::max(1.0, qscale);
  r.d_interval_nonempty = r.d_upper - r.d_lower > vtol;

  for (const auto& c : r.critical_points) {
    if (c.value >= r.q_max - vtol) r.maxima.push_back(c);
  }
  r.maxima_nondegenerate =
      !r.maxima.empty() && std::all_of(r.maxima.begin(), r.maxima.end(), [](const CriticalPoint& c) { return c.kind == "max"; });

  // Critical points with values in [d, Q_max) must have positive definite
  // Hessians; d has to sit above every offending critical value.
  r.admissible_lower = r.d_lower;
  for (const auto& c : r.critical_points) {
    if (c.value < r.q_max - vtol && c.value > r.d_lower && c.kind != "min") {
      r.admissible_lower = std::max(r.admissible_lower, c.value);
    }
  }
  r.admissible_nonempty = r.d_interval_nonempty && r.d_upper - r.admissible_lower > vtol;

  if (Q.is_constant() || r.q_max - r.q_min <= vtol) {
    r.classification = "constant";
    r.note = "constant Q: the d-interval is empty";
  } else if (Q.is_affine()) {
    r.classification = "affine-obstruction";
    r.note = "Q = c + b.x is the classical non-example: no solution exists for this family";
  } else {
    r.classification = "generic";
  }
  return r;
}

SpectralSpinor random_spinor(int truncation, std::mt19937_64& rng, double decay) {
  std::normal_distribution<double> n(0.0, 1.0);
  SpectralSpinor s(truncation);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double lam = std::abs(eigenvalue(basis_index(k)));
    const double re = n(rng);
    const double im = n(rng);
    s.coeffs()(static_cast<Eigen::Index>(k)) = cplx(re, im) * std::pow(lam, -decay);
  }
  return s;
}

// --- EnergyFunctional ---------------------------------------------------------

int EnergyFunctional::default_grid_degree(int truncation, const CurvatureField& Q) {
  return 4 * (truncation + 1) + std::max(2, Q.degree());
}

EnergyFunctional::EnergyFunctional(int truncation, CurvatureField Q, int grid_degree)
    : Q_(std::move(Q)),
      transform_(truncation, QuadratureGrid::gauss(grid_degree > 0 ? grid_degree : default_grid_degree(truncation, Q_))),
      q_(Q_.sample(transform_.grid())),
      lambda_(eigenvalues(truncation)) {
  if ((q_.array() <= 0.0).any()) throw DomainError("Q must be positive on the grid");
}

void EnergyFunctional::check_exponent(double p) const {
  if (!(p > 2.0 && p <= 4.0)) throw DomainError("exponent p must lie in (2, 4]");
  const int need = static_cast<int>(std::ceil(p * (truncation() + 1) - 1e-12)) + Q_.degree();
  if (grid().degree < need) {
    throw AliasingError("grid degree " + std::to_string(grid().degree) + " is below " + std::to_string(need) +
                        " needed for p = " + std::to_string(p) + " at truncation " + std::to_string(truncation()));
  }
}

double EnergyFunctional::A(const GridSpinor& values, double p) const {
  const Eigen::VectorXd n2 = values.norm2();
  return grid().weights.dot(q_.cwiseProduct(n2.array().pow(0.5 * p).matrix()));
}

double EnergyFunctional::A(const SpectralSpinor& psi, double p) const {
  check_exponent(p);
  return A(transform_.synthesize(psi), p);
}

SpectralSpinor EnergyFunctional::nonlinear_term(const SpectralSpinor& psi, double p) const {
  check_exponent(p);
  GridSpinor g = transform_.synthesize(psi);
  const Eigen::VectorXd w = q_.cwiseProduct(g.norm2().array().pow(0.5 * (p - 2.0)).matrix());
  g.up = g.up.cwiseProduct(w.cast<cplx>());
  g.dn = g.dn.cwiseProduct(w.cast<cplx>());
  return transform_.analyze(g);
}

EnergyReport EnergyFunctional::eval(const SpectralSpinor& psi, double p) const {
  check_exponent(p);
  GridSpinor g = transform_.synthesize(psi);
  const Eigen::VectorXd n2 = g.norm2();
  const Eigen::VectorXd w = q_.cwiseProduct(n2.array().pow(0.5 * (p - 2.0)).matrix());
  EnergyReport r;
  r.A = grid().weights.dot(w.cwiseProduct(n2));
  g.up = g.up.cwiseProduct(w.cast<cplx>());
  g.dn = g.dn.cwiseProduct(w.cast<cplx>());
  const SpectralSpinor N = transform_.analyze(g);
  const Eigen::VectorXd a2 = psi.coeffs().cwiseAbs2();
  for (Eigen::Index k = 0; k < a2.size(); ++k) {
    if (lambda_(k) > 0.0) {
      r.plus_norm2 += lambda_(k) * a2(k);
    } else {
      r.minus_norm2 -= lambda_(k) * a2(k);
    }
  }
  r.value = 0.5 * (r.plus_norm2 - r.minus_norm2) - r.A / p;
  r.residual = SpectralSpinor(psi.truncation(), lambda_.cast<cplx>().cwiseProduct(psi.coeffs()) - N.coeffs());
  r.gradient = riesz(r.residual);
  r.dual_norm = dual_norm(r.residual);
  return r;
}

double EnergyFunctional::value(const SpectralSpinor& psi, double p) const {
  check_exponent(p);
  return 0.5 * dirac_action(psi) - A(transform_.synthesize(psi), p) / p;
}

RayleighReport EnergyFunctional::rayleigh(const SpectralSpinor& psi, double p) const {
  RayleighReport r;
  r.A = A(psi, p);
  if (!(r.A > 0.0)) throw DomainError("Rayleigh quotient undefined: A(psi) = 0");
  const double a2p = std::pow(r.A, 2.0 / p);
  r.value = dirac_action(psi) / a2p;
  const SpectralSpinor N = nonlinear_term(psi, p);
  const Eigen::VectorXcd dual =
      (2.0 / a2p) * (lambda_.cast<cplx>().cwiseProduct(psi.coeffs()) - r.value * std::pow(r.A, (2.0 - p) / p) * N.coeffs());
  r.gradient = riesz(SpectralSpinor(psi.truncation(), dual));
  return r;
}

Linearization EnergyFunctional::linearize(const SpectralSpinor& psi, double p) const {
  check_exponent(p);
  Linearization lin;
  lin.psi = transform_.synthesize(psi);
  const Eigen::VectorXd n2 = lin.psi.norm2();
  lin.w1 = q_.cwiseProduct(n2.array().pow(0.5 * (p - 2.0)).matrix());
  lin.w2 = Eigen::VectorXd::Zero(n2.size());
  for (Eigen::Index i = 0; i < n2.size(); ++i) {
    if (n2(i) > 0.0) lin.w2(i) = (p - 2.0) * q_(i) * std::pow(n2(i), 0.5 * (p - 4.0));
  }
  return lin;
}

SpectralSpinor EnergyFunctional::nonlinear_hessian(const Linearization& lin, const SpectralSpinor& phi) const {
  GridSpinor f = transform_.synthesize(phi);
  // Re (psi, phi) with (a, b) = a . conj(b)
  const Eigen::VectorXd re =
      (lin.psi.up.cwiseProduct(f.up.conjugate()) + lin.psi.dn.cwiseProduct(f.dn.conjugate())).real();
  const Eigen::VectorXd c = lin.w2.cwiseProduct(re);
  f.up = f.up.cwiseProduct(lin.w1.cast<cplx>()) + lin.psi.up.cwiseProduct(c.cast<cplx>());
  f.dn = f.dn.cwiseProduct(lin.w1.cast<cplx>()) + lin.psi.dn.cwiseProduct(c.cast<cplx>());
  return transform_.analyze(f);
}

SpectralSpinor EnergyFunctional::hessian_apply(const Linearization& lin, const SpectralSpinor& phi) const {
  return SpectralSpinor(phi.truncation(),
                        lambda_.cast<cplx>().cwiseProduct(phi.coeffs()) - nonlinear_hessian(lin, phi).coeffs());
}

double EnergyFunctional::G(const SpectralSpinor& z, double p) const { return A(z, p) / p; }

double EnergyFunctional::G_first(const SpectralSpinor& z, const SpectralSpinor& w, double p) const {
  check_exponent(p);
  const GridSpinor gz = transform_.synthesize(z);
  const GridSpinor gw = transform_.synthesize(w);
  const Eigen::VectorXd re = (gz.up.cwiseProduct(gw.up.conjugate()) + gz.dn.cwiseProduct(gw.dn.conjugate())).real();
  const Eigen::VectorXd w1 = q_.cwiseProduct(gz.norm2().array().pow(0.5 * (p - 2.0)).matrix());
  return grid().weights.dot(w1.cwiseProduct(re));
}

double EnergyFunctional::G_second(const SpectralSpinor& z, const SpectralSpinor& w1, const SpectralSpinor& w2,
                                  double p) const {
  const Linearization lin = linearize(z, p);
  const GridSpinor a = transform_.synthesize(w1);
  const GridSpinor b = transform_.synthesize(w2);
  auto re = [](const GridSpinor& x, const GridSpinor& y) -> Eigen::VectorXd {
    return (x.up.cwiseProduct(y.up.conjugate()) + x.dn.cwiseProduct(y.dn.conjugate())).real();
  };
  const Eigen::VectorXd f =
      lin.w1.cwiseProduct(re(a, b)) + lin.w2.cwiseProduct(re(lin.psi, a)).cwiseProduct(re(lin.psi, b));
  return grid().weights.dot(f);
}

SpectralSpinor EnergyFunctional::riesz(const SpectralSpinor& dual) const {
  return SpectralSpinor(dual.truncation(), dual.coeffs().cwiseQuotient(lambda_.cwiseAbs().cast<cplx>()));
}

double EnergyFunctional::dual_norm(const SpectralSpinor& dual) const {
  return std::sqrt(dual.coeffs().cwiseAbs2().cwiseQuotient(lambda_.cwiseAbs()).sum());
}

EnergyReport eval_L(const SpectralSpinor& psi, double p, const EnergyFunctional& energy) { return energy.eval(psi, p); }

RayleighReport eval_rayleigh(const SpectralSpinor& psi, double p, const EnergyFunctional& energy) {
  return energy.rayleigh(psi, p);
}

}  // namespace spinorsurf
