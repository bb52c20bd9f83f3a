#include "spinorsurf/reduction_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/tools/toms748_solve.hpp>

#include "spinorsurf/io.hpp"

namespace spinorsurf {

namespace {

constexpr double kPi = std::numbers::pi;

double rdot(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return a.dot(b).real(); }

Eigen::VectorXcd mask(const Eigen::VectorXcd& x, const Eigen::VectorXd& keep) {
  return x.cwiseProduct(keep.cast<cplx>());
}

Eigen::VectorXd minus_mask(const EnergyFunctional& e) {
  return (e.lambda().array() < 0.0).cast<double>().matrix();
}

Eigen::VectorXd plus_mask(const EnergyFunctional& e) {
  return (e.lambda().array() > 0.0).cast<double>().matrix();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

// --- Krylov solvers ------------------------------------------------------------

KrylovResult conjugate_gradient(const LinearMap& A, const Eigen::VectorXcd& b, const Eigen::VectorXd& precond_diag,
                                double rel_tol, int max_iter) {
  KrylovResult out;
  out.x = Eigen::VectorXcd::Zero(b.size());
  const Eigen::VectorXcd inv = precond_diag.cwiseInverse().cast<cplx>();
  Eigen::VectorXcd r = b;
  Eigen::VectorXcd z = r.cwiseProduct(inv);
  Eigen::VectorXcd d = z;
  double rz = rdot(r, z);
  const double r0 = std::sqrt(std::max(rz, 0.0));
  if (r0 == 0.0) {
    out.converged = true;
    return out;
  }
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXcd Ad = A(d);
    const double dAd = rdot(d, Ad);
    if (!(dAd > 0.0)) break;  // lost definiteness; return the current iterate
    const double alpha = rz / dAd;
    out.x += alpha * d;
    r -= alpha * Ad;
    z = r.cwiseProduct(inv);
    const double rz_new = rdot(r, z);
    out.iterations = it + 1;
    out.residual = std::sqrt(std::max(rz_new, 0.0)) / r0;
    if (out.residual <= rel_tol) {
      out.converged = true;
      return out;
    }
    d = z + (rz_new / rz) * d;
    rz = rz_new;
  }
  return out;
}

KrylovResult minres(const LinearMap& A, const Eigen::VectorXcd& b, const Eigen::VectorXd& precond_diag,
                    double rel_tol, int max_iter) {
  KrylovResult out;
  const Eigen::Index n = b.size();
  out.x = Eigen::VectorXcd::Zero(n);
  const Eigen::VectorXcd inv = precond_diag.cwiseInverse().cast<cplx>();
  Eigen::VectorXcd r1 = b;
  Eigen::VectorXcd y = r1.cwiseProduct(inv);
  const double beta1 = std::sqrt(std::max(rdot(r1, y), 0.0));
  if (beta1 == 0.0) {
    out.converged = true;
    return out;
  }
  Eigen::VectorXcd r2 = r1;
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd w1 = w;
  Eigen::VectorXcd w2 = w;
  double oldb = 0.0;
  double beta = beta1;
  double dbar = 0.0;
  double epsln = 0.0;
  double phibar = beta1;
  double cs = -1.0;
  double sn = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXcd v = y / beta;
    y = A(v);
    if (it >= 2) y -= (beta / oldb) * r1;
    const double alfa = rdot(v, y);
    y -= (alfa / beta) * r2;
    r1 = r2;
    r2 = y;
    y = r2.cwiseProduct(inv);
    oldb = beta;
    beta = std::sqrt(std::max(rdot(r2, y), 0.0));
    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double gamma = std::max(std::hypot(gbar, beta), std::numeric_limits<double>::min());
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;
    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    out.x += phi * w;
    out.iterations = it;
    out.residual = phibar / beta1;
    if (out.residual <= rel_tol) {
      out.converged = true;
      break;
    }
    if (beta <= 1e-14 * beta1) {  // Krylov space exhausted
      out.converged = true;
      break;
    }
  }
  return out;
}

// --- reduction -----------------------------------------------------------------

ReductionResult reduce(const EnergyFunctional& energy, const SpectralSpinor& u_in, double p,
                       const SpectralSpinor* guess, const ReduceOptions& opts) {
  energy.check_exponent(p);
  if (u_in.truncation() != energy.truncation()) throw TruncationMismatch("reduce: truncation differs from the functional");
  ReductionResult out;
  out.u = u_in.plus();
  if (out.u.is_zero()) throw DomainError("reduce: u must be a nonzero element of E+");
  const Eigen::VectorXd keep = minus_mask(energy);
  const Eigen::VectorXd abs_lambda = energy.lambda().cwiseAbs();
  SpectralSpinor v = guess != nullptr ? guess->minus() : SpectralSpinor(u_in.truncation());
  if (v.truncation() != u_in.truncation()) v = v.resized(u_in.truncation());

  EnergyReport rep = energy.eval(out.u + v, p);
  for (int it = 0;; ++it) {
    const Eigen::VectorXcd r = mask(rep.residual.coeffs(), keep);
    const double res = std::sqrt(r.cwiseAbs2().cwiseQuotient(abs_lambda).sum());
    out.minus_residual = res;
    if (res <= opts.tol) break;
    if (it >= opts.max_iter) throw ConvergenceError("reduce: Newton ascent did not converge", res);

    const Linearization lin = energy.linearize(out.u + v, p);
    const int J = u_in.truncation();
    const LinearMap M = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd {
      return -mask(energy.hessian_apply(lin, SpectralSpinor(J, x)).coeffs(), keep);
    };
    const double eta = std::min(0.1, std::sqrt(res));
    const KrylovResult cg = conjugate_gradient(M, r, abs_lambda, eta, opts.max_cg);
    out.cg_iterations += cg.iterations;
    const SpectralSpinor step(J, mask(cg.x, keep));
    const double slope = rdot(step.coeffs(), r);

    // Armijo on the concave objective; near the maximizer accept the Newton
    // step whenever the residual decreases.
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const SpectralSpinor trial_v = v + alpha * step;
      EnergyReport trial = energy.eval(out.u + trial_v, p);
      const double tr = std::sqrt(mask(trial.residual.coeffs(), keep).cwiseAbs2().cwiseQuotient(abs_lambda).sum());
      if (trial.value >= rep.value + 1e-4 * alpha * slope || tr < res) {
        v = trial_v;
        rep = std::move(trial);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) throw ConvergenceError("reduce: line search failed", res);
    out.iterations = it + 1;
  }
  out.h = v;
  out.I = rep.value;
  out.A = rep.A;
  out.residual = rep.residual;
  out.gradient = energy.riesz(SpectralSpinor(u_in.truncation(), mask(rep.residual.coeffs(), plus_mask(energy))));
  return out;
}

// --- Nehari projection -----------------------------------------------------------

double F_from_I(double I, double p) { return std::pow(2.0 * p / (p - 2.0) * I, (p - 2.0) / p); }

NehariState nehari_project(const EnergyFunctional& energy, const SpectralSpinor& u_in, double p,
                           const SpectralSpinor* guess, const ReduceOptions& opts) {
  const SpectralSpinor u0 = u_in.plus();
  if (u0.is_zero()) throw DomainError("nehari_project: u must be a nonzero element of E+");
  NehariState st;
  double last_t = 1.0;
  SpectralSpinor last_h = guess != nullptr ? guess->minus() : SpectralSpinor(u0.truncation());
  ReductionResult last;

  // s(t) = d/dt I_p(t u0) = I_p'(t u0)[u0] = L_p'(t u0 + h)[u0].
  auto s = [&](double t) {
    const SpectralSpinor g = (t / last_t) * last_h;
    last = reduce(energy, t * u0, p, &g, opts);
    last_t = t;
    last_h = last.h;
    ++st.evaluations;
    return rdot(last.residual.coeffs(), u0.coeffs());
  };

  double lo = 1.0;
  double hi = 1.0;
  double s_lo = s(1.0);
  double s_hi = s_lo;
  if (s_lo > 0.0) {
    for (int k = 0; s_hi > 0.0; ++k) {
      if (k > 200) throw ConvergenceError("nehari_project: no sign change above t = 1", s_hi);
      lo = hi;
      s_lo = s_hi;
      hi *= 2.0;
      s_hi = s(hi);
    }
  } else if (s_lo < 0.0) {
    for (int k = 0; s_lo < 0.0; ++k) {
      if (k > 200) throw ConvergenceError("nehari_project: no sign change below t = 1", s_lo);
      hi = lo;
      s_hi = s_lo;
      lo *= 0.5;
      s_lo = s(lo);
    }
  }
  double t = lo;
  if (s_lo != 0.0 && s_hi != 0.0) {
    boost::uintmax_t max_iter = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        s, lo, hi, s_lo, s_hi, boost::math::tools::eps_tolerance<double>(50), max_iter);
    t = 0.5 * (bracket.first + bracket.second);
  } else if (s_hi == 0.0) {
    t = hi;
  }
  s(t);
  st.t = t;
  st.u = t * u0;
  st.reduction = last;
  st.I = last.I;
  st.F = F_from_I(st.I, p);

  // d^2/dt^2 I(t u0) by central differences of s, rescaled to I''(u)[u, u].
  const ReductionResult keep = last;
  const double dt = 1e-4 * t;
  const double sp = s(t + dt);
  const double sm = s(t - dt);
  st.second_derivative = t * t * (sp - sm) / (2.0 * dt);
  st.reduction = keep;
  return st;
}

RayleighMax rayleigh_max(const EnergyFunctional& energy, const SpectralSpinor& u_in, double p, double tol,
                         int max_iter) {
  const SpectralSpinor u = u_in.plus();
  if (u.is_zero()) throw DomainError("rayleigh_max: u must be a nonzero element of E+");
  const Eigen::VectorXd keep = minus_mask(energy);
  RayleighMax out;
  out.v = SpectralSpinor(u.truncation());
  RayleighReport cur = energy.rayleigh(u, p);
  double alpha = 0.5 * std::pow(cur.A, 2.0 / p);
  for (int it = 0; it < max_iter; ++it) {
    const SpectralSpinor g(u.truncation(), mask(cur.gradient.coeffs(), keep));
    const double g2 = h_half_norm2(g);
    if (std::sqrt(g2) <= tol * std::max(1.0, std::abs(cur.value))) break;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const SpectralSpinor trial_v = out.v + alpha * g;
      RayleighReport trial = energy.rayleigh(u + trial_v, p);
      if (trial.value >= cur.value + 1e-4 * alpha * g2) {
        out.v = trial_v;
        cur = std::move(trial);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;  // at roundoff level
    alpha *= 1.5;
  }
  out.value = cur.value;
  return out;
}

TauEstimate estimate_tau(const EnergyFunctional& energy, double p, const std::vector<SpectralSpinor>& samples,
                         const ReduceOptions& opts) {
  TauEstimate out;
  out.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SpectralSpinor u = samples[i].plus();
    double F = std::numeric_limits<double>::infinity();
    if (!u.is_zero()) F = nehari_project(energy, u, p, nullptr, opts).F;
    out.samples.push_back(F);
    if (F < out.value) {
      out.value = F;
      out.argmin = i;
    }
  }
  return out;
}

// --- concentration ---------------------------------------------------------------

ConcentrationProfile concentration_profile(const QuadratureGrid& grid, const GridSpinor& psi, double p,
                                           const std::vector<double>& radii, int candidates) {
  for (double r : radii) {
    if (!(r > 0.0) || r > kPi + 1e-12) throw DomainError("concentration radii must lie in (0, pi]");
  }
  ConcentrationProfile out;
  out.radii = radii;
  const Eigen::VectorXd dens = psi.norm2().array().pow(0.5 * p).matrix();
  const Eigen::VectorXd mass = grid.weights.cwiseProduct(dens);
  out.total = mass.sum();
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dens(static_cast<Eigen::Index>(a)) > dens(static_cast<Eigen::Index>(b));
  });
  const std::size_t k = candidates <= 0 ? order.size() : std::min(order.size(), static_cast<std::size_t>(candidates));
  out.theta.assign(radii.size(), 0.0);
  out.centers.assign(radii.size(), grid.nodes.empty() ? Eigen::Vector3d::UnitZ() : grid.nodes[order[0]]);
  std::vector<double> acc(radii.size());
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Vector3d& a = grid.nodes[order[c]];
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = std::acos(std::clamp(a.dot(grid.nodes[i]), -1.0, 1.0));
      const double m = mass(static_cast<Eigen::Index>(i));
      for (std::size_t r = 0; r < radii.size(); ++r) {
        if (d <= radii[r]) acc[r] += m;
      }
    }
    for (std::size_t r = 0; r < radii.size(); ++r) {
      if (acc[r] > out.theta[r]) {
        out.theta[r] = acc[r];
        out.centers[r] = a;
      }
    }
  }
  return out;
}

ConcentrationProfile concentration_profile(const EnergyFunctional& energy, const SpectralSpinor& psi, double p,
                                           const std::vector<double>& radii, int candidates) {
  return concentration_profile(energy.grid(), energy.transform().synthesize(psi), p, radii, candidates);
}

Eigen::Vector2d clamp_radial(const Eigen::Vector2d& x, double R0) {
  const double n = x.norm();
  return n <= R0 ? x : Eigen::Vector2d(R0 * x / n);
}

Eigen::Vector2d barycenter(const QuadratureGrid& grid, const GridSpinor& psi, const Eigen::Vector3d& chart_base,
                           double R0) {
  if (!(R0 > 0.0)) throw DomainError("barycenter: clamp radius must be positive");
  const Eigen::Matrix3d rot = clifford::rotation_from_pole(chart_base.normalized());
  const Eigen::VectorXd n2 = psi.norm2();
  Eigen::Vector2d num = Eigen::Vector2d::Zero();
  double den = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = grid.weights(static_cast<Eigen::Index>(i)) * n2(static_cast<Eigen::Index>(i)) *
                     n2(static_cast<Eigen::Index>(i));
    if (m == 0.0) continue;
    const Eigen::Vector3d eta = rot.transpose() * grid.nodes[i];
    const Eigen::Vector2d planar(eta.x(), eta.y());
    Eigen::Vector2d z;
    if (1.0 + eta.z() > 1e-14) {
      z = clamp_radial(planar / (1.0 + eta.z()), R0);
    } else {
      z = planar.norm() > 0.0 ? Eigen::Vector2d(R0 * planar.normalized()) : Eigen::Vector2d(R0, 0.0);
    }
    num += m * z;
    den += m;
  }
  if (!(den > 0.0)) throw DomainError("barycenter: int |psi|^4 vanishes");
  return num / den;
}

// --- continuation ----------------------------------------------------------------

void SolverOptions::validate() const {
  if (schedule.empty()) throw ConfigError("schedule must not be empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 2.0 && schedule[i] <= 4.0)) throw ConfigError("schedule entries must lie in (2, 4]");
    if (i > 0 && !(schedule[i] > schedule[i - 1])) throw ConfigError("schedule must be strictly increasing");
  }
  if (schedule.back() != 4.0) throw ConfigError("schedule must end at 4.0");
  if (!(inner.tol > 0.0) || !(tol_stage > 0.0) || !(tol_final > 0.0) || !(descent_switch > 0.0)) {
    throw ConfigError("tolerances must be positive");
  }
  if (inner.max_iter <= 0 || inner.max_cg <= 0 || max_newton <= 0 || max_minres <= 0 || descent_steps < 0) {
    throw ConfigError("iteration limits must be positive");
  }
  if (!(blowup_fraction > 0.0 && blowup_fraction <= 1.0)) throw ConfigError("blow-up fraction must lie in (0, 1]");
  if (!(blowup_spacings > 0.0) || blowup_stages <= 0) throw ConfigError("blow-up radius and stage count must be positive");
  if (!(min_capture > 0.0 && min_capture <= 1.0)) throw ConfigError("min_capture must lie in (0, 1]");
  if (!(barycenter_radius > 0.0)) throw ConfigError("barycenter radius must be positive");
  for (double r : radii) {
    if (!(r > 0.0) || r > kPi + 1e-12) throw ConfigError("concentration radii must lie in (0, pi]");
  }
}

nlohmann::json SolverOptions::to_json() const {
  return {{"schedule", schedule},
          {"tol_inner", inner.tol},
          {"max_inner", inner.max_iter},
          {"max_cg", inner.max_cg},
          {"tol_stage", tol_stage},
          {"tol_final", tol_final},
          {"descent_steps", descent_steps},
          {"descent_switch", descent_switch},
          {"max_newton", max_newton},
          {"max_minres", max_minres},
          {"blowup_fraction", blowup_fraction},
          {"blowup_spacings", blowup_spacings},
          {"blowup_stages", blowup_stages},
          {"min_capture", min_capture},
          {"barycenter_radius", barycenter_radius},
          {"seed", seed},
          {"radii", radii}};
}

void SolverTrace::write_csv(std::ostream& out) const {
  out << "# config: " << config.dump() << "\n";
  out << "stage,p,iter,phase,I,residual,nehari_defect,theta_star,upsilon_x,upsilon_y,min_abs\n";
  for (const auto& r : records) {
    out << r.stage << ',' << fmt(r.p) << ',' << r.iter << ',' << r.phase << ',' << fmt(r.I) << ',' << fmt(r.residual)
        << ',' << fmt(r.nehari_defect) << ',' << fmt(r.theta_star) << ',' << fmt(r.upsilon.x()) << ','
        << fmt(r.upsilon.y()) << ',' << fmt(r.min_abs) << "\n";
  }
}

void SolverTrace::save_csv(const std::string& path) const {
  write_atomic(path, [&](std::ostream& out) { write_csv(out); });
}

nlohmann::json SolverTrace::stages_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : stages) {
    arr.push_back({{"p", s.p},
                   {"I", s.I},
                   {"residual", s.residual},
                   {"A", s.A},
                   {"nehari_defect", s.nehari_defect},
                   {"theta_radii", s.profile.radii},
                   {"theta", s.profile.theta},
                   {"theta_star", s.theta_star},
                   {"concentration_center",
                    {s.concentration_center.x(), s.concentration_center.y(), s.concentration_center.z()}},
                   {"upsilon", {s.upsilon.x(), s.upsilon.y()}},
                   {"min_abs", s.min_abs},
                   {"descent_iterations", s.descent_iterations},
                   {"newton_iterations", s.newton_iterations},
                   {"converged", s.converged}});
  }
  return arr;
}

Bubble default_init_bubble(const CurvatureField& Q, double scale) {
  const HypothesisReport rep = check_Q_hypothesis(Q, 64);
  Eigen::Vector3d y = Eigen::Vector3d::UnitZ();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : rep.critical_points) {
    if (c.value > best + 1e-12) {
      best = c.value;
      y = c.x;
    }
  }
  // Snap to the pole when the maximum sits there up to roundoff, so the
  // initial state inherits the symmetry of Q exactly.
  for (int a = 0; a < 3; ++a) {
    for (double sgn : {1.0, -1.0}) {
      const Eigen::Vector3d e = sgn * Eigen::Vector3d::Unit(a);
      if ((y - e).norm() < 1e-9) y = e;
    }
  }
  return Bubble::make(y, scale, Q.value(y), 2);
}

namespace {

struct Monitor {
  const EnergyFunctional& energy;
  const SolverOptions& opts;
  Eigen::Vector3d chart_base;
  double r_star;

  TraceRecord record(int stage, double p, int iter, const char* phase, const SpectralSpinor& psi, double I,
                     double residual, double defect) const {
    TraceRecord r;
    r.stage = stage;
    r.p = p;
    r.iter = iter;
    r.phase = phase;
    r.I = I;
    r.residual = residual;
    r.nehari_defect = defect;
    const GridSpinor g = energy.transform().synthesize(psi);
    const ConcentrationProfile prof = concentration_profile(energy.grid(), g, p, {r_star}, 16);
    r.theta_star = prof.total > 0.0 ? prof.theta[0] / prof.total : 0.0;
    r.upsilon = barycenter(energy.grid(), g, chart_base, opts.barycenter_radius);
    r.min_abs = std::sqrt(g.norm2().minCoeff());
    return r;
  }
};

double nehari_defect(const EnergyReport& rep, const SpectralSpinor& psi) {
  return rdot(rep.residual.coeffs(), psi.plus().coeffs());
}

}  // namespace

SolveResult solve_continuation(const EnergyFunctional& energy, const SolverInit& init, const SolverOptions& opts,
                               std::ostream* log, SolverTrace* trace_out) {
  opts.validate();
  const int J = energy.truncation();
  SolverTrace trace;
  trace.config = {{"solver", opts.to_json()},
                  {"truncation", J},
                  {"grid_degree", energy.grid().degree},
                  {"Q", energy.Q().to_json()}};
  trace.r_star = opts.blowup_spacings * energy.grid().spacing();

  auto fail = [&](auto&& err) {
    if (trace_out != nullptr) *trace_out = trace;
    throw err;
  };

  SpectralSpinor psi;
  // Chart of the barycenter map: centred at the initial bubble.
  Eigen::Vector3d base = Eigen::Vector3d::UnitZ();
  if (init.state) {
    psi = init.state->truncation() == J ? *init.state : init.state->resized(J);
    trace.config["init"] = {{"kind", "state"}, {"truncation", init.state->truncation()}};
  } else {
    const Bubble b = init.bubble ? *init.bubble : default_init_bubble(energy.Q());
    const SphereBubble sb = bubble_to_sphere(b, J, 1.0 - opts.min_capture);
    trace.config["init"] = {{"kind", "bubble"},
                            {"center", {b.center.x(), b.center.y(), b.center.z()}},
                            {"scale", b.scale},
                            {"q_center", b.q_center},
                            {"captured_fraction", sb.captured_fraction}};
    if (sb.lossy) {
      fail(DomainError("initial bubble keeps only " + short_fmt(sb.captured_fraction) +
                       " of its L2 mass at truncation " + std::to_string(J)));
    }
    psi = sb.psi;
    base = b.center;
  }
  if (psi.plus().is_zero()) fail(DomainError("initial state has no E+ component"));

  const Monitor mon{energy, opts, base, trace.r_star};

  int consecutive = 0;
  const double q_max = energy.Q().max_value();
  for (std::size_t si = 0; si < opts.schedule.size(); ++si) {
    const double p = opts.schedule[si];
    const int stage = static_cast<int>(si);
    const bool last = si + 1 == opts.schedule.size();
    const double tol = last ? opts.tol_final : opts.tol_stage;
    StageSummary sum;
    sum.p = p;

    const SpectralSpinor minus = psi.minus();
    NehariState ns;
    try {
      ns = nehari_project(energy, psi.plus(), p, &minus, opts.inner);
    } catch (const ConvergenceError& e) {
      fail(StagnationError(std::string("stage p = ") + short_fmt(p) + ": " + e.what(), e.last_residual()));
    }
    double res = energy.dual_norm(ns.reduction.residual);
    trace.records.push_back(mon.record(stage, p, 0, "init", ns.reduction.psi(), ns.I, res,
                                       rdot(ns.reduction.residual.coeffs(), ns.u.coeffs())));

    // Riemannian gradient descent on the Nehari set.
    double alpha = 1.0;
    int k = 0;
    while (k < opts.descent_steps && res > opts.descent_switch) {
      const SpectralSpinor& g = ns.reduction.gradient;
      const double g2 = h_half_norm2(g);
      bool accepted = false;
      NehariState trial;
      for (int ls = 0; ls < 30; ++ls) {
        try {
          trial = nehari_project(energy, ns.u - alpha * g, p, &ns.reduction.h, opts.inner);
          if (trial.I <= ns.I - 1e-4 * alpha * g2) {
            accepted = true;
            break;
          }
        } catch (const ConvergenceError&) {
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      ns = std::move(trial);
      alpha = std::min(2.0 * alpha, 4.0);
      res = energy.dual_norm(ns.reduction.residual);
      ++k;
      trace.records.push_back(mon.record(stage, p, k, "descent", ns.reduction.psi(), ns.I, res,
                                         rdot(ns.reduction.residual.coeffs(), ns.u.coeffs())));
    }
    sum.descent_iterations = k;

    // Newton-MINRES on the full space.
    SpectralSpinor cur = ns.reduction.psi();
    EnergyReport rep = energy.eval(cur, p);
    res = rep.dual_norm;
    int n = 0;
    const Eigen::VectorXd abs_lambda = energy.lambda().cwiseAbs();
    while (res > tol) {
      if (n >= opts.max_newton) {
        fail(StagnationError("Newton iteration stagnated at p = " + short_fmt(p), res));
      }
      const Linearization lin = energy.linearize(cur, p);
      const LinearMap H = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd {
        return energy.hessian_apply(lin, SpectralSpinor(J, x)).coeffs();
      };
      const double eta = std::clamp(res, 1e-12, 1e-1);
      const KrylovResult kr = minres(H, -rep.residual.coeffs(), abs_lambda, eta, opts.max_minres);
      const SpectralSpinor step(J, kr.x);
      double a = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        EnergyReport trial = energy.eval(cur + a * step, p);
        if (trial.dual_norm <= (1.0 - 1e-4 * a) * res) {
          cur = cur + a * step;
          rep = std::move(trial);
          accepted = true;
          break;
        }
        a *= 0.5;
      }
      if (!accepted) fail(StagnationError("Newton line search failed at p = " + short_fmt(p), res));
      res = rep.dual_norm;
      ++n;
      trace.records.push_back(mon.record(stage, p, k + n, "newton", cur, rep.value, res, nehari_defect(rep, cur)));
      if (log != nullptr) *log << "  p=" << short_fmt(p) << " newton " << n << " residual " << short_fmt(res) << "\n";
    }
    sum.newton_iterations = n;
    sum.converged = true;
    sum.I = rep.value;
    sum.residual = res;
    sum.A = rep.A;
    sum.nehari_defect = nehari_defect(rep, cur);

    const GridSpinor g = energy.transform().synthesize(cur);
    std::vector<double> radii = opts.radii;
    radii.push_back(std::min(trace.r_star, kPi));
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    sum.profile = concentration_profile(energy.grid(), g, p, radii);
    const auto it = std::find(radii.begin(), radii.end(), std::min(trace.r_star, kPi));
    const std::size_t ri = static_cast<std::size_t>(it - radii.begin());
    sum.theta_star = sum.profile.total > 0.0 ? sum.profile.theta[ri] / sum.profile.total : 0.0;
    sum.concentration_center = sum.profile.centers[ri];
    sum.upsilon = barycenter(energy.grid(), g, base, opts.barycenter_radius);
    sum.min_abs = std::sqrt(g.norm2().minCoeff());
    trace.stages.push_back(sum);
    if (log != nullptr) {
      *log << "stage " << stage << " p=" << short_fmt(p) << " I=" << short_fmt(sum.I) << " residual "
           << short_fmt(res) << " theta*=" << short_fmt(sum.theta_star) << " min|psi|=" << short_fmt(sum.min_abs)
           << " (" << k << " descent, " << n << " newton)\n";
    }

    consecutive = sum.theta_star > opts.blowup_fraction ? consecutive + 1 : 0;
    if (consecutive >= opts.blowup_stages) {
      const Eigen::Vector3d c = sum.concentration_center;
      fail(BlowUpError("blow-up: " + short_fmt(sum.theta_star) + " of the mass within r* = " +
                           short_fmt(trace.r_star) + " of (" + short_fmt(c.x()) + ", " + short_fmt(c.y()) + ", " +
                           short_fmt(c.z()) + ")",
                       c, sum.theta_star, p));
    }
    psi = cur;
  }

  SolveResult out;
  out.psi = psi;
  out.residual = trace.stages.back().residual;
  out.I = trace.stages.back().I;
  out.energy = energy.A(psi, 4.0);
  out.window_low = 4.0 * kPi / q_max;
  out.window_high = 8.0 * kPi / q_max;
  out.in_window = out.energy > out.window_low && out.energy < out.window_high;
  out.trace = trace;
  if (trace_out != nullptr) *trace_out = trace;
  return out;
}

}  // namespace spinorsurf
