#include "spinorsurf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "spinorsurf/io.hpp"

namespace spinorsurf {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

Eigen::Vector3d read_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + " must be an array of 3 numbers");
  Eigen::Vector3d v;
  for (int a = 0; a < 3; ++a) {
    if (!j[static_cast<std::size_t>(a)].is_number()) throw ConfigError(where + " must be an array of 3 numbers");
    v(a) = j[static_cast<std::size_t>(a)].get<double>();
  }
  if (!(v.norm() > 0.0)) throw ConfigError(where + " must be nonzero");
  return v.normalized();
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

std::string short_num(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_atomic(path, [&](std::ostream& out) { out << j.dump(2) << "\n"; });
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory '" + p.string() + "': " + ec.message());
  return p;
}

double nearest_critical_distance(const HypothesisReport& h, const Eigen::Vector3d& x, Eigen::Vector3d* where) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : h.critical_points) {
    const double d = std::acos(std::clamp(c.x.dot(x), -1.0, 1.0));
    if (d < best) {
      best = d;
      if (where) *where = c.x;
    }
  }
  return best;
}

// The window (4 pi / Q_max, 8 pi / Q_max) is a statement about non-constant Q.
bool window_applies(const CurvatureField& Q) { return !Q.is_constant(); }

nlohmann::json residual_json(const EnergyFunctional& energy, const SpectralSpinor& psi) {
  const EnergyReport r = energy.eval(psi, 4.0);
  const double qmax = energy.Q().max_value();
  return {{"residual", r.dual_norm},
          {"I", r.value},
          {"energy", r.A},
          {"window", {4 * kPi / qmax, 8 * kPi / qmax}},
          {"window_applies", window_applies(energy.Q())},
          {"in_window", r.A > 4 * kPi / qmax && r.A < 8 * kPi / qmax},
          {"bubble_gap", r.A - 4 * kPi / qmax}};
}

SpectralSpinor load_state(const std::string& path, int truncation) {
  SpectralSpinor psi = load_coefficients(path);
  if (psi.truncation() != truncation) {
    throw ConfigError("state '" + path + "' has truncation " + std::to_string(psi.truncation()) +
                      " but the config asks for " + std::to_string(truncation));
  }
  return psi;
}

SolveOutcome finish(SolveOutcome out, const fs::path& report_path) {
  out.report["status"] = out.status;
  out.report["exit_code"] = out.exit_code;
  write_json(report_path.string(), out.report);
  return out;
}

nlohmann::json base_report(const RunConfig& cfg, const char* command) {
  return {{"program", "spinorsurf"}, {"version", kVersion}, {"command", command}, {"config", cfg.to_json()}};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const BlowUpError*>(&e)) return kExitBlowUp;
  if (dynamic_cast<const ConvergenceError*>(&e)) return kExitStagnation;
  if (dynamic_cast<const PeriodError*>(&e)) return kExitPostcondition;
  if (dynamic_cast<const AliasingError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DomainError*>(&e)) return kExitConfig;
  return kExitFailure;
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"version", "truncation", "grid_degree", "Q", "schedule", "tolerances", "limits", "blowup", "init",
              "seed", "nodal", "mesh", "output_dir"},
             "config");
  RunConfig c;
  if (!j.contains("version")) throw ConfigError("config lacks 'version'");
  read(j, "version", c.version, "config");
  if (c.version != kConfigVersion) {
    throw ConfigError("config version " + std::to_string(c.version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  if (!j.contains("Q")) throw ConfigError("config lacks 'Q'");
  c.Q = CurvatureField::from_json(j.at("Q"));
  read(j, "truncation", c.truncation, "config");
  read(j, "grid_degree", c.grid_degree, "config");
  read(j, "schedule", c.solver.schedule, "config");
  read(j, "seed", c.solver.seed, "config");
  read(j, "output_dir", c.output_dir, "config");

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    check_keys(t, {"inner", "stage", "final", "descent_switch"}, "tolerances");
    read(t, "inner", c.solver.inner.tol, "tolerances");
    read(t, "stage", c.solver.tol_stage, "tolerances");
    read(t, "final", c.solver.tol_final, "tolerances");
    read(t, "descent_switch", c.solver.descent_switch, "tolerances");
  }
  if (j.contains("limits")) {
    const auto& t = j.at("limits");
    check_keys(t, {"max_inner", "max_cg", "descent_steps", "max_newton", "max_minres"}, "limits");
    read(t, "max_inner", c.solver.inner.max_iter, "limits");
    read(t, "max_cg", c.solver.inner.max_cg, "limits");
    read(t, "descent_steps", c.solver.descent_steps, "limits");
    read(t, "max_newton", c.solver.max_newton, "limits");
    read(t, "max_minres", c.solver.max_minres, "limits");
  }
  if (j.contains("blowup")) {
    const auto& t = j.at("blowup");
    check_keys(t, {"fraction", "spacings", "stages", "radii", "barycenter_radius", "min_capture"}, "blowup");
    read(t, "fraction", c.solver.blowup_fraction, "blowup");
    read(t, "spacings", c.solver.blowup_spacings, "blowup");
    read(t, "stages", c.solver.blowup_stages, "blowup");
    read(t, "radii", c.solver.radii, "blowup");
    read(t, "barycenter_radius", c.solver.barycenter_radius, "blowup");
    read(t, "min_capture", c.solver.min_capture, "blowup");
  }
  if (j.contains("init")) {
    const auto& t = j.at("init");
    check_keys(t, {"type", "center", "scale", "path"}, "init");
    read(t, "type", c.init.type, "init");
    if (t.contains("center") && !t.at("center").is_null()) c.init.center = read_point(t.at("center"), "init.center");
    read(t, "scale", c.init.scale, "init");
    read(t, "path", c.init.path, "init");
  }
  if (j.contains("nodal")) {
    const auto& t = j.at("nodal");
    check_keys(t, {"candidate_threshold", "zero_tolerance"}, "nodal");
    read(t, "candidate_threshold", c.nodal.candidate_threshold, "nodal");
    read(t, "zero_tolerance", c.nodal.zero_tolerance, "nodal");
  }
  if (j.contains("mesh")) {
    const auto& t = j.at("mesh");
    check_keys(t, {"level", "format", "edge_quadrature", "period_tolerance"}, "mesh");
    read(t, "level", c.mesh.level, "mesh");
    read(t, "format", c.mesh.format, "mesh");
    read(t, "edge_quadrature", c.mesh.edge_quadrature, "mesh");
    read(t, "period_tolerance", c.mesh.period_tolerance, "mesh");
  }
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json init_j = {{"type", init.type}, {"scale", init.scale}};
  init_j["center"] = init.center ? vec_json(*init.center) : nlohmann::json(nullptr);
  if (!init.path.empty()) init_j["path"] = init.path;
  return {{"version", version},
          {"truncation", truncation},
          {"grid_degree", grid_degree},
          {"Q", Q.to_json()},
          {"schedule", solver.schedule},
          {"tolerances",
           {{"inner", solver.inner.tol},
            {"stage", solver.tol_stage},
            {"final", solver.tol_final},
            {"descent_switch", solver.descent_switch}}},
          {"limits",
           {{"max_inner", solver.inner.max_iter},
            {"max_cg", solver.inner.max_cg},
            {"descent_steps", solver.descent_steps},
            {"max_newton", solver.max_newton},
            {"max_minres", solver.max_minres}}},
          {"blowup",
           {{"fraction", solver.blowup_fraction},
            {"spacings", solver.blowup_spacings},
            {"stages", solver.blowup_stages},
            {"radii", solver.radii},
            {"barycenter_radius", solver.barycenter_radius},
            {"min_capture", solver.min_capture}}},
          {"init", init_j},
          {"seed", solver.seed},
          {"nodal", {{"candidate_threshold", nodal.candidate_threshold}, {"zero_tolerance", nodal.zero_tolerance}}},
          {"mesh",
           {{"level", mesh.level},
            {"format", mesh.format},
            {"edge_quadrature", mesh.edge_quadrature},
            {"period_tolerance", mesh.period_tolerance}}},
          {"output_dir", output_dir}};
}

void RunConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("unsupported config version");
  if (truncation < 4) throw ConfigError("truncation J must be at least 4");
  if (grid_degree < 0) throw ConfigError("grid_degree must be nonnegative (0 selects the default)");
  solver.validate();
  if (init.type != "bubble" && init.type != "state" && init.type != "random") {
    throw ConfigError("init.type must be 'bubble', 'state' or 'random'");
  }
  if (init.type == "bubble" && !(init.scale > 0.0)) throw ConfigError("init.scale must be positive");
  if (init.type == "state" && init.path.empty()) throw ConfigError("init.path is required for a state init");
  if (!(nodal.candidate_threshold > 0.0 && nodal.candidate_threshold < 1.0)) {
    throw ConfigError("nodal.candidate_threshold must lie in (0, 1)");
  }
  if (!(nodal.zero_tolerance > 0.0)) throw ConfigError("nodal.zero_tolerance must be positive");
  if (mesh.level < 0 || mesh.level > 7) throw ConfigError("mesh.level must lie in [0, 7]");
  if (mesh.format != "obj" && mesh.format != "ply" && mesh.format != "both") {
    throw ConfigError("mesh.format must be 'obj', 'ply' or 'both'");
  }
  if (mesh.edge_quadrature < 1) throw ConfigError("mesh.edge_quadrature must be positive");
  if (!(mesh.period_tolerance > 0.0)) throw ConfigError("mesh.period_tolerance must be positive");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

nlohmann::json SpectrumReport::to_json() const {
  nlohmann::json j = {{"dim", dim}, {"truncation", truncation}, {"basis_size", basis_size}};
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"level", r.level}, {"eigenvalue", r.eigenvalue}, {"multiplicity", r.multiplicity}});
  }
  if (validated) {
    j["eigen_residual"] = eigen_residual;
    j["gram_error"] = gram_error;
  }
  return j;
}

SpectrumReport run_spectrum(int truncation, int dim) {
  if (truncation < 0) throw ConfigError("truncation must be nonnegative");
  if (dim < 2) throw ConfigError("sphere dimension must be at least 2");
  SpectrumReport rep;
  rep.dim = dim;
  rep.truncation = truncation;
  for (int j = 0; j <= truncation; ++j) {
    for (int s : {1, -1}) {
      const long long mult = dirac_multiplicity(dim, j);
      rep.rows.push_back({j, dirac_eigenvalue(dim, j, s), mult});
      rep.basis_size += mult;
    }
  }
  if (dim != 2) return rep;

  const SpectralTransform tr(truncation, QuadratureGrid::gauss(2 * truncation + 4));
  const QuadratureGrid& grid = tr.grid();
  const std::size_t n = basis_size(truncation);
  std::vector<GridSpinor> cols;
  cols.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const SpectralSpinor eta = SpectralSpinor::basis(truncation, basis_index(k));
    const GridSpinor v = tr.synthesize(eta);
    const GridSpinor d = dirac_from_gradient(grid, v, tr.gradient(eta));
    Eigen::VectorXd r2(static_cast<Eigen::Index>(grid.size()));
    const double lambda = eigenvalue(basis_index(k));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      r2(static_cast<Eigen::Index>(i)) = (d.at(i) - lambda * v.at(i)).squaredNorm();
    }
    rep.eigen_residual = std::max(rep.eigen_residual, std::sqrt(integrate(grid, r2)));
    cols.push_back(v);
  }
  Eigen::MatrixXcd B(static_cast<Eigen::Index>(2 * grid.size()), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd sw = grid.weights.cwiseSqrt();
  const auto g = static_cast<Eigen::Index>(grid.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    B.col(c).head(g) = sw.cwiseProduct(cols[k].up);
    B.col(c).tail(g) = sw.cwiseProduct(cols[k].dn);
  }
  const Eigen::MatrixXcd G = B.adjoint() * B;
  rep.gram_error = (G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
  rep.validated = true;
  return rep;
}

// ---------------------------------------------------------------------------
// bubble
// ---------------------------------------------------------------------------

nlohmann::json BubbleReport::to_json() const {
  return {{"center", vec_json(bubble.center)},
          {"scale", bubble.scale},
          {"q_center", bubble.q_center},
          {"dim", bubble.dim},
          {"flat_energy", flat.value},
          {"flat_energy_analytic", flat.analytic},
          {"flat_tail_estimate", flat.tail_estimate},
          {"truncation", truncation},
          {"captured_fraction", captured_fraction},
          {"loss", loss},
          {"sphere_energy", sphere_energy},
          {"equation_residual", equation_residual},
          {"norm_law_error", norm_law_error}};
}

BubbleReport run_bubble(const Bubble& b, int truncation) {
  BubbleReport rep;
  rep.bubble = b;
  rep.flat = bubble_energy(b);
  rep.truncation = truncation;
  if (b.dim != 2) return rep;

  const SphereBubble sb = bubble_to_sphere(b, truncation, 1.0);
  rep.captured_fraction = sb.captured_fraction;
  rep.loss = sb.loss;
  const SpectralTransform tr(truncation, QuadratureGrid::gauss(4 * (truncation + 1) + 2));
  const QuadratureGrid& grid = tr.grid();
  const GridSpinor v = tr.synthesize(sb.psi);
  const GridSpinor d = tr.synthesize(dirac_apply(sb.psi));
  const Eigen::VectorXd n2 = v.norm2();
  rep.sphere_energy = integrate(grid, n2.cwiseProduct(n2));
  Eigen::VectorXd r2(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    r2(ii) = (d.at(i) - b.q_center * n2(ii) * v.at(i)).squaredNorm();
    rep.norm_law_error =
        std::max(rep.norm_law_error, std::abs(std::sqrt(n2(ii)) - sphere_bubble_eval(b, grid.nodes[i]).norm()));
  }
  rep.equation_residual = std::sqrt(integrate(grid, r2));
  return rep;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

SolveOutcome run_solve(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const fs::path dir = ensure_dir(cfg.output_dir);
  const fs::path report_path = dir / "report.json";
  SolveOutcome out;
  out.report = base_report(cfg, "solve");

  const HypothesisReport hyp = check_Q_hypothesis(cfg.Q);
  out.report["hypothesis"] = hyp.to_json();
  if (log) {
    *log << "Q: " << hyp.classification << ", Q_max " << hyp.q_max << ", Q_min " << hyp.q_min << ", d interval ("
         << hyp.d_lower << ", " << hyp.d_upper << ")\n";
  }

  const EnergyFunctional energy(cfg.truncation, cfg.Q, cfg.grid_degree);
  SolverInit init;
  if (cfg.init.type == "bubble") {
    Bubble b = default_init_bubble(cfg.Q, cfg.init.scale);
    if (cfg.init.center) b = Bubble::make(*cfg.init.center, cfg.init.scale, cfg.Q.value(*cfg.init.center));
    init.bubble = b;
  } else if (cfg.init.type == "state") {
    init.state = load_state(cfg.init.path, cfg.truncation);
  } else {
    std::mt19937_64 rng(cfg.solver.seed);
    init.state = random_spinor(cfg.truncation, rng).plus();
  }

  SolverTrace trace;
  const fs::path trace_path = dir / "trace.csv";
  out.report["artifacts"] = {{"trace", trace_path.filename().string()}};
  try {
    SolveResult res = solve_continuation(energy, init, cfg.solver, log, &trace);
    trace.save_csv(trace_path.string());
    const fs::path state_path = dir / "state.coef";
    save_coefficients(state_path.string(), res.psi);
    out.report["artifacts"]["state"] = state_path.filename().string();

    nlohmann::json solve = residual_json(energy, res.psi);
    solve["stages"] = trace.stages_json();
    solve["r_star"] = trace.r_star;
    out.report["solve"] = solve;

    const NodalReport nodal = nodal_analysis(energy, res.psi, cfg.nodal);
    const WillmoreReport w = willmore(energy, res.psi);
    out.report["nodal"] = nodal.to_json();
    out.report["willmore"] = w.to_json();

    std::vector<std::string> failed;
    if (!nodal.zero_free()) failed.push_back("zero-free (verdict " + nodal.verdict + ")");
    if (window_applies(cfg.Q) && !solve["in_window"].get<bool>()) failed.push_back("energy window");
    // Q = c + b.x admits no solution; a converged state is a truncation
    // artifact that approaches a bubble as J grows.
    if (hyp.classification == "affine-obstruction") failed.push_back("hypothesis (affine Q has no solution)");
    out.report["postconditions"] = {{"zero_free", nodal.zero_free()},
                                    {"hypothesis", hyp.classification},
                                    {"window", window_applies(cfg.Q) ? nlohmann::json(solve["in_window"])
                                                                      : nlohmann::json("not applicable")},
                                    {"failed", failed}};
    out.psi = res.psi;
    if (failed.empty()) {
      out.status = "ok";
      out.exit_code = kExitOk;
    } else {
      out.status = "postcondition";
      out.exit_code = kExitPostcondition;
      if (log) {
        for (const auto& f : failed) *log << "postcondition failed: " << f << "\n";
      }
    }
    if (log) {
      *log << "energy " << res.energy << ", residual " << res.residual << ", W " << w.W << ", verdict "
           << nodal.verdict << "\n";
    }
  } catch (const BlowUpError& e) {
    trace.save_csv(trace_path.string());
    Eigen::Vector3d crit = Eigen::Vector3d::Zero();
    const double dist = nearest_critical_distance(hyp, e.point(), &crit);
    out.report["blowup"] = {{"point", vec_json(e.point())},
                            {"fraction", e.fraction()},
                            {"p", e.p()},
                            {"nearest_critical_point", vec_json(crit)},
                            {"critical_distance", dist},
                            {"message", e.what()}};
    out.report["solve"] = {{"stages", trace.stages_json()}, {"r_star", trace.r_star}};
    out.status = "blow-up";
    out.exit_code = kExitBlowUp;
    if (log) *log << "blow-up: " << e.what() << " (distance to nearest critical point " << dist << ")\n";
  } catch (const ConvergenceError& e) {
    trace.save_csv(trace_path.string());
    out.report["error"] = {{"message", e.what()}, {"last_residual", e.last_residual()}};
    out.report["solve"] = {{"stages", trace.stages_json()}, {"r_star", trace.r_star}};
    out.status = "stagnation";
    out.exit_code = kExitStagnation;
    if (log) *log << "stagnation: " << e.what() << "\n";
  } catch (const DomainError& e) {
    out.report["error"] = {{"message", e.what()}};
    out.status = "config";
    out.exit_code = kExitConfig;
    if (log) *log << "unusable input: " << e.what() << "\n";
  }
  return finish(std::move(out), report_path);
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

SolveOutcome run_diagnose(const RunConfig& cfg, const std::string& state_path, std::ostream* log) {
  cfg.validate();
  const fs::path dir = ensure_dir(cfg.output_dir);
  SolveOutcome out;
  out.report = base_report(cfg, "diagnose");
  out.report["state"] = state_path;
  const SpectralSpinor psi = load_state(state_path, cfg.truncation);
  const EnergyFunctional energy(cfg.truncation, cfg.Q, cfg.grid_degree);

  out.report["hypothesis"] = check_Q_hypothesis(cfg.Q).to_json();
  const nlohmann::json res = residual_json(energy, psi);
  out.report["solve"] = res;
  const NodalReport nodal = nodal_analysis(energy, psi, cfg.nodal);
  out.report["nodal"] = nodal.to_json();
  out.report["willmore"] = willmore(energy, psi).to_json();
  {
    const auto prof = concentration_profile(energy, psi, 4.0, cfg.solver.radii);
    nlohmann::json c = {{"radii", prof.radii}, {"total", prof.total}};
    c["theta"] = nlohmann::json::array();
    for (std::size_t i = 0; i < prof.theta.size(); ++i) c["theta"].push_back(prof.theta[i] / prof.total);
    out.report["concentration"] = c;
  }
  ScalOptions so;
  so.equation_tolerance = std::max(1e-6, cfg.solver.tol_final);
  try {
    out.report["scal"] = scal_identity_check(energy, psi, so).to_json();
  } catch (const DomainError& e) {
    out.report["scal"] = {{"error", e.what()}};
  }

  std::vector<std::string> failed;
  if (res["residual"].get<double>() > std::max(cfg.solver.tol_final, 1e-8)) failed.push_back("residual");
  if (!nodal.zero_free()) failed.push_back("zero-free (verdict " + nodal.verdict + ")");
  if (window_applies(cfg.Q) && !res["in_window"].get<bool>()) failed.push_back("energy window");
  out.report["postconditions"] = {{"failed", failed}};
  out.psi = psi;
  out.status = failed.empty() ? "ok" : "postcondition";
  out.exit_code = failed.empty() ? kExitOk : kExitPostcondition;
  if (log) {
    *log << "residual " << res["residual"].get<double>() << ", energy " << res["energy"].get<double>()
         << ", verdict " << nodal.verdict << "\n";
    for (const auto& f : failed) *log << "postcondition failed: " << f << "\n";
  }
  return finish(std::move(out), dir / "diagnose.json");
}

// ---------------------------------------------------------------------------
// immerse
// ---------------------------------------------------------------------------

SolveOutcome run_immerse(const RunConfig& cfg, const std::string& state_path, const ImmerseOptions& opts,
                         std::ostream* log) {
  cfg.validate();
  if (opts.out_path.empty()) throw ConfigError("immerse needs an output mesh path");
  std::vector<std::pair<std::string, MeshFormat>> targets;
  if (cfg.mesh.format == "both") {
    const fs::path base = fs::path(opts.out_path).replace_extension();
    targets = {{base.string() + ".obj", MeshFormat::obj}, {base.string() + ".ply", MeshFormat::ply}};
  } else {
    targets = {{opts.out_path, mesh_format_from_path(opts.out_path)}};
  }
  const fs::path mesh_dir = fs::path(opts.out_path).parent_path();
  if (!mesh_dir.empty()) ensure_dir(mesh_dir.string());
  const fs::path report_path = (mesh_dir.empty() ? fs::path(".") : mesh_dir) / "immersion.json";

  SolveOutcome out;
  out.report = base_report(cfg, "immerse");
  out.report["state"] = state_path;
  const SpectralSpinor psi = load_state(state_path, cfg.truncation);
  const EnergyFunctional energy(cfg.truncation, cfg.Q, cfg.grid_degree);
  const nlohmann::json res = residual_json(energy, psi);
  out.report["solve"] = res;
  out.psi = psi;

  const double residual = res["residual"].get<double>();
  if (residual > opts.residual_tolerance) {
    out.status = "postcondition";
    out.exit_code = kExitPostcondition;
    out.report["error"] = {{"message", "state does not solve the equation: residual " + short_num(residual)}};
    if (log) *log << "refusing: residual " << residual << " > " << opts.residual_tolerance << "\n";
    return finish(std::move(out), report_path);
  }
  const NodalReport nodal = nodal_analysis(energy, psi, cfg.nodal);
  out.report["nodal"] = nodal.to_json();
  if (!nodal.zero_free()) {
    out.status = "postcondition";
    out.exit_code = kExitPostcondition;
    out.report["error"] = {{"message", "state is not zero-free (verdict " + nodal.verdict + ")"}};
    if (log) *log << "refusing: nodal verdict " << nodal.verdict << "\n" << nodal.to_json().dump(2) << "\n";
    return finish(std::move(out), report_path);
  }
  out.report["willmore"] = willmore(energy, psi).to_json();
  try {
    out.report["scal"] = scal_identity_check(energy, psi, {true, opts.residual_tolerance}).to_json();
  } catch (const DomainError& e) {
    out.report["scal"] = {{"error", e.what()}};
  }

  ImmersionOptions io;
  io.level = cfg.mesh.level;
  io.edge_quadrature = cfg.mesh.edge_quadrature;
  io.period_tolerance = cfg.mesh.period_tolerance;
  try {
    const ImmersionMesh mesh = reconstruct_immersion(psi, cfg.Q, io);
    out.report["immersion"] = mesh.to_json();
    out.report["artifacts"] = nlohmann::json::array();
    for (const auto& [path, format] : targets) {
      export_mesh(mesh, path, format);
      out.report["artifacts"].push_back(path);
    }
    out.status = "ok";
    out.exit_code = kExitOk;
    if (log) {
      *log << "mesh: " << mesh.mesh.vertices.size() << " vertices, H vs Q relative L2 " << mesh.h_relative_l2
           << ", circulation " << mesh.circulation << ", Gauss-Bonnet " << mesh.gauss_bonnet << "\n";
    }
  } catch (const PeriodError& e) {
    out.report["error"] = {{"message", e.what()}, {"period_defect", e.defect()}};
    out.status = "postcondition";
    out.exit_code = kExitPostcondition;
    if (log) *log << "period defect: " << e.what() << "\n";
  } catch (const DomainError& e) {
    out.report["error"] = {{"message", e.what()}};
    out.status = "postcondition";
    out.exit_code = kExitPostcondition;
    if (log) *log << "refusing: " << e.what() << "\n";
  }
  return finish(std::move(out), report_path);
}

}  // namespace spinorsurf
