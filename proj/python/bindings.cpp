#include <string>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spinorsurf/pipeline.hpp"

namespace py = pybind11;
using namespace spinorsurf;

namespace {

// Reports cross the boundary as plain Python objects through the json module.
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  if (py::isinstance<py::str>(o)) return nlohmann::json::parse(o.cast<std::string>());
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict outcome(const SolveOutcome& out) {
  py::dict d;
  d["exit_code"] = out.exit_code;
  d["status"] = out.status;
  d["report"] = to_py(out.report);
  d["psi"] = out.psi ? py::cast(*out.psi) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prescribed-curvature spinors on S^2";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<AliasingError>(m, "AliasingError", base.ptr());
  py::register_exception<TruncationMismatch>(m, "TruncationMismatch", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<PeriodError>(m, "PeriodError", base.ptr());

  m.def("dirac_eigenvalue", &dirac_eigenvalue, py::arg("dim"), py::arg("level"), py::arg("sign"));
  m.def("dirac_multiplicity", &dirac_multiplicity, py::arg("dim"), py::arg("level"));
  m.def("basis_size", &basis_size, py::arg("truncation"));

  py::class_<SpectralSpinor>(m, "SpectralSpinor")
      .def(py::init<int>(), py::arg("truncation"))
      .def(py::init<int, Eigen::VectorXcd>(), py::arg("truncation"), py::arg("coeffs"))
      .def_static("basis", [](int J, int level, int sign, int degeneracy, cplx value) {
        return SpectralSpinor::basis(J, BasisIndex{level, sign, degeneracy}, value);
      }, py::arg("truncation"), py::arg("level"), py::arg("sign"), py::arg("degeneracy"), py::arg("value") = cplx(1.0))
      .def_property_readonly("truncation", &SpectralSpinor::truncation)
      .def_property("coeffs", [](const SpectralSpinor& s) { return s.coeffs(); },
                    [](SpectralSpinor& s, const Eigen::VectorXcd& c) {
                      if (c.size() != s.coeffs().size()) throw TruncationMismatch("coefficient count does not match");
                      s.coeffs() = c;
                    })
      .def("plus", &SpectralSpinor::plus)
      .def("minus", &SpectralSpinor::minus)
      .def("__call__", [](const SpectralSpinor& s, const Eigen::Vector3d& x) { return evaluate(s, x.normalized()); },
           py::arg("x"))
      .def("save", [](const SpectralSpinor& s, const std::string& path) { save_coefficients(path, s); })
      .def_static("load", &load_coefficients, py::arg("path"));

  py::class_<CurvatureField>(m, "CurvatureField")
      .def_static("constant", &CurvatureField::constant, py::arg("value"))
      .def_static("from_json", [](const py::object& o) { return CurvatureField::from_json(from_py(o)); })
      .def("to_json", [](const CurvatureField& q) { return to_py(q.to_json()); })
      .def_property_readonly("family", &CurvatureField::family_name)
      .def("__call__", &CurvatureField::value, py::arg("x"))
      .def("gradient", &CurvatureField::gradient, py::arg("x"))
      .def("hessian", &CurvatureField::hessian, py::arg("x"))
      .def("integral", &CurvatureField::integral)
      .def("normalized", &CurvatureField::normalized)
      .def_property_readonly("max_value", &CurvatureField::max_value)
      .def_property_readonly("min_value", &CurvatureField::min_value);

  m.def("check_Q_hypothesis", [](const CurvatureField& q) { return to_py(check_Q_hypothesis(q).to_json()); },
        py::arg("Q"));

  py::class_<Bubble>(m, "Bubble")
      .def(py::init([](const Eigen::Vector3d& c, double scale, double q, int dim) {
             return Bubble::make(c.normalized(), scale, q, dim);
           }),
           py::arg("center"), py::arg("scale"), py::arg("q_center") = 1.0, py::arg("dim") = 2)
      .def_readonly("center", &Bubble::center)
      .def_readonly("scale", &Bubble::scale)
      .def_readonly("q_center", &Bubble::q_center)
      .def_readonly("dim", &Bubble::dim)
      .def("flat_energy", [](const Bubble& b) { return bubble_energy(b).value; })
      .def("on_sphere", [](const Bubble& b, const Eigen::Vector3d& x) { return sphere_bubble_eval(b, x.normalized()); },
           py::arg("x"))
      .def("to_sphere", [](const Bubble& b, int J) { return bubble_to_sphere(b, J).psi; }, py::arg("truncation"));

  py::class_<EnergyFunctional>(m, "EnergyFunctional")
      .def(py::init<int, CurvatureField, int>(), py::arg("truncation"), py::arg("Q"), py::arg("grid_degree") = 0)
      .def_property_readonly("truncation", &EnergyFunctional::truncation)
      .def("value", &EnergyFunctional::value, py::arg("psi"), py::arg("p"))
      .def("A", py::overload_cast<const SpectralSpinor&, double>(&EnergyFunctional::A, py::const_), py::arg("psi"),
           py::arg("p"))
      .def("rayleigh", [](const EnergyFunctional& e, const SpectralSpinor& psi, double p) {
        return e.rayleigh(psi, p).value;
      }, py::arg("psi"), py::arg("p"))
      .def("residual", [](const EnergyFunctional& e, const SpectralSpinor& psi, double p) {
        return e.eval(psi, p).dual_norm;
      }, py::arg("psi"), py::arg("p") = 4.0)
      .def("nodal_analysis", [](const EnergyFunctional& e, const SpectralSpinor& psi) {
        return to_py(nodal_analysis(e, psi).to_json());
      }, py::arg("psi"))
      .def("willmore", [](const EnergyFunctional& e, const SpectralSpinor& psi) {
        return to_py(willmore(e, psi).to_json());
      }, py::arg("psi"))
      .def("scal_identity", [](const EnergyFunctional& e, const SpectralSpinor& psi) {
        return to_py(scal_identity_check(e, psi).to_json());
      }, py::arg("psi"));

  m.def("spectrum", [](int J, int dim) { return to_py(run_spectrum(J, dim).to_json()); }, py::arg("truncation"),
        py::arg("dim") = 2);

  m.def("reconstruct_immersion", [](const SpectralSpinor& psi, const CurvatureField& q, int level) {
    ImmersionOptions o;
    o.level = level;
    const ImmersionMesh im = reconstruct_immersion(psi, q, o);
    Eigen::MatrixXd V(static_cast<Eigen::Index>(im.mesh.vertices.size()), 3);
    for (std::size_t i = 0; i < im.mesh.vertices.size(); ++i) V.row(static_cast<Eigen::Index>(i)) = im.mesh.vertices[i];
    Eigen::MatrixXi F(static_cast<Eigen::Index>(im.mesh.triangles.size()), 3);
    for (std::size_t i = 0; i < im.mesh.triangles.size(); ++i) {
      for (int k = 0; k < 3; ++k) F(static_cast<Eigen::Index>(i), k) = im.mesh.triangles[i][static_cast<std::size_t>(k)];
    }
    py::dict d;
    d["vertices"] = V;
    d["triangles"] = F;
    d["mean_curvature"] = im.mean_curvature;
    d["target_q"] = im.target_q;
    d["report"] = to_py(im.to_json());
    return d;
  }, py::arg("psi"), py::arg("Q"), py::arg("level") = 4);

  m.def("solve", [](const py::object& config) {
    const RunConfig cfg = RunConfig::from_json(from_py(config));
    py::gil_scoped_release release;
    SolveOutcome out = run_solve(cfg);
    py::gil_scoped_acquire acquire;
    return outcome(out);
  }, py::arg("config"), "Run the solve pipeline on a config (dict or JSON string); writes into output_dir.");

  m.def("immerse", [](const py::object& config, const std::string& state, const std::string& out_path) {
    const RunConfig cfg = RunConfig::from_json(from_py(config));
    ImmerseOptions o;
    o.out_path = out_path;
    return outcome(run_immerse(cfg, state, o));
  }, py::arg("config"), py::arg("state"), py::arg("out"));
}
