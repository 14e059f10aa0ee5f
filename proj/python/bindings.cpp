#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vlasov/cli.hpp"
#include "vlasov/derive.hpp"
#include "vlasov/error.hpp"
#include "vlasov/estimator.hpp"
#include "vlasov/presets.hpp"
#include "vlasov/selftest.hpp"
#include "vlasov/solver.hpp"

namespace py = pybind11;
using namespace vlasov;

namespace {

// a preset name or generator text
dsl::GeneratorSpec resolve(const std::string& model, const Box& box) {
  return dsl::parse(is_preset(model) ? std::string(preset(model).dsl) : model, box);
}

py::array_t<double> to_array(const DensityField& f) {
  const auto& v = f.values();
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  if (f.grid().dim == 2) out.resize({f.grid().n, f.grid().n});
  return out;
}

DensityField from_array(const Grid& g, py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (static_cast<std::size_t>(a.size()) != g.size()) throw ConfigError("initial density has the wrong number of nodes");
  return DensityField(g, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> points_array(std::span<const Point> pts, int dim) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), static_cast<py::ssize_t>(dim)});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(i, 0) = pts[i].x;
    if (dim == 2) m(i, 1) = pts[i].y;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_vlasov, m) {
  m.doc() = "Mean-field scaling toolkit for interacting particle generators";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ScalingError>(m, "ScalingError", PyExc_ValueError);
  py::register_exception<UnsupportedForm>(m, "UnsupportedForm", PyExc_ValueError);
  py::register_exception<NumericalFault>(m, "NumericalFault", PyExc_ArithmeticError);

  m.def("presets", [] {
    std::vector<std::string> names;
    for (const auto& p : presets()) names.emplace_back(p.name);
    return names;
  });

  m.def(
      "derive", [](const std::string& model) { return dsl::derive_vlasov(resolve(model, Box())).str(); },
      py::arg("model"), "Mean-field equation of a preset name or generator text.");

  m.def("selftest", [](std::uint64_t seed) {
    py::dict out;
    for (const auto& r : run_selftest(seed)) out[py::str(r.name)] = py::make_tuple(r.passed, r.worst, r.detail);
    return out;
  }, py::arg("seed") = 1);

  m.def(
      "solve",
      [](const std::string& model, py::array_t<double> rho0, double L, int dim, double t_end, double dt) {
        const auto n = static_cast<int>(dim == 1 ? rho0.size() : std::lround(std::sqrt(static_cast<double>(rho0.size()))));
        const Grid g{dim, L, n};
        g.validate();
        const auto spec = resolve(model, g.box());
        KineticSolver s(dsl::derive_vlasov(spec), g);
        SolveOptions o;
        o.dt = dt;
        DensityField f0 = from_array(g, rho0);
        SolveReport rep;
        {
          py::gil_scoped_release nogil;
          rep = s.integrate(f0, t_end, {}, o);
        }
        return to_array(rep.fields.back());
      },
      py::arg("model"), py::arg("rho0"), py::arg("L") = 10.0, py::arg("dim") = 1, py::arg("t_end") = 1.0,
      py::arg("dt") = 1e-3, "RK4 solution at t_end on the grid implied by rho0.");

  m.def(
      "reference",
      [](const std::string& kind, const std::string& model, py::array_t<double> rho0, double L, double t) {
        const Grid g{1, L, static_cast<int>(rho0.size())};
        return to_array(reference_solution(kind, resolve(model, g.box()), from_array(g, rho0), t));
      },
      py::arg("kind"), py::arg("model"), py::arg("rho0"), py::arg("L") = 10.0, py::arg("t") = 1.0);

  m.def(
      "simulate",
      [](const std::string& model, double eps, double L, int dim, double rho0, double t_end,
         std::vector<double> times, std::size_t replicas, std::uint64_t seed, unsigned threads) {
        SimPlan p;
        p.box = Box(dim, L);
        p.spec = std::make_shared<const dsl::GeneratorSpec>(resolve(model, p.box));
        p.eps = eps;
        p.rho0 = rho0;
        p.t_end = t_end;
        p.snapshot_times = times.empty() ? std::vector<double>{t_end} : std::move(times);
        p.replicas = replicas;
        p.base_seed = seed;
        EnsembleResult res;
        {
          py::gil_scoped_release nogil;
          res = run_ensemble(p, threads);
        }
        py::list out;
        for (const auto& r : res.replicas) {
          py::list snaps;
          for (const auto& s : r.snapshots) snaps.append(points_array(s.points, dim));
          out.append(py::dict(py::arg("snapshots") = snaps, py::arg("truncated") = r.truncated,
                              py::arg("events") = r.events));
        }
        return out;
      },
      py::arg("model"), py::arg("eps") = 1.0, py::arg("L") = 10.0, py::arg("dim") = 1, py::arg("rho0") = 1.0,
      py::arg("t_end") = 1.0, py::arg("times") = std::vector<double>{}, py::arg("replicas") = 1,
      py::arg("seed") = 1, py::arg("threads") = 1);

  m.def(
      "g2",
      [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& snaps, double eps,
         double L, int dim, std::size_t bins) {
        std::vector<std::vector<Point>> store;
        for (const auto& a : snaps) {
          auto v = a.unchecked<2>();
          std::vector<Point> pts;
          for (py::ssize_t i = 0; i < v.shape(0); ++i) pts.push_back({v(i, 0), dim == 2 ? v(i, 1) : 0.0});
          store.push_back(std::move(pts));
        }
        SnapshotSet view(store.begin(), store.end());
        const auto c = empirical_g2(view, eps, Box(dim, L), {.bins = bins});
        return py::make_tuple(c.centers, c.values, c.stderr_);
      },
      py::arg("snapshots"), py::arg("eps"), py::arg("L") = 10.0, py::arg("dim") = 1, py::arg("bins") = 20);

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "vlasov");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process: (exit code, stdout, stderr).");
}
