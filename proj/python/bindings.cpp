#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "qpe/errors.hpp"
#include "qpe/estimate.hpp"
#include "qpe/models.hpp"
#include "qpe/record.hpp"
#include "qpe/spectral.hpp"

namespace py = pybind11;
using namespace qpe;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw InvalidParam("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

LossVariant parse_loss(const std::string& name) {
  if (name == "oracle") return LossVariant::kOracleMean;
  if (name == "residual") return LossVariant::kRecordResidual;
  throw InvalidParam("loss must be 'oracle' or 'residual', got '" + name + "'");
}

EstimationProblem make_problem(const TrajectoryRecord& record, const std::string& model,
                               const ParamMap& overrides, const std::vector<std::string>& free,
                               const std::string& loss, double burn_in, int threads) {
  EstimationProblem p{.model = make_model(model, overrides, free), .record = record, .settings = {}};
  p.settings.kind.variant = parse_loss(loss);
  p.settings.stepper.burn_in_time = burn_in;
  p.settings.threads = threads;
  return p;
}

py::dict surface_dict(const LossSurface& s) {
  py::dict d;
  d["params"] = s.param_names;
  py::list axes;
  for (const auto& a : s.axes) axes.append(to_array(a));
  d["axes"] = axes;
  d["losses"] = to_array(s.losses);
  d["argmin"] = s.argmin_point.values;
  d["best_loss"] = s.best_loss;
  return d;
}

Psd psd_on(const std::vector<double>& omega, const std::vector<double>& values) {
  Psd p{omega, values};
  p.validate();
  return p;
}

PriorSpectrum prior_on(const std::vector<double>& omega,
                       const std::optional<py::array_t<double>>& s_f) {
  if (!s_f) return SymbolicInfinite{};
  return psd_on(omega, to_vector(*s_f));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Force estimation from continuous quantum measurement records";

  static py::exception<Error> base(m, "QpeError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidParam& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const InvalidGrid& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<TrajectoryRecord>(m, "Record")
      .def_property_readonly("times", [](const TrajectoryRecord& r) { return to_array(r.times); })
      .def_property_readonly("currents",
                             [](const TrajectoryRecord& r) { return to_array(r.currents); })
      .def_property_readonly("truth",
                             [](const TrajectoryRecord& r) -> py::object {
                               if (!r.truth) return py::none();
                               return to_array(*r.truth);
                             })
      .def_property_readonly("dt", [](const TrajectoryRecord& r) { return r.meta.dt; })
      .def_property_readonly("seed", [](const TrajectoryRecord& r) { return r.meta.seed; })
      .def_property_readonly("model", [](const TrajectoryRecord& r) { return r.meta.model; })
      .def_property_readonly("params", [](const TrajectoryRecord& r) { return r.meta.params; })
      .def("__len__", &TrajectoryRecord::size);

  m.def("registered_models", &registered_models);
  m.def("derive_seed", &derive_seed, py::arg("base_seed"), py::arg("stream_index"));

  m.def(
      "simulate",
      [](const std::string& model, const ParamMap& truth, const ParamMap& overrides, double tau,
         std::uint64_t seed, bool emit_truth, double dt) {
        StepperConfig cfg{};
        cfg.dt = dt;
        py::gil_scoped_release release;
        return simulate_experiment(make_model(model, overrides), truth, cfg, tau, seed,
                                   emit_truth);
      },
      py::arg("model") = "levitated", py::arg("truth") = ParamMap{},
      py::arg("overrides") = ParamMap{}, py::arg("tau") = 10.0, py::arg("seed") = 0,
      py::arg("emit_truth") = true, py::arg("dt") = 1e-3,
      "Simulate a measurement record at the given true parameters.");

  m.def("read_record", [](const std::filesystem::path& p) { return read_record(p); });
  m.def("write_record",
        [](const TrajectoryRecord& r, const std::filesystem::path& p) { write_record(r, p); });

  m.def(
      "loss",
      [](const TrajectoryRecord& record, const std::vector<double>& point,
         const std::string& model, const ParamMap& overrides,
         const std::vector<std::string>& free, const std::string& loss, double burn_in) {
        const auto p = make_problem(record, model, overrides, free, loss, burn_in, 1);
        py::gil_scoped_release release;
        return evaluate_loss(p, ParamPoint{point});
      },
      py::arg("record"), py::arg("point"), py::arg("model") = "levitated",
      py::arg("overrides") = ParamMap{}, py::arg("free") = std::vector<std::string>{},
      py::arg("loss") = "oracle", py::arg("burn_in") = 0.0);

  m.def(
      "sweep",
      [](const TrajectoryRecord& record, const std::vector<std::string>& params,
         const std::vector<std::vector<double>>& axes, const std::string& model,
         const ParamMap& overrides, const std::string& loss, double burn_in, int threads) {
        const auto p = make_problem(record, model, overrides, params, loss, burn_in, threads);
        LossSurface s;
        {
          py::gil_scoped_release release;
          s = sweep_axes(p, params, axes);
        }
        return surface_dict(s);
      },
      py::arg("record"), py::arg("params"), py::arg("axes"), py::arg("model") = "levitated",
      py::arg("overrides") = ParamMap{}, py::arg("loss") = "oracle", py::arg("burn_in") = 0.0,
      py::arg("threads") = 0, "Evaluate the loss on the Cartesian product of the axes.");

  m.def(
      "estimate",
      [](const TrajectoryRecord& record, const std::string& param, double lo, double hi, int n,
         int rounds, double shrink, const std::string& model, const ParamMap& overrides,
         const std::string& loss, double burn_in, int threads) {
        const auto p = make_problem(record, model, overrides, {param}, loss, burn_in, threads);
        LossSurface s;
        {
          py::gil_scoped_release release;
          s = sweep_1d(p, param, {lo, hi, n});
          if (rounds > 0) s = refine_min(p, s, rounds, shrink);
        }
        return surface_dict(s);
      },
      py::arg("record"), py::arg("param") = "f", py::arg("lo") = 0.0, py::arg("hi") = 2.0,
      py::arg("n") = 21, py::arg("rounds") = 0, py::arg("shrink") = 10.0,
      py::arg("model") = "levitated", py::arg("overrides") = ParamMap{},
      py::arg("loss") = "oracle", py::arg("burn_in") = 0.0, py::arg("threads") = 0,
      "Grid search over one parameter, optionally refined around the minimum.");

  m.def(
      "periodogram",
      [](const py::array_t<double>& samples, double dt, int segments,
         const std::string& window) {
        Window w;
        if (window == "hann") {
          w = Window::kHann;
        } else if (window == "rect") {
          w = Window::kRectangular;
        } else {
          throw InvalidParam("window must be 'hann' or 'rect'");
        }
        const Psd p = periodogram(to_vector(samples), dt, segments, w);
        return py::make_tuple(to_array(p.frequencies), to_array(p.values));
      },
      py::arg("samples"), py::arg("dt"), py::arg("segments") = 8, py::arg("window") = "hann");

  m.def(
      "qcrb_bound",
      [](const py::array_t<double>& omega, const py::array_t<double>& chi2,
         const py::array_t<double>& s_fba, const std::optional<py::array_t<double>>& s_f) {
        const auto w = to_vector(omega);
        QcrbInputs in{.chi2 = psd_on(w, to_vector(chi2)),
                      .s_fba = psd_on(w, to_vector(s_fba)),
                      .s_f = prior_on(w, s_f)};
        return to_array(qcrb_spectral_bound(in).values);
      },
      py::arg("omega"), py::arg("chi2"), py::arg("s_fba"), py::arg("s_f") = py::none());

  m.def(
      "smoothing_variance_bound",
      [](const py::array_t<double>& omega, const py::array_t<double>& s_z,
         const std::optional<py::array_t<double>>& s_f, double lo, double hi) {
        const auto w = to_vector(omega);
        return smoothing_variance_bound(psd_on(w, to_vector(s_z)), prior_on(w, s_f), {lo, hi});
      },
      py::arg("omega"), py::arg("s_z"), py::arg("s_f") = py::none(), py::arg("lo"),
      py::arg("hi"));

  m.def(
      "to_physical_force",
      [](double f, double mass, double omega0_si) {
        return to_physical_force(f, {.mass = mass, .omega0_si = omega0_si});
      },
      py::arg("f"), py::arg("mass"), py::arg("omega0_si"));
}
