#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tpp/error.hpp"
#include "tpp/hawkes.hpp"
#include "tpp/metrics.hpp"
#include "tpp/pipeline.hpp"

namespace py = pybind11;
using namespace tpp;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
RunnerConfig config_from_text(const std::string& text, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::parse(text);
  apply_overrides(j, overrides);
  return runner_config_from_json(j);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal point process benchmark core";

  static py::exception<Error> tpp_error(m, "TppError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      tpp_error(e.what());
    }
  });

  py::class_<EventSequence>(m, "EventSequence")
      .def(py::init([](std::vector<double> times, std::vector<int> types, double t_end) {
             EventSequence s{std::move(times), std::move(types), t_end};
             s.validate();
             return s;
           }),
           py::arg("times"), py::arg("types"), py::arg("t_end"))
      .def_readonly("times", &EventSequence::times)
      .def_readonly("types", &EventSequence::types)
      .def_readonly("t_end", &EventSequence::t_end)
      .def("__len__", &EventSequence::size)
      .def("__eq__", [](const EventSequence& a, const EventSequence& b) { return a == b; })
      .def("__repr__", [](const EventSequence& s) {
        return "EventSequence(n=" + std::to_string(s.size()) + ", t_end=" + std::to_string(s.t_end) + ")";
      });

  py::class_<HawkesParams>(m, "HawkesParams")
      .def(py::init([](int num_types, std::vector<double> mu, std::vector<double> alpha, std::vector<double> beta) {
             HawkesParams p{num_types, std::move(mu), std::move(alpha), std::move(beta)};
             p.validate();
             return p;
           }),
           py::arg("num_types"), py::arg("mu"), py::arg("alpha"), py::arg("beta"))
      .def_static("univariate", &HawkesParams::univariate, py::arg("mu"), py::arg("alpha"), py::arg("beta"))
      .def_readonly("num_types", &HawkesParams::num_types)
      .def_readonly("mu", &HawkesParams::mu)
      .def_readonly("alpha", &HawkesParams::alpha)
      .def_readonly("beta", &HawkesParams::beta)
      .def("spectral_radius", &HawkesParams::spectral_radius);

  m.def("hawkes_loglik", &hawkes_loglik, py::arg("params"), py::arg("seq"));
  m.def("hawkes_compensator", &hawkes_compensator, py::arg("params"), py::arg("seq"));
  m.def("hawkes_intensity", &hawkes_intensity, py::arg("params"), py::arg("history"), py::arg("t"));
  m.def("generate_hawkes", &generate_hawkes, py::arg("params"), py::arg("t_end"), py::arg("num_sequences"),
        py::arg("seed"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "write_dataset",
      [](const std::filesystem::path& path, std::vector<EventSequence> seqs, int num_types, const std::string& split) {
        Dataset d;
        d.sequences = std::move(seqs);
        d.num_types = num_types;
        d.split = split_from_string(split);
        write_dataset(path, d);
      },
      py::arg("path"), py::arg("sequences"), py::arg("num_types"), py::arg("split") = "train");
  m.def(
      "load_dataset",
      [](const std::filesystem::path& path) { return load_dataset(path).sequences; }, py::arg("path"));

  m.def(
      "otd", [](const EventSequence& a, const EventSequence& b, double c) { return otd(a, b, OTDParams{c}); },
      py::arg("a"), py::arg("b"), py::arg("delete_cost") = 1.0);

  m.def(
      "resolve_config",
      [](const std::string& path, const std::string& experiment_id, const std::vector<std::string>& overrides) {
        return to_json(load_runner_config(path, experiment_id, overrides)).dump();
      },
      py::arg("path"), py::arg("experiment_id") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "train",
      [](const std::string& config_json, const std::vector<std::string>& overrides) {
        const RunnerConfig cfg = config_from_text(config_json, overrides);
        TrainResult res;
        {
          py::gil_scoped_release nogil;
          res = train(cfg);
        }
        nlohmann::json out{{"best_epoch", res.best_epoch},
                           {"best_dev_loglik", res.best_dev_loglik},
                           {"checkpoint", res.checkpoint.string()},
                           {"epochs", res.log.size()}};
        return out.dump();
      },
      py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "evaluate",
      [](const std::string& config_json, const std::string& checkpoint, const std::vector<std::string>& tasks) {
        const RunnerConfig cfg = config_from_text(config_json, {});
        py::gil_scoped_release nogil;
        const auto model = load_compatible_checkpoint(cfg, checkpoint);
        return evaluate(cfg, *model, tasks).dump();
      },
      py::arg("config_json"), py::arg("checkpoint"),
      py::arg("tasks") = std::vector<std::string>{"loglik", "next_event", "horizon"});

  m.def(
      "benchmark",
      [](const std::string& config_json, const std::vector<std::string>& models, const std::vector<std::string>& tasks) {
        const RunnerConfig cfg = config_from_text(config_json, {});
        nlohmann::json rows = nlohmann::json::array();
        py::gil_scoped_release nogil;
        for (const auto& r : benchmark(cfg, models, tasks)) rows.push_back(r.report);
        return rows.dump();
      },
      py::arg("config_json"), py::arg("models"),
      py::arg("tasks") = std::vector<std::string>{"loglik", "next_event", "horizon"});
}
