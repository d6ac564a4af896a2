// JSON-in, JSON-out bindings; the Python package wraps them with dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fg/error.hpp"
#include "fg/meanfield.hpp"
#include "fg/mobility.hpp"
#include "fg/params.hpp"
#include "fg/pipeline.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

struct Resolved {
  fg::SystemParams params;
  fg::ContactModel cm;
};

// A given contact model is overlaid on the config; otherwise the
// exponential fallback is used.
Resolved resolve(const std::string& config, const std::optional<std::string>& contact_model) {
  Resolved r;
  r.params = fg::validate(fg::params_from_json(json::parse(config)));
  if (contact_model) {
    r.cm = fg::contact_model_from_json(json::parse(*contact_model));
    r.params = fg::apply_contact_model(r.params, r.cm);
  } else {
    r.cm = fg::exponential_contact_model(r.params);
  }
  return r;
}

std::string resolve_config(const std::string& config) {
  return fg::params_to_json(fg::validate(fg::params_from_json(json::parse(config)))).dump();
}

std::string exponential_contact_model(const std::string& config) {
  const auto p = fg::validate(fg::params_from_json(json::parse(config)));
  return fg::contact_model_to_json(fg::exponential_contact_model(p)).dump();
}

std::string calibrate(const std::string& config, double duration, std::uint64_t seed) {
  const auto p = fg::validate(fg::params_from_json(json::parse(config)));
  fg::ContactModel cm;
  {
    py::gil_scoped_release release;
    cm = fg::calibrate_contact_model(p, duration, seed);
  }
  return fg::contact_model_to_json(cm).dump();
}

std::string analytic(const std::string& config, const std::optional<std::string>& contact_model,
                     std::size_t staleness_samples, std::uint64_t seed) {
  const auto r = resolve(config, contact_model);
  py::gil_scoped_release release;
  return fg::analytic_to_json(fg::run_analytic(r.params, r.cm, staleness_samples, seed)).dump();
}

std::string simulate(const std::string& config, std::size_t runs, std::uint64_t seed,
                     std::size_t slots, unsigned threads) {
  const auto p = fg::validate(fg::params_from_json(json::parse(config)));
  py::gil_scoped_release release;
  const auto batch = fg::run_batch(p, runs, seed, slots, false, threads);
  json doc;
  doc["runs"] = json::array();
  for (const auto& report : batch.reports) doc["runs"].push_back(fg::report_to_json(report));
  doc["aggregate"] = batch.aggregate ? fg::report_to_json(*batch.aggregate) : json(nullptr);
  return doc.dump();
}

std::string capacity(const std::string& config, const std::optional<std::string>& contact_model,
                     int m_max) {
  const auto r = resolve(config, contact_model);
  py::gil_scoped_release release;
  return fg::capacity_to_json(fg::learning_capacity(r.params, r.cm, m_max)).dump();
}

std::string stability_map(const std::string& config,
                          const std::optional<std::string>& contact_model,
                          const std::vector<int>& m_values,
                          const std::vector<double>& lambda_values) {
  const auto r = resolve(config, contact_model);
  std::vector<fg::StabilityCell> cells;
  {
    py::gil_scoped_release release;
    cells = fg::stability_map(r.params, r.cm, m_values, lambda_values);
  }
  json doc = json::array();
  for (const auto& c : cells) {
    json row = {{"model_count", c.model_count}, {"obs_rate", c.obs_rate},
                {"stable", c.stable},           {"feasible", c.feasible},
                {"error", c.error}};
    row["lhs"] = std::isfinite(c.lhs) ? json(c.lhs) : json(nullptr);
    doc.push_back(row);
  }
  return doc.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Floating Gossip core";

  static PyObject* error = PyErr_NewException("floating_gossip._core.FgError", PyExc_RuntimeError,
                                              nullptr);
  m.add_object("FgError", py::handle(error));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const fg::Error& e) {
      const std::string msg = std::string(fg::errc_name(e.code())) + ": " + e.what();
      PyErr_SetString(error, msg.c_str());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("resolve_config", &resolve_config, py::arg("config"));
  m.def("exponential_contact_model", &exponential_contact_model, py::arg("config"));
  m.def("calibrate", &calibrate, py::arg("config"), py::arg("duration"), py::arg("seed"));
  m.def("analytic", &analytic, py::arg("config"), py::arg("contact_model") = std::nullopt,
        py::arg("staleness_samples") = 100000, py::arg("seed") = 1);
  m.def("simulate", &simulate, py::arg("config"), py::arg("runs"), py::arg("seed"),
        py::arg("slots"), py::arg("threads") = 0);
  m.def("capacity", &capacity, py::arg("config"), py::arg("contact_model") = std::nullopt,
        py::arg("m_max") = 40);
  m.def("stability_map", &stability_map, py::arg("config"), py::arg("contact_model"),
        py::arg("m_values"), py::arg("lambda_values"));
}
