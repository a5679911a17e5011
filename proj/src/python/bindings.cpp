// Python bindings for the calorimeter optimization core.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "calopt/calosim.hpp"
#include "calopt/harness.hpp"
#include "calopt/mine.hpp"
#include "calopt/optloop.hpp"
#include "calopt/validation.hpp"

namespace py = pybind11;
using namespace calopt;

namespace {

py::dict row_to_dict(const IterationRecord& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["theta"] = r.theta;
  d["objective"] = r.objective;
  d["surrogate_pred"] = r.surrogate_pred;
  d["scint_sum"] = r.scint_sum;
  d["abs_sum"] = r.abs_sum;
  d["seed"] = r.seed;
  d["aborted"] = r.aborted;
  d["initial"] = r.initial;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Calorimeter layout optimization core";

  py::class_<DesignVector>(m, "DesignVector")
      .def(py::init([](std::vector<double> t) {
             DesignVector d{std::move(t)};
             d.validate();
             return d;
           }),
           py::arg("thickness_cm"))
      .def_readonly("thickness_cm", &DesignVector::thickness_cm)
      .def_property_readonly("scintillator_sum", &DesignVector::scintillator_sum)
      .def_property_readonly("absorber_sum", &DesignVector::absorber_sum)
      .def_property_readonly("total", &DesignVector::total);

  py::class_<ShowerModel>(m, "ShowerModel")
      .def(py::init<>())
      .def_readwrite("smearing", &ShowerModel::smearing);

  py::class_<EventBatch>(m, "EventBatch")
      .def_readonly("energies_gev", &EventBatch::energies_gev)
      .def_readonly("deposits", &EventBatch::deposits);

  m.def("sample_energies", &sample_energies, py::arg("min_gev"),
        py::arg("max_gev"), py::arg("count"), py::arg("seed"),
        "Uniform beam energies, deterministic in seed");
  m.def("regularized_lower_gamma", &regularized_lower_gamma, py::arg("a"),
        py::arg("x"));
  m.def(
      "simulate",
      [](const DesignVector& design, const std::vector<double>& energies,
         std::uint64_t seed, const ShowerModel& model) {
        return simulate(design, energies, model, seed);
      },
      py::arg("design"), py::arg("energies_gev"), py::arg("seed"),
      py::arg("model") = ShowerModel{},
      "Photon-shower energy deposits per scintillator layer");

  m.def(
      "estimate_mi",
      [](const std::vector<std::vector<double>>& x,
         const std::vector<std::vector<double>>& y, std::uint64_t seed,
         std::size_t epochs) {
        if (x.empty() || x.size() != y.size())
          throw std::invalid_argument("x and y need equal nonzero length");
        std::size_t m = x.size(), u = x[0].size(), v = y[0].size();
        std::vector<double> xf, yf;
        for (const auto& r : x) xf.insert(xf.end(), r.begin(), r.end());
        for (const auto& r : y) yf.insert(yf.end(), r.begin(), r.end());
        MineConfig cfg;
        if (epochs) cfg.epochs = epochs;
        return estimate_mi(xf, yf, m, u, v, seed, cfg).value_nats;
      },
      py::arg("x"), py::arg("y"), py::arg("seed"), py::arg("epochs") = 0,
      "Neural mutual-information estimate (nats)");

  m.def(
      "knn_mi",
      [](const std::vector<std::vector<double>>& x,
         const std::vector<std::vector<double>>& y, std::size_t k) {
        if (x.empty() || x.size() != y.size())
          throw std::invalid_argument("x and y need equal nonzero length");
        std::size_t m = x.size(), u = x[0].size(), v = y[0].size();
        std::vector<double> xf, yf;
        for (const auto& r : x) xf.insert(xf.end(), r.begin(), r.end());
        for (const auto& r : y) yf.insert(yf.end(), r.begin(), r.end());
        return knn_mi(xf, yf, m, u, v, k);
      },
      py::arg("x"), py::arg("y"), py::arg("k") = 3,
      "k-nearest-neighbour mutual-information estimate (nats)");

  m.def(
      "run_study",
      [](const std::map<std::string, std::string>& options) {
        StudyConfig cfg;
        for (const auto& [key, value] : options)
          apply_config_key(cfg, key, value);
        StudyOutput out = run_replicas(cfg);
        py::list runs;
        for (const auto& rec : out.runs) {
          py::list rows;
          for (const auto& row : rec.rows) rows.append(row_to_dict(row));
          py::dict d;
          d["rows"] = rows;
          d["failed"] = rec.failed;
          d["failure"] = rec.failure;
          runs.append(d);
        }
        return runs;
      },
      py::arg("options"),
      "Run a study; options are the configuration keys as strings");

  m.def(
      "validate",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_validation_suite(seed)) {
          py::dict d;
          d["name"] = r.name;
          d["passed"] = r.passed;
          d["value"] = r.value;
          d["detail"] = r.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 20260826, "Numerical validation suite results");
}
