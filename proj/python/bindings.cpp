#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "fedccea/aam.hpp"
#include "fedccea/baselines.hpp"
#include "fedccea/config.hpp"
#include "fedccea/datasets.hpp"
#include "fedccea/errors.hpp"
#include "fedccea/experiments.hpp"
#include "fedccea/pipeline.hpp"
#include "fedccea/simulator.hpp"

namespace py = pybind11;
using namespace fedccea;

namespace {

py::dict valuation_dict(const ValuationResult& r) {
  py::dict d;
  d["method"] = to_string(r.method);
  d["values"] = r.values;
  d["permutations"] = r.permutations;
  d["truncations"] = r.truncations;
  d["utility_evaluations"] = r.utility_evaluations;
  return d;
}

UtilityFn python_utility(int n, py::function fn) {
  return UtilityFn(n, [fn = std::move(fn)](const std::vector<int>& members) {
    py::gil_scoped_acquire gil;
    return fn(members).cast<double>();
  });
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& out_dir,
                      const std::optional<std::uint64_t>& seed) {
  auto config = parse_config(path);
  if (out_dir) config.output_dir = *out_dir;
  if (seed) config.seed = *seed;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the fedccea toolkit";

  // Translators registered later are tried first, so the base goes first.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", error.ptr());

  m.def(
      "generate_synthetic",
      [](int classes, int per_class, int dim, double spread, std::uint64_t seed) {
        const auto data = generate_synthetic(classes, per_class, dim, spread, seed);
        py::array_t<double> x({static_cast<py::ssize_t>(data.size()), static_cast<py::ssize_t>(data.dim())});
        auto xv = x.mutable_unchecked<2>();
        for (py::ssize_t r = 0; r < xv.shape(0); ++r) {
          for (py::ssize_t c = 0; c < xv.shape(1); ++c) xv(r, c) = data.features()(r, c);
        }
        py::array_t<int> y(static_cast<py::ssize_t>(data.size()));
        std::copy(data.labels().begin(), data.labels().end(), y.mutable_data());
        return py::make_tuple(x, y);
      },
      py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"), py::arg("seed"),
      "Balanced Gaussian blobs clipped to [0, 1]; returns (features, labels).");

  m.def(
      "scale_sizes",
      [](const std::vector<std::size_t>& sizes, const std::vector<double>& p) {
        const auto s = scale_sizes(sizes, p);
        return py::make_tuple(s.d, s.x);
      },
      py::arg("sizes"), py::arg("p"), "Returns (d, x) with d = floor(size * p) and x = d / mean(size).");

  m.def("contribution_values", [](const std::vector<double>& q, const std::vector<double>& x) {
    return contribution_values(q, x);
  }, py::arg("quality"), py::arg("sizes"));

  m.def(
      "compute_cci",
      [](const std::vector<double>& v) {
        const auto r = compute_cci(v);
        return py::make_tuple(r.cci, r.degenerate);
      },
      py::arg("values"), "Returns (cci, degenerate).");

  m.def("rank_descending", [](const std::vector<double>& v) { return rank_descending(v); }, py::arg("values"));
  m.def("gini", [](const std::vector<double>& v) { return gini(v); }, py::arg("values"));

  m.def(
      "loo_values",
      [](int n, py::function utility) {
        auto u = python_utility(n, std::move(utility));
        return valuation_dict(loo_values(u, n));
      },
      py::arg("n"), py::arg("utility"), "Leave-one-out values; utility maps a sorted member list to a float.");

  m.def(
      "exact_shapley",
      [](int n, py::function utility) {
        auto u = python_utility(n, std::move(utility));
        return valuation_dict(exact_shapley(u, n));
      },
      py::arg("n"), py::arg("utility"));

  m.def(
      "tmc_shapley",
      [](int n, py::function utility, std::size_t max_permutations, double truncation_tolerance,
         double convergence_tolerance, std::uint64_t seed) {
        auto u = python_utility(n, std::move(utility));
        return valuation_dict(
            tmc_shapley(u, n, {max_permutations, truncation_tolerance, convergence_tolerance, seed}));
      },
      py::arg("n"), py::arg("utility"), py::arg("max_permutations") = 100,
      py::arg("truncation_tolerance") = 0.01, py::arg("convergence_tolerance") = 1e-3, py::arg("seed") = 0);

  m.def(
      "resolve_config",
      [](const std::filesystem::path& path) { return config_to_json(parse_config(path)); },
      py::arg("path"), "Parses a config file and returns the resolved config as JSON text.");

  m.def(
      "config_hash",
      [](const std::filesystem::path& path) { return config_hash(parse_config(path)); }, py::arg("path"));

  m.def(
      "run_stage",
      [](const std::string& stage, const std::filesystem::path& config_path, std::optional<std::string> out_dir,
         std::optional<std::uint64_t> seed) {
        const auto config = load_config(config_path, out_dir, seed);
        std::ostringstream log;
        std::vector<std::filesystem::path> written;
        {
          py::gil_scoped_release release;
          written = run_stage(stage_from_string(stage), config, log);
        }
        return py::make_tuple(written, log.str());
      },
      py::arg("stage"), py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
      "Runs one pipeline stage; returns (written paths, log text).");

  m.def(
      "load_store",
      [](const std::filesystem::path& path) {
        const auto loaded = load_store(path);
        py::list records;
        for (const auto& r : loaded.store.records) {
          py::dict d;
          d["sim"] = r.sim;
          d["round"] = r.round;
          d["x"] = r.x;
          d["acc"] = r.acc;
          records.append(d);
        }
        return records;
      },
      py::arg("path"));

  m.def(
      "load_aam",
      [](const std::filesystem::path& path) {
        const auto loaded = load_aam(path);
        py::dict d;
        const auto q = extract_quality(loaded.params);
        d["quality"] = std::vector<double>(q.data(), q.data() + q.size());
        d["heldout_mae"] = loaded.heldout_mae;
        d["n_clients"] = loaded.params.n_clients();
        d["rounds"] = loaded.params.rounds();
        return d;
      },
      py::arg("path"));
}
