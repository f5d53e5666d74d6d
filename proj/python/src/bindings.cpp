#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmdkit/decomposition.hpp"
#include "cmdkit/dmd.hpp"
#include "cmdkit/error.hpp"
#include "cmdkit/generators.hpp"
#include "cmdkit/report.hpp"

namespace py = pybind11;
using namespace cmdkit;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

LayerIndex layers_from(const std::optional<std::vector<std::tuple<std::string, std::size_t, std::size_t>>>& spec,
                       std::size_t n) {
  if (!spec) return single_layer(n);
  LayerIndex out;
  for (const auto& [name, start, count] : *spec) out.push_back({name, start, count});
  return out;
}

SnapshotMatrix to_matrix(const Array& a, const LayerIndex& layers) {
  if (a.ndim() != 2) throw Error(ErrorKind::Shape, "expected a 2-D array (weights x epochs)");
  const auto n = static_cast<std::size_t>(a.shape(0)), e = static_cast<std::size_t>(a.shape(1));
  return SnapshotMatrix(n, e, std::vector<double>(a.data(), a.data() + n * e), layers);
}

Array to_array(const SnapshotMatrix& m) {
  Array out({m.rows(), m.epochs()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::list layers_to_py(const LayerIndex& layers) {
  py::list out;
  for (const auto& l : layers) out.append(py::make_tuple(l.name, l.start_row, l.row_count));
  return out;
}

}  // namespace

PYBIND11_MODULE(_cmdkit, m) {
  m.doc() = "Correlation mode decomposition of training trajectories";

  static py::handle error_type = py::register_exception<Error>(m, "CmdkitError").ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "generate",
      [](const std::string& kind, const std::string& config) -> py::tuple {
        const json j = json::parse(config);
        if (kind == "toy-regression") {
          const auto w = generate_toy_regression(toy_regression_config_from_json(j));
          return py::make_tuple(to_array(w), layers_to_py(w.layers()));
        }
        if (kind == "mlp") {
          const auto run = generate_mlp_training(mlp_task_config_from_json(j));
          return py::make_tuple(to_array(run.weights), layers_to_py(run.weights.layers()));
        }
        if (kind == "synthetic-modes") {
          const auto syn = generate_synthetic_modes(synthetic_modes_config_from_json(j));
          return py::make_tuple(to_array(syn.weights), layers_to_py(syn.weights.layers()), syn.labels);
        }
        throw Error(ErrorKind::Config, "unknown generator kind '" + kind + "'");
      },
      py::arg("kind"), py::arg("config_json"));

  m.def(
      "decompose",
      [](const Array& w, std::optional<std::size_t> modes, std::optional<double> threshold, std::size_t sample,
         std::uint64_t seed, unsigned threads,
         std::optional<std::vector<std::tuple<std::string, std::size_t, std::size_t>>> layers) {
        const auto matrix = to_matrix(w, layers_from(layers, static_cast<std::size_t>(w.shape(0))));
        ClusterConfig cfg;
        cfg.sample_size = sample;
        cfg.seed = seed;
        if (modes && threshold) throw Error(ErrorKind::Config, "give either modes or threshold, not both");
        if (modes) cfg.cut = FixedModes{*modes};
        if (threshold) cfg.cut = DistanceThreshold{*threshold};
        DecomposeOptions options;
        options.threads = threads;
        py::gil_scoped_release release;
        return dump_json(to_json(decompose(matrix, cfg, options)));
      },
      py::arg("weights"), py::arg("modes") = py::none(), py::arg("threshold") = py::none(),
      py::arg("sample") = kDefaultSampleSize, py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("layers") = py::none());

  m.def(
      "reconstruct",
      [](const std::string& model_json) { return to_array(reconstruct(model_from_json(json::parse(model_json)))); },
      py::arg("model_json"));

  m.def(
      "dmd",
      [](const Array& w, std::size_t rank, std::optional<std::size_t> epochs) {
        const auto matrix = to_matrix(w, single_layer(static_cast<std::size_t>(w.shape(0))));
        const auto model = dmd_fit(matrix, rank);
        const auto rec = dmd_reconstruct(model, epochs.value_or(matrix.epochs()));
        return py::make_tuple(model.eigenvalues, to_array(rec.matrix), model.warnings);
      },
      py::arg("weights"), py::arg("rank"), py::arg("epochs") = py::none());

  m.def(
      "weights_mse", [](const Array& a, const Array& b) {
        const auto n = static_cast<std::size_t>(a.ndim() == 2 ? a.shape(0) : 0);
        return weights_mse(to_matrix(a, single_layer(n)), to_matrix(b, single_layer(n)));
      },
      py::arg("w"), py::arg("w_hat"));

  m.def(
      "corr", [](std::vector<double> u, std::vector<double> v) { return corr(u, v); }, py::arg("u"), py::arg("v"));

  m.def(
      "fit_affine",
      [](const Array& rows, std::vector<double> reference) {
        const auto c = fit_affine(std::span<const double>(rows.data(), static_cast<std::size_t>(rows.size())), reference);
        return py::make_tuple(c.a, c.b);
      },
      py::arg("rows"), py::arg("reference"));

  m.def(
      "save_trajectory",
      [](const Array& w, const std::string& path,
         std::optional<std::vector<std::tuple<std::string, std::size_t, std::size_t>>> layers) {
        save_trajectory(to_matrix(w, layers_from(layers, static_cast<std::size_t>(w.shape(0)))), path);
      },
      py::arg("weights"), py::arg("path"), py::arg("layers") = py::none());

  m.def(
      "load_trajectory",
      [](const std::string& path) {
        const auto t = load_trajectory(path);
        return py::make_tuple(to_array(t), layers_to_py(t.layers()));
      },
      py::arg("path"));
}
