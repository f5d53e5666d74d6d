#include "cmdkit/decomposition.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cmdkit/error.hpp"
#include "cmdkit/parallel.hpp"

namespace cmdkit {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Reference prepared for repeated affine fits.
struct PreparedReference {
  std::vector<double> shifted;  // r - mean(r)
  double mean = 0.0;
  double spread = 0.0;  // ||r - mean(r)||^2

  explicit PreparedReference(std::span<const double> r) : shifted(r.size()) {
    const double n = static_cast<double>(r.size());
    double sum = 0.0, sq = 0.0;
    for (double v : r) {
      sum += v;
      sq += v * v;
    }
    mean = sum / n;
    for (std::size_t k = 0; k < r.size(); ++k) {
      shifted[k] = r[k] - mean;
      spread += shifted[k] * shifted[k];
    }
    // Gram matrix of [r; 1] is [[sum r^2, sum r], [sum r, n]] with
    // determinant n * spread.
    const double det = n * spread;
    const double trace = sq + n;
    if (!(det > 1e-12 * trace))
      throw Error(ErrorKind::Degenerate, "reference trajectory is numerically constant");
  }

  std::pair<double, double> fit(std::span<const double> w) const {
    double cross = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      cross += w[k] * shifted[k];
      sum += w[k];
    }
    const double a = cross / spread;
    const double b = sum / static_cast<double>(w.size()) - a * mean;
    return {a, b};
  }
};

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    h ^= (word >> (8 * b)) & 0xFF;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string reference_digest(const std::vector<ModeInfo>& modes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& mode : modes) {
    h = fnv1a(h, static_cast<std::uint64_t>(mode.id));
    h = fnv1a(h, mode.reference_row);
    for (double v : mode.reference) h = fnv1a(h, std::bit_cast<std::uint64_t>(v));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorKind::Schema, "model: " + what); }

}  // namespace

AffineCoefficients fit_affine(std::span<const double> rows, std::span<const double> reference) {
  if (reference.size() < 2) throw Error(ErrorKind::Shape, "fit_affine: reference needs at least two epochs");
  if (rows.size() % reference.size() != 0)
    throw Error(ErrorKind::Shape, "fit_affine: row length does not match the reference");
  const PreparedReference ref(reference);
  const std::size_t epochs = reference.size();
  const std::size_t count = rows.size() / epochs;
  AffineCoefficients out{std::vector<double>(count), std::vector<double>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const auto [a, b] = ref.fit(rows.subspan(i * epochs, epochs));
    out.a[i] = a;
    out.b[i] = b;
  }
  return out;
}

void ModeModel::validate() const {
  if (epochs < 2) schema_error("epochs must be at least 2");
  if (weights.empty()) schema_error("no weights");
  try {
    validate_layers(layers, weights.size());
  } catch (const Error& e) {
    schema_error(e.what());
  }
  if (epoch_selection.retained_epochs.size() != epochs)
    schema_error("epoch_selection does not match the stored epoch count");
  for (std::size_t k = 1; k < epoch_selection.retained_epochs.size(); ++k)
    if (epoch_selection.retained_epochs[k] <= epoch_selection.retained_epochs[k - 1])
      schema_error("retained epochs must be strictly increasing");
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto& mode = modes[m];
    if (mode.id != static_cast<int>(m)) schema_error("mode ids must be 0..M-1 in order");
    if (mode.reference.size() != epochs) schema_error("reference " + std::to_string(m) + " has the wrong length");
    for (double v : mode.reference)
      if (!std::isfinite(v)) schema_error("reference " + std::to_string(m) + " is not finite");
    if (is_zero_variance(mode.reference)) schema_error("reference " + std::to_string(m) + " is constant");
    if (mode.reference_row >= weights.size()) schema_error("reference index out of range");
    if (weights[mode.reference_row].mode != mode.id)
      schema_error("reference row " + std::to_string(mode.reference_row) + " is not in mode " + std::to_string(m));
  }
  const int mode_count = static_cast<int>(modes.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& w = weights[i];
    if (w.mode < kStaticMode || w.mode >= mode_count) schema_error("weight " + std::to_string(i) + " has an unknown mode");
    if (!std::isfinite(w.a) || !std::isfinite(w.b) || !std::isfinite(w.corr))
      schema_error("weight " + std::to_string(i) + " has non-finite coefficients");
    if (std::abs(w.corr) > 1.0) schema_error("weight " + std::to_string(i) + " has |corr| > 1");
    if (w.mode == kStaticMode && w.a != 0.0) schema_error("static weight " + std::to_string(i) + " has a != 0");
  }
  for (auto row : sample)
    if (row >= weights.size()) schema_error("sample index out of range");
}

Decomposition decompose_detailed(const SnapshotMatrix& m, const ClusterConfig& cfg, const DecomposeOptions& options) {
  cfg.validate();
  const unsigned threads = resolve_threads(options.threads);
  Decomposition out;
  auto& model = out.model;
  model.epochs = m.epochs();
  model.layers = m.layers();
  model.epoch_selection = options.epoch_selection.retained_epochs.empty() ? EpochSelection::full(m.epochs())
                                                                          : options.epoch_selection;
  if (model.epoch_selection.retained_epochs.size() != m.epochs())
    throw Error(ErrorKind::Shape, "epoch selection does not match the trajectory");
  model.config = cfg;

  auto t = Clock::now();
  const std::size_t k = std::min(cfg.sample_size, m.rows());
  model.config.sample_size = k;
  out.sample = sample_representatives(m, k, cfg.seed);
  out.timings.sample_ms = elapsed_ms(t);

  t = Clock::now();
  const CorrelationMatrix c = corr_matrix(m, out.sample);
  out.timings.correlate_ms = elapsed_ms(t);

  t = Clock::now();
  out.dendrogram = linkage(c);
  const std::vector<int> labels = cut(out.dendrogram, cfg.cut);
  model.threshold = resolved_threshold(out.dendrogram, cfg.cut);
  const std::vector<Reference> refs = choose_references(m, labels, out.sample, c);
  out.timings.cluster_ms = elapsed_ms(t);

  t = Clock::now();
  std::vector<std::vector<double>> trajectories;
  trajectories.reserve(refs.size());
  for (const auto& r : refs) {
    trajectories.push_back(r.trajectory);
    model.modes.push_back({r.mode, r.row, r.trajectory});
  }
  const std::vector<ModeAssignment> assignment = assign_to_modes(m, trajectories, threads);
  model.weights.resize(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) model.weights[i] = {assignment[i].mode, 0.0, 0.0, assignment[i].corr};
  for (std::size_t p = 0; p < out.sample.indices.size(); ++p) {
    const int mode = labels[p];
    auto& w = model.weights[out.sample.indices[p]];
    w.mode = mode;
    w.corr = c(p, refs[static_cast<std::size_t>(mode)].sample_position);
  }
  out.timings.assign_ms = elapsed_ms(t);

  t = Clock::now();
  std::vector<PreparedReference> prepared;
  prepared.reserve(refs.size());
  for (const auto& r : refs) prepared.emplace_back(r.trajectory);
  parallel_for(m.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto& w = model.weights[i];
      if (w.mode == kStaticMode) {
        w.a = 0.0;
        w.b = m.at(i, 0);
        w.corr = 0.0;
        continue;
      }
      std::tie(w.a, w.b) = prepared[static_cast<std::size_t>(w.mode)].fit(m.row(i));
    }
  });
  for (const auto& mode : model.modes) {
    auto& w = model.weights[mode.reference_row];
    w.a = 1.0;
    w.b = 0.0;
    w.corr = 1.0;
  }
  out.timings.fit_ms = elapsed_ms(t);

  model.sample = out.sample.indices;
  model.validate();
  return out;
}

ModeModel decompose(const SnapshotMatrix& m, const ClusterConfig& cfg, const DecomposeOptions& options) {
  return decompose_detailed(m, cfg, options).model;
}

namespace {

SnapshotMatrix reconstruct_from(const ModeModel& model, std::size_t epochs,
                                const std::vector<std::span<const double>>& refs) {
  const std::size_t n = model.rows();
  std::vector<double> values(n * epochs);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = model.weights[i];
    double* out = values.data() + i * epochs;
    if (w.mode == kStaticMode) {
      std::fill(out, out + epochs, w.b);
      continue;
    }
    const auto ref = refs[static_cast<std::size_t>(w.mode)];
    for (std::size_t k = 0; k < epochs; ++k) out[k] = w.a * ref[k] + w.b;
  }
  return SnapshotMatrix(n, epochs, std::move(values), model.layers);
}

}  // namespace

SnapshotMatrix reconstruct(const ModeModel& model) {
  model.validate();
  std::vector<std::span<const double>> refs;
  for (const auto& mode : model.modes) refs.emplace_back(mode.reference);
  return reconstruct_from(model, model.epochs, refs);
}

SnapshotMatrix reconstruct_with(const ModeModel& model, const SnapshotMatrix& full) {
  model.validate();
  if (full.rows() != model.rows()) throw Error(ErrorKind::Shape, "reconstruct_with: row count differs from the model");
  std::vector<std::span<const double>> refs;
  for (const auto& mode : model.modes) refs.push_back(full.row(mode.reference_row));
  return reconstruct_from(model, full.epochs(), refs);
}

json to_json(const ModeModel& model) {
  json layers = json::array();
  for (const auto& l : model.layers)
    layers.push_back({{"name", l.name}, {"start_row", l.start_row}, {"row_count", l.row_count}});
  json modes = json::array();
  for (const auto& mode : model.modes)
    modes.push_back({{"id", mode.id}, {"reference_index", mode.reference_row}, {"reference_values", mode.reference}});
  json weights = json::array();
  for (const auto& w : model.weights) weights.push_back({{"mode", w.mode}, {"a", w.a}, {"b", w.b}, {"corr", w.corr}});
  return {{"version", 1},
          {"M", model.modes.size()},
          {"N", model.weights.size()},
          {"epochs", model.epochs},
          {"epoch_selection",
           {{"kind", to_string(model.epoch_selection.kind)},
            {"parameter", model.epoch_selection.parameter},
            {"retained_epochs", model.epoch_selection.retained_epochs}}},
          {"config", to_json(model.config)},
          {"threshold", model.threshold},
          {"layers", layers},
          {"sample", model.sample},
          {"reference_digest", reference_digest(model.modes)},
          {"modes", modes},
          {"weights", weights}};
}

ModeModel model_from_json(const json& j) {
  ModeModel model;
  try {
    if (j.at("version").get<int>() != 1) schema_error("unsupported version");
    model.epochs = j.at("epochs").get<std::size_t>();
    const auto& sel = j.at("epoch_selection");
    model.epoch_selection.kind = epoch_kind_from_string(sel.at("kind").get<std::string>());
    model.epoch_selection.parameter = sel.at("parameter").get<std::size_t>();
    model.epoch_selection.retained_epochs = sel.at("retained_epochs").get<std::vector<std::size_t>>();
    model.config = cluster_config_from_json(j.at("config"));
    model.threshold = j.at("threshold").get<double>();
    for (const auto& l : j.at("layers"))
      model.layers.push_back(
          {l.at("name").get<std::string>(), l.at("start_row").get<std::size_t>(), l.at("row_count").get<std::size_t>()});
    model.sample = j.at("sample").get<std::vector<std::size_t>>();
    for (const auto& mode : j.at("modes"))
      model.modes.push_back({mode.at("id").get<int>(), mode.at("reference_index").get<std::size_t>(),
                             mode.at("reference_values").get<std::vector<double>>()});
    for (const auto& w : j.at("weights"))
      model.weights.push_back(
          {w.at("mode").get<int>(), w.at("a").get<double>(), w.at("b").get<double>(), w.at("corr").get<double>()});
    if (j.at("M").get<std::size_t>() != model.modes.size()) schema_error("M does not match the mode list");
    if (j.at("N").get<std::size_t>() != model.weights.size()) schema_error("N does not match the weight list");
    if (j.at("reference_digest").get<std::string>() != reference_digest(model.modes))
      schema_error("reference digest mismatch (references were modified)");
  } catch (const json::exception& e) {
    schema_error(e.what());
  }
  model.validate();
  return model;
}

std::string dump_json(const json& j) { return j.dump(); }

void save_model(const ModeModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << dump_json(to_json(model)) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

ModeModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "model: invalid JSON: " + std::string(e.what()));
  }
  return model_from_json(j);
}

}  // namespace cmdkit
