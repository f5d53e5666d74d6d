#include "cmdkit/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "cmdkit/error.hpp"
#include "cmdkit/random.hpp"

namespace cmdkit {

namespace {

using nlohmann::json;

void check_finite_bound(std::span<const double> w, std::size_t epoch) {
  for (double v : w) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit)
      throw Error(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch));
  }
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  DenseMatrix out{rows, cols, std::vector<double>(rows * cols)};
  for (auto& v : out.data) v = scale * rng.normal();
  return out;
}

// out = a * b
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out{a.rows, b.cols, std::vector<double>(a.rows * b.cols, 0.0)};
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aip * b(p, j);
    }
  return out;
}

// ---- JSON helpers ---------------------------------------------------------

void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw Error(ErrorKind::Config, std::string(what) + " config must be a JSON object");
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!names.contains(key))
      throw Error(ErrorKind::Config, std::string(what) + " config: unknown field '" + key + "'");
}

const json& field(const json& j, const char* name, const char* what) {
  auto it = j.find(name);
  if (it == j.end())
    throw Error(ErrorKind::Config, std::string(what) + " config: missing field '" + name + "'");
  return *it;
}

template <class T>
T get_as(const json& v, const char* name) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Config, std::string("field '") + name + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const char* name) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw Error(ErrorKind::Config, std::string("field '") + name + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const json& v) {
  if (!v.is_number_integer()) throw Error(ErrorKind::Config, "field 'seed' must be an integer");
  return v.is_number_unsigned() ? v.get<std::uint64_t>()
                                : static_cast<std::uint64_t>(v.get<std::int64_t>());
}

DenseMatrix matrix_from_json(const json& v, const char* name) {
  if (!v.is_array() || v.empty() || !v[0].is_array())
    throw Error(ErrorKind::Config, std::string("field '") + name + "' must be a nested array");
  DenseMatrix out{v.size(), v[0].size(), {}};
  for (const auto& row : v) {
    if (!row.is_array() || row.size() != out.cols)
      throw Error(ErrorKind::Config, std::string("field '") + name + "' rows must have equal length");
    for (const auto& x : row) out.data.push_back(get_as<double>(x, name));
  }
  return out;
}

json matrix_to_json(const DenseMatrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

// ---- MLP ------------------------------------------------------------------

struct LayerShape {
  std::size_t in, out, weight_offset, bias_offset;
};

std::vector<LayerShape> layer_shapes(const MlpTaskConfig& cfg) {
  std::vector<LayerShape> shapes;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < cfg.layer_widths.size(); ++l) {
    const std::size_t in = cfg.layer_widths[l], out = cfg.layer_widths[l + 1];
    shapes.push_back({in, out, offset, offset + in * out});
    offset += in * out + out;
  }
  return shapes;
}

// Mean cross-entropy and accuracy over the cloud; accumulates the gradient of
// the mean loss into grad when non-null.
TaskMetrics forward_backward(const std::vector<LayerShape>& shapes, std::span<const double> p,
                             const PointCloud& cloud, std::vector<double>* grad) {
  const std::size_t count = cloud.labels.size();
  const std::size_t depth = shapes.size();
  std::vector<std::vector<double>> acts(depth + 1);
  std::vector<std::vector<double>> deltas(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    acts[l + 1].resize(shapes[l].out);
    deltas[l].resize(shapes[l].out);
  }
  acts[0].resize(2);

  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < count; ++s) {
    acts[0][0] = cloud.features[2 * s];
    acts[0][1] = cloud.features[2 * s + 1];
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& sh = shapes[l];
      for (std::size_t o = 0; o < sh.out; ++o) {
        double z = p[sh.bias_offset + o];
        const double* w = p.data() + sh.weight_offset + o * sh.in;
        for (std::size_t i = 0; i < sh.in; ++i) z += w[i] * acts[l][i];
        acts[l + 1][o] = (l + 1 < depth) ? std::tanh(z) : z;
      }
    }
    auto& logits = acts[depth];
    const double peak = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (double z : logits) norm += std::exp(z - peak);
    const int label = cloud.labels[s];
    loss += -(logits[static_cast<std::size_t>(label)] - peak - std::log(norm));
    const auto predicted = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (predicted == label) ++correct;

    if (grad == nullptr) continue;
    auto& top = deltas[depth - 1];
    for (std::size_t o = 0; o < top.size(); ++o)
      top[o] = (std::exp(logits[o] - peak) / norm - (static_cast<int>(o) == label ? 1.0 : 0.0)) /
               static_cast<double>(count);
    for (std::size_t l = depth; l-- > 0;) {
      const auto& sh = shapes[l];
      for (std::size_t o = 0; o < sh.out; ++o) {
        const double d = deltas[l][o];
        (*grad)[sh.bias_offset + o] += d;
        double* g = grad->data() + sh.weight_offset + o * sh.in;
        for (std::size_t i = 0; i < sh.in; ++i) g[i] += d * acts[l][i];
      }
      if (l == 0) break;
      auto& below = deltas[l - 1];
      for (std::size_t i = 0; i < sh.in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < sh.out; ++o) acc += p[sh.weight_offset + o * sh.in + i] * deltas[l][o];
        const double h = acts[l][i];
        below[i] = acc * (1.0 - h * h);
      }
    }
  }
  return {loss / static_cast<double>(count), static_cast<double>(correct) / static_cast<double>(count), 0.0, 0.0};
}

TaskMetrics evaluate_both(const std::vector<LayerShape>& shapes, std::span<const double> p,
                          const PointCloud& train, const PointCloud& test, std::vector<double>* grad) {
  TaskMetrics m = forward_backward(shapes, p, train, grad);
  const TaskMetrics held_out = forward_backward(shapes, p, test, nullptr);
  m.test_loss = held_out.train_loss;
  m.test_accuracy = held_out.train_accuracy;
  return m;
}

// ---- profiles -------------------------------------------------------------

std::vector<double> exponential_profile(std::size_t mode, std::size_t epochs, Rng& rng) {
  const double span = static_cast<double>(std::max<std::size_t>(epochs, 1));
  const double tau = span * 0.08 * std::pow(1.8, static_cast<double>(mode % 6)) * rng.uniform(0.9, 1.1);
  std::vector<double> p(epochs + 1);
  for (std::size_t k = 0; k <= epochs; ++k) p[k] = std::exp(-static_cast<double>(k) / tau);
  return p;
}

std::vector<double> piecewise_linear_profile(std::size_t epochs, Rng& rng) {
  constexpr std::size_t kSegments = 4;
  std::vector<double> breaks{0.0};
  for (std::size_t s = 1; s < kSegments; ++s) breaks.push_back(rng.uniform(0.05, 0.95) * static_cast<double>(epochs));
  breaks.push_back(static_cast<double>(epochs));
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> slopes(kSegments);
  for (auto& s : slopes) s = rng.uniform(-2.0, 2.0) / static_cast<double>(std::max<std::size_t>(epochs, 1));
  std::vector<double> p(epochs + 1);
  for (std::size_t k = 0; k <= epochs; ++k) {
    const double t = static_cast<double>(k);
    double value = 0.0;
    for (std::size_t s = 0; s < kSegments; ++s) {
      const double lo = breaks[s], hi = breaks[s + 1];
      if (t <= lo) break;
      value += slopes[s] * (std::min(t, hi) - lo);
    }
    p[k] = value;
  }
  return p;
}

std::vector<double> oscillatory_profile(std::size_t mode, std::size_t epochs, Rng& rng) {
  const double cycles = 0.75 + 0.6 * static_cast<double>(mode) + rng.uniform(0.0, 0.3);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double span = static_cast<double>(std::max<std::size_t>(epochs, 1));
  std::vector<double> p(epochs + 1);
  for (std::size_t k = 0; k <= epochs; ++k)
    p[k] = std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(k) / span + phase);
  return p;
}

}  // namespace

// ---- toy regression -------------------------------------------------------

void ToyRegressionConfig::validate() const {
  if (d == 0 || m == 0 || n == 0) throw Error(ErrorKind::Config, "d, m, n must be positive");
  if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be positive");
  if (eta_schedule.size() != 1 && eta_schedule.size() != epochs)
    throw Error(ErrorKind::Config, "eta_schedule must have 1 or T entries");
  for (double eta : eta_schedule)
    if (!std::isfinite(eta) || eta < 0.0) throw Error(ErrorKind::Config, "eta must be finite and nonnegative");
  if (!(init_scale > 0.0)) throw Error(ErrorKind::Config, "init_scale must be positive");
  if (!(label_noise >= 0.0)) throw Error(ErrorKind::Config, "label_noise must be nonnegative");
  if (x && (x->rows != m || x->cols != n)) throw Error(ErrorKind::Config, "x must be m x n");
  if (y && (y->rows != d || y->cols != n)) throw Error(ErrorKind::Config, "y must be d x n");
  if (w0 && (w0->rows != d || w0->cols != m)) throw Error(ErrorKind::Config, "w0 must be d x m");
  if (augmented && (x || y)) throw Error(ErrorKind::Config, "augmented runs draw their own x and y");
}

SnapshotMatrix generate_toy_regression(const ToyRegressionConfig& cfg) {
  cfg.validate();
  Rng target_rng(derive_seed(cfg.seed, 0));
  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng data_rng(derive_seed(cfg.seed, 2));

  const DenseMatrix target = gaussian_matrix(cfg.d, cfg.m, 1.0, target_rng);
  DenseMatrix w = cfg.w0 ? *cfg.w0 : gaussian_matrix(cfg.d, cfg.m, cfg.init_scale, init_rng);

  auto draw_batch = [&](DenseMatrix& x, DenseMatrix& y) {
    x = gaussian_matrix(cfg.m, cfg.n, 1.0, data_rng);
    y = multiply(target, x);
    for (auto& v : y.data) v += cfg.label_noise * data_rng.normal();
  };

  DenseMatrix x, y;
  if (!cfg.augmented) {
    if (cfg.x) {
      x = *cfg.x;
    } else {
      x = gaussian_matrix(cfg.m, cfg.n, 1.0, data_rng);
    }
    if (cfg.y) {
      y = *cfg.y;
    } else {
      y = multiply(target, x);
      for (auto& v : y.data) v += cfg.label_noise * data_rng.normal();
    }
  }

  const std::size_t rows = cfg.d * cfg.m;
  const std::size_t epochs = cfg.epochs + 1;
  std::vector<double> values(rows * epochs);
  auto store = [&](std::size_t k) {
    for (std::size_t i = 0; i < rows; ++i) values[i * epochs + k] = w.data[i];
  };
  store(0);
  for (std::size_t k = 0; k < cfg.epochs; ++k) {
    if (cfg.augmented) draw_batch(x, y);
    DenseMatrix residual = multiply(w, x);  // w x
    for (std::size_t i = 0; i < residual.data.size(); ++i) residual.data[i] = y.data[i] - residual.data[i];
    const double eta = cfg.eta(k);
    for (std::size_t r = 0; r < cfg.d; ++r)
      for (std::size_t c = 0; c < cfg.m; ++c) {
        double g = 0.0;
        for (std::size_t s = 0; s < cfg.n; ++s) g += residual(r, s) * x(c, s);
        w(r, c) += eta * g;
      }
    check_finite_bound(w.data, k + 1);
    store(k + 1);
  }
  return SnapshotMatrix(rows, epochs, std::move(values), single_layer(rows, "w"));
}

// ---- MLP ------------------------------------------------------------------

void MlpTaskConfig::validate() const {
  if (layer_widths.size() < 3) throw Error(ErrorKind::Config, "the MLP needs at least one hidden layer");
  if (layer_widths.front() != 2) throw Error(ErrorKind::Config, "input width must be 2 (2-D points)");
  if (layer_widths.back() != 2) throw Error(ErrorKind::Config, "output width must be 2 (two classes)");
  for (auto w : layer_widths)
    if (w == 0) throw Error(ErrorKind::Config, "layer widths must be positive");
  if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be positive");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0)
    throw Error(ErrorKind::Config, "learning_rate must be finite and nonnegative");
  if (dataset.count < 2) throw Error(ErrorKind::Config, "dataset count must be at least 2");
  if (!(dataset.noise >= 0.0)) throw Error(ErrorKind::Config, "dataset noise must be nonnegative");
  if (parameter_count() > 200000) throw Error(ErrorKind::Config, "MLP exceeds 200000 parameters");
}

std::size_t MlpTaskConfig::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    total += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  return total;
}

PointCloud make_point_cloud(const PointCloudSpec& spec, int split) {
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(split) + 100));
  PointCloud cloud;
  cloud.features.resize(2 * spec.count);
  cloud.labels.resize(spec.count);
  for (std::size_t s = 0; s < spec.count; ++s) {
    const int label = static_cast<int>(s % 2);
    const double sign = label == 0 ? -1.0 : 1.0;
    cloud.labels[s] = label;
    cloud.features[2 * s] = sign * 1.0 + spec.noise * rng.normal();
    cloud.features[2 * s + 1] = sign * 0.5 + spec.noise * rng.normal();
  }
  return cloud;
}

LayerIndex mlp_layer_index(const MlpTaskConfig& cfg) {
  LayerIndex layers;
  std::size_t l = 0;
  for (const auto& sh : layer_shapes(cfg)) {
    layers.push_back({"dense" + std::to_string(l) + ".weight", sh.weight_offset, sh.in * sh.out});
    layers.push_back({"dense" + std::to_string(l) + ".bias", sh.bias_offset, sh.out});
    ++l;
  }
  return layers;
}

std::vector<double> init_mlp_parameters(const MlpTaskConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 3));
  std::vector<double> p(cfg.parameter_count(), 0.0);
  for (const auto& sh : layer_shapes(cfg)) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(sh.in));
    for (std::size_t i = 0; i < sh.in * sh.out; ++i) p[sh.weight_offset + i] = scale * rng.normal();
  }
  return p;
}

MlpTrainingRun generate_mlp_training(const MlpTaskConfig& cfg) {
  cfg.validate();
  const auto shapes = layer_shapes(cfg);
  const PointCloud train = make_point_cloud(cfg.dataset, 0);
  const PointCloud test = make_point_cloud(cfg.dataset, 1);
  std::vector<double> p = init_mlp_parameters(cfg);
  const std::size_t rows = p.size();
  const std::size_t epochs = cfg.epochs + 1;

  std::vector<double> values(rows * epochs);
  std::vector<TaskMetrics> log;
  log.reserve(epochs);
  std::vector<double> grad(rows);
  for (std::size_t k = 0;; ++k) {
    for (std::size_t i = 0; i < rows; ++i) values[i * epochs + k] = p[i];
    std::fill(grad.begin(), grad.end(), 0.0);
    log.push_back(evaluate_both(shapes, p, train, test, k < cfg.epochs ? &grad : nullptr));
    if (k == cfg.epochs) break;
    for (std::size_t i = 0; i < rows; ++i) p[i] -= cfg.learning_rate * grad[i];
    check_finite_bound(p, k + 1);
  }
  return {SnapshotMatrix(rows, epochs, std::move(values), mlp_layer_index(cfg)), std::move(log)};
}

TaskMetrics evaluate_parameters(const MlpTaskConfig& cfg, std::span<const double> params) {
  cfg.validate();
  if (params.size() != cfg.parameter_count())
    throw Error(ErrorKind::Shape, "parameter count " + std::to_string(params.size()) +
                                      " does not match the network (" +
                                      std::to_string(cfg.parameter_count()) + ")");
  const auto shapes = layer_shapes(cfg);
  return evaluate_both(shapes, params, make_point_cloud(cfg.dataset, 0), make_point_cloud(cfg.dataset, 1),
                       nullptr);
}

TaskMetrics evaluate_weights(const MlpTaskConfig& cfg, const SnapshotMatrix& m, std::size_t epoch) {
  if (epoch >= m.epochs())
    throw Error(ErrorKind::Shape, "epoch " + std::to_string(epoch) + " not in trajectory");
  if (m.rows() != cfg.parameter_count())
    throw Error(ErrorKind::Shape, "trajectory has " + std::to_string(m.rows()) +
                                      " weights, the network has " + std::to_string(cfg.parameter_count()));
  const auto column = m.column(epoch);
  return evaluate_parameters(cfg, column);
}

// ---- synthetic modes ------------------------------------------------------

const char* to_string(ProfileKind kind) noexcept {
  switch (kind) {
    case ProfileKind::ExponentialDecay: return "exponential-decay";
    case ProfileKind::PiecewiseLinear: return "piecewise-linear";
    case ProfileKind::Oscillatory: return "oscillatory";
  }
  return "exponential-decay";
}

ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "exponential-decay") return ProfileKind::ExponentialDecay;
  if (s == "piecewise-linear") return ProfileKind::PiecewiseLinear;
  if (s == "oscillatory") return ProfileKind::Oscillatory;
  throw Error(ErrorKind::Config, "unknown profile kind '" + s + "'");
}

void SyntheticModesConfig::validate() const {
  if (n == 0 || epochs == 0 || modes == 0) throw Error(ErrorKind::Config, "N, T, M_true must be positive");
  if (modes > n) throw Error(ErrorKind::Config, "M_true must not exceed N");
  if (profile_kinds.size() != 1 && profile_kinds.size() != modes)
    throw Error(ErrorKind::Config, "profile_kinds must have 1 or M_true entries");
  if (!(a_min > 0.0) || !(a_max >= a_min)) throw Error(ErrorKind::Config, "need 0 < a_min <= a_max");
  if (!(b_max >= b_min)) throw Error(ErrorKind::Config, "need b_min <= b_max");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::Config, "noise_sigma must be nonnegative");
  if (layers == 0 || layers > n) throw Error(ErrorKind::Config, "layers must be in 1..N");
}

std::vector<double> make_profile(ProfileKind kind, std::size_t mode, std::size_t epochs, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1000 + mode));
  switch (kind) {
    case ProfileKind::ExponentialDecay: return exponential_profile(mode, epochs, rng);
    case ProfileKind::PiecewiseLinear: return piecewise_linear_profile(epochs, rng);
    case ProfileKind::Oscillatory: return oscillatory_profile(mode, epochs, rng);
  }
  return {};
}

SyntheticModes generate_synthetic_modes(const SyntheticModesConfig& cfg) {
  cfg.validate();
  const std::size_t epochs = cfg.epochs + 1;
  std::vector<std::vector<double>> profiles;
  for (std::size_t mode = 0; mode < cfg.modes; ++mode)
    profiles.push_back(make_profile(cfg.kind_of(mode), mode, cfg.epochs, cfg.seed));

  Rng coef_rng(derive_seed(cfg.seed, 4));
  Rng noise_rng(derive_seed(cfg.seed, 5));
  std::vector<double> values(cfg.n * epochs);
  std::vector<int> labels(cfg.n);
  std::vector<double> as(cfg.n), bs(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t mode = i % cfg.modes;
    double a = coef_rng.uniform(cfg.a_min, cfg.a_max);
    if (cfg.allow_negative && coef_rng.uniform() < 0.5) a = -a;
    const double b = coef_rng.uniform(cfg.b_min, cfg.b_max);
    labels[i] = static_cast<int>(mode);
    as[i] = a;
    bs[i] = b;
    const auto& profile = profiles[mode];
    for (std::size_t k = 0; k < epochs; ++k) {
      double v = a * profile[k] + b;
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise_rng.normal();
      values[i * epochs + k] = v;
    }
  }

  LayerIndex layers;
  const std::size_t base = cfg.n / cfg.layers, extra = cfg.n % cfg.layers;
  std::size_t start = 0;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t count = base + (l < extra ? 1 : 0);
    layers.push_back({"layer" + std::to_string(l), start, count});
    start += count;
  }
  return {SnapshotMatrix(cfg.n, epochs, std::move(values), std::move(layers)), std::move(labels),
          std::move(as), std::move(bs), std::move(profiles)};
}

SnapshotMatrix generate_linear_system(const DenseMatrix& q, std::span<const double> w0, std::size_t epochs) {
  if (q.rows != q.cols || q.rows != w0.size()) throw Error(ErrorKind::Shape, "Q must be square and match w0");
  if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be positive");
  const std::size_t n = w0.size(), cols = epochs + 1;
  std::vector<double> values(n * cols);
  std::vector<double> w(w0.begin(), w0.end()), next(n);
  for (std::size_t k = 0;; ++k) {
    for (std::size_t i = 0; i < n; ++i) values[i * cols + k] = w[i];
    if (k == epochs) break;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += q(i, j) * w[j];
      next[i] = acc;
    }
    w.swap(next);
    check_finite_bound(w, k + 1);
  }
  return SnapshotMatrix(n, cols, std::move(values), single_layer(n));
}

// ---- JSON -----------------------------------------------------------------

ToyRegressionConfig toy_regression_config_from_json(const json& j) {
  constexpr const char* what = "toy-regression";
  require_object(j, what);
  reject_unknown(j, {"d", "m", "n", "eta_schedule", "augmented", "epochs", "seed", "init_scale",
                     "label_noise", "x", "y", "w0"},
                 what);
  ToyRegressionConfig cfg;
  cfg.d = get_count(field(j, "d", what), "d");
  cfg.m = get_count(field(j, "m", what), "m");
  cfg.n = get_count(field(j, "n", what), "n");
  cfg.eta_schedule = get_as<std::vector<double>>(field(j, "eta_schedule", what), "eta_schedule");
  cfg.augmented = get_as<bool>(field(j, "augmented", what), "augmented");
  cfg.epochs = get_count(field(j, "epochs", what), "epochs");
  cfg.seed = get_seed(field(j, "seed", what));
  cfg.init_scale = get_as<double>(field(j, "init_scale", what), "init_scale");
  if (j.contains("label_noise")) cfg.label_noise = get_as<double>(j["label_noise"], "label_noise");
  if (j.contains("x")) cfg.x = matrix_from_json(j["x"], "x");
  if (j.contains("y")) cfg.y = matrix_from_json(j["y"], "y");
  if (j.contains("w0")) cfg.w0 = matrix_from_json(j["w0"], "w0");
  cfg.validate();
  return cfg;
}

json to_json(const ToyRegressionConfig& cfg) {
  json j{{"d", cfg.d},           {"m", cfg.m},           {"n", cfg.n},
         {"eta_schedule", cfg.eta_schedule}, {"augmented", cfg.augmented}, {"epochs", cfg.epochs},
         {"seed", cfg.seed},     {"init_scale", cfg.init_scale}, {"label_noise", cfg.label_noise}};
  if (cfg.x) j["x"] = matrix_to_json(*cfg.x);
  if (cfg.y) j["y"] = matrix_to_json(*cfg.y);
  if (cfg.w0) j["w0"] = matrix_to_json(*cfg.w0);
  return j;
}

MlpTaskConfig mlp_task_config_from_json(const json& j) {
  constexpr const char* what = "mlp";
  require_object(j, what);
  reject_unknown(j, {"layer_widths", "epochs", "learning_rate", "dataset", "seed"}, what);
  MlpTaskConfig cfg;
  cfg.layer_widths = get_as<std::vector<std::size_t>>(field(j, "layer_widths", what), "layer_widths");
  cfg.epochs = get_count(field(j, "epochs", what), "epochs");
  cfg.learning_rate = get_as<double>(field(j, "learning_rate", what), "learning_rate");
  const json& ds = field(j, "dataset", what);
  require_object(ds, "dataset");
  reject_unknown(ds, {"count", "noise", "seed"}, "dataset");
  cfg.dataset.count = get_count(field(ds, "count", "dataset"), "count");
  cfg.dataset.noise = get_as<double>(field(ds, "noise", "dataset"), "noise");
  cfg.dataset.seed = get_seed(field(ds, "seed", "dataset"));
  cfg.seed = get_seed(field(j, "seed", what));
  cfg.validate();
  return cfg;
}

json to_json(const MlpTaskConfig& cfg) {
  return json{{"layer_widths", cfg.layer_widths},
              {"epochs", cfg.epochs},
              {"learning_rate", cfg.learning_rate},
              {"dataset", {{"count", cfg.dataset.count}, {"noise", cfg.dataset.noise}, {"seed", cfg.dataset.seed}}},
              {"seed", cfg.seed}};
}

SyntheticModesConfig synthetic_modes_config_from_json(const json& j) {
  constexpr const char* what = "synthetic-modes";
  require_object(j, what);
  reject_unknown(j, {"N", "T", "M_true", "profile_kinds", "a_range", "b_range", "allow_negative",
                     "noise_sigma", "layers", "seed"},
                 what);
  SyntheticModesConfig cfg;
  cfg.n = get_count(field(j, "N", what), "N");
  cfg.epochs = get_count(field(j, "T", what), "T");
  cfg.modes = get_count(field(j, "M_true", what), "M_true");
  cfg.profile_kinds.clear();
  for (const auto& k : get_as<std::vector<std::string>>(field(j, "profile_kinds", what), "profile_kinds"))
    cfg.profile_kinds.push_back(profile_kind_from_string(k));
  const auto a = get_as<std::vector<double>>(field(j, "a_range", what), "a_range");
  const auto b = get_as<std::vector<double>>(field(j, "b_range", what), "b_range");
  if (a.size() != 2 || b.size() != 2) throw Error(ErrorKind::Config, "a_range and b_range need two entries");
  cfg.a_min = a[0];
  cfg.a_max = a[1];
  cfg.b_min = b[0];
  cfg.b_max = b[1];
  if (j.contains("allow_negative")) cfg.allow_negative = get_as<bool>(j["allow_negative"], "allow_negative");
  cfg.noise_sigma = get_as<double>(field(j, "noise_sigma", what), "noise_sigma");
  if (j.contains("layers")) cfg.layers = get_count(j["layers"], "layers");
  cfg.seed = get_seed(field(j, "seed", what));
  cfg.validate();
  return cfg;
}

json to_json(const SyntheticModesConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.profile_kinds) kinds.push_back(to_string(k));
  return json{{"N", cfg.n},
              {"T", cfg.epochs},
              {"M_true", cfg.modes},
              {"profile_kinds", kinds},
              {"a_range", {cfg.a_min, cfg.a_max}},
              {"b_range", {cfg.b_min, cfg.b_max}},
              {"allow_negative", cfg.allow_negative},
              {"noise_sigma", cfg.noise_sigma},
              {"layers", cfg.layers},
              {"seed", cfg.seed}};
}

}  // namespace cmdkit
