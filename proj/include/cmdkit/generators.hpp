#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmdkit/trajectory.hpp"

namespace cmdkit {

inline constexpr double kDivergenceLimit = 1e12;

/// Dense row-major matrix used for the small generator operands.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Linear regression trained by gradient descent,
//   w^{k+1} = w^k + eta^k (y^k - w^k x^k) (x^k)^T,   w: d x m, x: m x n, y: d x n.
// Non-augmented runs reuse one (x, y); augmented runs redraw x^k with i.i.d.
// N(0,1) entries and y^k = w* x^k + label_noise * N(0,1) every epoch.
struct ToyRegressionConfig {
  std::size_t d = 1;  // output dim
  std::size_t m = 1;  // input dim
  std::size_t n = 1;  // sample count
  std::vector<double> eta_schedule{0.01};  // length 1 (constant) or epochs
  bool augmented = false;
  std::size_t epochs = 100;  // T
  std::uint64_t seed = 0;
  double init_scale = 1.0;
  double label_noise = 0.0;
  // Optional fixed operands; drawn from the seed when absent.
  std::optional<DenseMatrix> x;
  std::optional<DenseMatrix> y;
  std::optional<DenseMatrix> w0;

  void validate() const;
  double eta(std::size_t k) const { return eta_schedule.size() == 1 ? eta_schedule[0] : eta_schedule[k]; }
};

SnapshotMatrix generate_toy_regression(const ToyRegressionConfig& cfg);

// ---------------------------------------------------------------------------
// Fully connected tanh classifier trained by full-batch gradient descent on a
// two-class 2-D point cloud (softmax cross-entropy).
struct PointCloudSpec {
  std::size_t count = 400;  // training points; the held-out split has the same size
  double noise = 0.3;       // isotropic std around the two class centres
  std::uint64_t seed = 0;
};

struct MlpTaskConfig {
  std::vector<std::size_t> layer_widths{2, 16, 2};
  std::size_t epochs = 150;
  double learning_rate = 0.05;
  PointCloudSpec dataset;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t parameter_count() const;
};

struct TaskMetrics {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;

  bool operator==(const TaskMetrics&) const = default;
};

struct MlpTrainingRun {
  SnapshotMatrix weights;
  std::vector<TaskMetrics> log;  // epochs + 1 entries, entry k for the weights of epoch k
};

MlpTrainingRun generate_mlp_training(const MlpTaskConfig& cfg);

/// Loads column `epoch` of m into the network and evaluates both splits.
TaskMetrics evaluate_weights(const MlpTaskConfig& cfg, const SnapshotMatrix& m, std::size_t epoch);

/// Same, for an explicit flat parameter vector (layer order of the trajectory).
TaskMetrics evaluate_parameters(const MlpTaskConfig& cfg, std::span<const double> params);

struct PointCloud {
  std::vector<double> features;  // count x 2, row-major
  std::vector<int> labels;       // 0 / 1, alternating
};

/// The train (split 0) or held-out (split 1) part of the task's dataset.
PointCloud make_point_cloud(const PointCloudSpec& spec, int split);

/// Initial flat parameter vector and the layer index naming each tensor.
std::vector<double> init_mlp_parameters(const MlpTaskConfig& cfg);
LayerIndex mlp_layer_index(const MlpTaskConfig& cfg);

// ---------------------------------------------------------------------------
// Exact-mode generator: row i = a_i * p_{mode(i)} + b_i + noise.
enum class ProfileKind { ExponentialDecay, PiecewiseLinear, Oscillatory };

const char* to_string(ProfileKind kind) noexcept;
ProfileKind profile_kind_from_string(const std::string& s);

struct SyntheticModesConfig {
  std::size_t n = 1000;
  std::size_t epochs = 100;  // T
  std::size_t modes = 3;     // M_true
  std::vector<ProfileKind> profile_kinds{ProfileKind::ExponentialDecay};  // 1 or M_true entries
  double a_min = 0.5, a_max = 2.0;   // |a| range; sign drawn uniformly when allow_negative
  bool allow_negative = true;
  double b_min = -1.0, b_max = 1.0;
  double noise_sigma = 0.0;
  std::size_t layers = 1;  // rows split into this many equal layers
  std::uint64_t seed = 0;

  void validate() const;
  ProfileKind kind_of(std::size_t mode) const {
    return profile_kinds.size() == 1 ? profile_kinds[0] : profile_kinds[mode];
  }
};

struct SyntheticModes {
  SnapshotMatrix weights;
  std::vector<int> labels;  // row -> mode; modes interleave (i mod M_true)
  std::vector<double> a;
  std::vector<double> b;
  std::vector<std::vector<double>> profiles;  // M_true x (T+1)
};

SyntheticModes generate_synthetic_modes(const SyntheticModesConfig& cfg);

/// Base profile for one mode, length epochs+1. Deterministic in (kind, mode, seed).
std::vector<double> make_profile(ProfileKind kind, std::size_t mode, std::size_t epochs,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
/// Iterates w^{k+1} = Q w^k for T epochs; row i is component i.
SnapshotMatrix generate_linear_system(const DenseMatrix& q, std::span<const double> w0,
                                      std::size_t epochs);

// JSON configs. Unknown fields are rejected with Error(Config).
ToyRegressionConfig toy_regression_config_from_json(const nlohmann::json& j);
MlpTaskConfig mlp_task_config_from_json(const nlohmann::json& j);
SyntheticModesConfig synthetic_modes_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ToyRegressionConfig& cfg);
nlohmann::json to_json(const MlpTaskConfig& cfg);
nlohmann::json to_json(const SyntheticModesConfig& cfg);

}  // namespace cmdkit
