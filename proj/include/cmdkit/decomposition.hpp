#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmdkit/clustering.hpp"
#include "cmdkit/correlation.hpp"
#include "cmdkit/trajectory.hpp"

namespace cmdkit {

struct AffineCoefficients {
  std::vector<double> a;
  std::vector<double> b;
};

/// Least-squares (a_i, b_i) minimising ||w_i - a_i r - b_i 1||^2 for every
/// row of `rows` (row-major, rows.size() / reference.size() rows). The 2x2
/// normal system is formed on the mean-shifted reference [r - mean(r); 1],
/// whose Gram matrix is diag(||r - mean(r)||^2, T+1); the shift is undone on
/// output. Throws Error(Degenerate) when the reference is numerically constant.
AffineCoefficients fit_affine(std::span<const double> rows, std::span<const double> reference);

struct ModeInfo {
  int id = 0;
  std::size_t reference_row = 0;
  std::vector<double> reference;  // trajectory over the stored epochs

  bool operator==(const ModeInfo&) const = default;
};

struct WeightModel {
  int mode = kStaticMode;
  double a = 0.0;
  double b = 0.0;
  double corr = 0.0;  // correlation with the mode reference, 0 for static rows

  bool operator==(const WeightModel&) const = default;
};

/// Per-stage timings of one decomposition, milliseconds.
struct StageTimings {
  double sample_ms = 0.0;
  double correlate_ms = 0.0;
  double cluster_ms = 0.0;
  double assign_ms = 0.0;
  double fit_ms = 0.0;
};

struct ModeModel {
  std::size_t epochs = 0;  // stored epoch count (after any selection)
  LayerIndex layers;
  EpochSelection epoch_selection;
  ClusterConfig config;
  double threshold = 0.0;  // cut threshold actually applied
  std::vector<ModeInfo> modes;
  std::vector<WeightModel> weights;  // ordered by row index
  std::vector<std::size_t> sample;   // sampled rows, for diagnostics

  std::size_t mode_count() const noexcept { return modes.size(); }
  std::size_t rows() const noexcept { return weights.size(); }

  /// Throws Error(Schema) when the model violates its invariants.
  void validate() const;

  bool operator==(const ModeModel&) const = default;
};

struct DecomposeOptions {
  unsigned threads = 1;
  EpochSelection epoch_selection;  // recorded in the model; empty = full
};

struct Decomposition {
  ModeModel model;
  Dendrogram dendrogram;
  SampleSet sample;
  StageTimings timings;
};

/// Full pipeline: sample K rows (K clamped to N), correlate them, complete
/// linkage, cut, choose references, assign the remaining rows by maximal
/// |corr| and fit (a, b) per row. Sampled rows keep their cluster labels and
/// are fitted like any other member. Deterministic in (m, cfg).
Decomposition decompose_detailed(const SnapshotMatrix& m, const ClusterConfig& cfg,
                                 const DecomposeOptions& options = {});

ModeModel decompose(const SnapshotMatrix& m, const ClusterConfig& cfg, const DecomposeOptions& options = {});

/// W_hat row i = a_i * reference(mode(i)) + b_i over the stored epochs.
SnapshotMatrix reconstruct(const ModeModel& model);

/// Same, but using the full trajectories of the reference rows taken from
/// `full` (e.g. the original matrix when the model was fitted on a truncated
/// or subsampled history).
SnapshotMatrix reconstruct_with(const ModeModel& model, const SnapshotMatrix& full);

nlohmann::json to_json(const ModeModel& model);
ModeModel model_from_json(const nlohmann::json& j);

void save_model(const ModeModel& model, const std::filesystem::path& path);
ModeModel load_model(const std::filesystem::path& path);

/// Canonical serialisation used by save_model (sorted keys, shortest
/// round-trip decimal for every real).
std::string dump_json(const nlohmann::json& j);

}  // namespace cmdkit
