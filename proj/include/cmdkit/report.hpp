#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmdkit/decomposition.hpp"
#include "cmdkit/dmd.hpp"
#include "cmdkit/generators.hpp"
#include "cmdkit/trajectory.hpp"

namespace cmdkit {

/// Mean squared difference over all N * (T+1) entries. Throws Error(Shape)
/// when the matrices differ in shape.
double weights_mse(const SnapshotMatrix& w, const SnapshotMatrix& w_hat);

struct ModeBand {
  int mode = 0;
  bool omitted = false;  // every member had |a| < 1e-12
  std::size_t members = 0;
  std::vector<double> low;
  std::vector<double> high;
};

/// Nearest-rank percentile (p in [0, 1]) of an unsorted sample.
double nearest_rank(std::vector<double> values, double p);

/// Per mode and epoch, the central `level` band of member values mapped into
/// the reference frame by the inverse affine map (w_i - b_i) / a_i, using
/// nearest-rank percentiles. Static rows are excluded.
std::vector<ModeBand> confidence_bands(const SnapshotMatrix& m, const ModeModel& model, double level = 0.95);

/// (layer name, mode -> count) in layer order; static rows count under -1.
using ModeHistogram = std::vector<std::pair<std::string, std::map<int, std::size_t>>>;

ModeHistogram mode_distribution(const ModeModel& model, const LayerIndex& layers);

struct ModeSummary {
  int mode = 0;
  std::size_t size = 0;
  std::optional<double> mean_abs_corr;      // absent for the static mode
  std::optional<double> fraction_within_eps;
  double residual_mse = 0.0;  // mean squared reconstruction error over the mode's rows
};

struct DecompositionReport {
  double weights_mse = 0.0;
  double epsilon = 0.1;
  std::vector<ModeSummary> per_mode;
  ModeHistogram per_layer;
  std::vector<ModeBand> bands;
  std::vector<std::size_t> sample;
  std::map<std::string, std::size_t> sample_per_layer;
  double threshold = 0.0;
};

/// Report for a model fitted on m (m is the matrix the model was fitted on).
DecompositionReport build_report(const SnapshotMatrix& m, const ModeModel& model,
                                 const SnapshotMatrix& reconstruction, double level = 0.95);

nlohmann::json to_json(const DecompositionReport& report);

/// Long-format rows "metric,mode,layer,epoch,value".
std::string report_csv(const DecompositionReport& report);

struct ComparisonRow {
  std::string method;
  std::size_t dimension = 0;
  double weights_mse = 0.0;
  std::optional<TaskMetrics> final_metrics;
};

/// One row per method (CMD with dimension M, DMD with dimension r). Task
/// metrics at the final epoch are attached when a task config is given.
std::vector<ComparisonRow> compare(const SnapshotMatrix& w, const ModeModel& cmd_model, const DmdModel& dmd_model,
                                   const std::optional<MlpTaskConfig>& task = std::nullopt);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace cmdkit
