#include "cmdkit/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "cmdkit/error.hpp"

namespace cmdkit {

namespace {

using nlohmann::json;

std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

double weights_mse(const SnapshotMatrix& w, const SnapshotMatrix& w_hat) {
  if (w.rows() != w_hat.rows() || w.epochs() != w_hat.epochs())
    throw Error(ErrorKind::Shape, "weights_mse: shapes differ (" + std::to_string(w.rows()) + "x" +
                                      std::to_string(w.epochs()) + " vs " + std::to_string(w_hat.rows()) + "x" +
                                      std::to_string(w_hat.epochs()) + ")");
  const auto a = w.values(), b = w_hat.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::Shape, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // The small slack keeps exact products such as 0.025 * 1000 from rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

std::vector<ModeBand> confidence_bands(const SnapshotMatrix& m, const ModeModel& model, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Config, "confidence level must lie in (0, 1)");
  if (m.rows() != model.rows() || m.epochs() != model.epochs)
    throw Error(ErrorKind::Shape, "confidence_bands: matrix does not match the model");
  const double lo_p = (1.0 - level) / 2.0, hi_p = (1.0 + level) / 2.0;

  std::vector<std::vector<std::size_t>> members(model.mode_count());
  for (std::size_t i = 0; i < model.rows(); ++i) {
    const auto& w = model.weights[i];
    if (w.mode == kStaticMode) continue;
    if (std::abs(w.a) < 1e-12) continue;
    members[static_cast<std::size_t>(w.mode)].push_back(i);
  }

  std::vector<ModeBand> bands;
  for (std::size_t mode = 0; mode < model.mode_count(); ++mode) {
    ModeBand band;
    band.mode = static_cast<int>(mode);
    band.members = members[mode].size();
    if (members[mode].empty()) {
      band.omitted = true;
      bands.push_back(std::move(band));
      continue;
    }
    std::vector<double> column(members[mode].size());
    for (std::size_t k = 0; k < m.epochs(); ++k) {
      for (std::size_t j = 0; j < members[mode].size(); ++j) {
        const std::size_t i = members[mode][j];
        const auto& w = model.weights[i];
        column[j] = (m.at(i, k) - w.b) / w.a;
      }
      band.low.push_back(nearest_rank(column, lo_p));
      band.high.push_back(nearest_rank(column, hi_p));
    }
    bands.push_back(std::move(band));
  }
  return bands;
}

ModeHistogram mode_distribution(const ModeModel& model, const LayerIndex& layers) {
  validate_layers(layers, model.rows());
  ModeHistogram hist;
  for (const auto& layer : layers) {
    std::map<int, std::size_t> counts;
    for (std::size_t i = layer.start_row; i < layer.start_row + layer.row_count; ++i) ++counts[model.weights[i].mode];
    hist.emplace_back(layer.name, std::move(counts));
  }
  return hist;
}

DecompositionReport build_report(const SnapshotMatrix& m, const ModeModel& model,
                                 const SnapshotMatrix& reconstruction, double level) {
  DecompositionReport r;
  r.weights_mse = weights_mse(m, reconstruction);
  r.epsilon = model.config.epsilon;
  r.threshold = model.threshold;
  r.sample = model.sample;
  for (auto i : model.sample) ++r.sample_per_layer[m.layer_of(i)];

  std::map<int, ModeSummary> summaries;
  std::map<int, double> abs_sum;
  std::map<int, std::size_t> within;
  for (std::size_t i = 0; i < model.rows(); ++i) {
    const auto& w = model.weights[i];
    auto& s = summaries[w.mode];
    s.mode = w.mode;
    ++s.size;
    for (std::size_t k = 0; k < m.epochs(); ++k) {
      const double d = m.at(i, k) - reconstruction.at(i, k);
      s.residual_mse += d * d;
    }
    abs_sum[w.mode] += std::abs(w.corr);
    if (std::abs(w.corr) >= 1.0 - model.config.epsilon) ++within[w.mode];
  }
  for (auto& [mode, s] : summaries) {
    s.residual_mse /= static_cast<double>(s.size * m.epochs());
    if (mode != kStaticMode) {
      s.mean_abs_corr = abs_sum[mode] / static_cast<double>(s.size);
      s.fraction_within_eps = static_cast<double>(within[mode]) / static_cast<double>(s.size);
    }
    r.per_mode.push_back(s);
  }
  r.per_layer = mode_distribution(model, m.layers());
  r.bands = confidence_bands(m, model, level);
  return r;
}

json to_json(const DecompositionReport& report) {
  json per_mode = json::array();
  for (const auto& s : report.per_mode) {
    json entry{{"mode", s.mode}, {"size", s.size}};
    entry["mean_abs_corr"] = s.mean_abs_corr ? json(*s.mean_abs_corr) : json(nullptr);
    entry["fraction_within_epsilon"] = s.fraction_within_eps ? json(*s.fraction_within_eps) : json(nullptr);
    entry["residual_mse"] = s.residual_mse;
    per_mode.push_back(std::move(entry));
  }
  json per_layer = json::array();
  for (const auto& [layer, counts] : report.per_layer) {
    json c = json::array();
    for (const auto& [mode, count] : counts) c.push_back({{"mode", mode}, {"count", count}});
    per_layer.push_back({{"layer", layer}, {"modes", c}});
  }
  json bands = json::array();
  for (const auto& b : report.bands)
    bands.push_back({{"mode", b.mode}, {"members", b.members}, {"omitted", b.omitted}, {"low", b.low}, {"high", b.high}});
  return {{"weights_mse", report.weights_mse},
          {"epsilon", report.epsilon},
          {"threshold", report.threshold},
          {"per_mode", per_mode},
          {"per_layer_mode_histogram", per_layer},
          {"ci_bands", bands},
          {"ci_frame", "reference frame via inverse affine map (w - b) / a, nearest-rank percentiles"},
          {"sample", {{"indices", report.sample}, {"per_layer_counts", report.sample_per_layer}}}};
}

std::string report_csv(const DecompositionReport& report) {
  std::string out = "metric,mode,layer,epoch,value\n";
  auto row = [&](const std::string& metric, const std::string& mode, const std::string& layer,
                 const std::string& epoch, const std::string& value) {
    out += metric + ',' + mode + ',' + layer + ',' + epoch + ',' + value + '\n';
  };
  row("weights_mse", "", "", "", format_real(report.weights_mse));
  for (const auto& s : report.per_mode) {
    row("mode_size", std::to_string(s.mode), "", "", std::to_string(s.size));
    if (s.mean_abs_corr) row("mean_abs_corr", std::to_string(s.mode), "", "", format_real(*s.mean_abs_corr));
    if (s.fraction_within_eps)
      row("fraction_within_epsilon", std::to_string(s.mode), "", "", format_real(*s.fraction_within_eps));
    row("residual_mse", std::to_string(s.mode), "", "", format_real(s.residual_mse));
  }
  for (const auto& [layer, counts] : report.per_layer)
    for (const auto& [mode, count] : counts) row("mode_count", std::to_string(mode), layer, "", std::to_string(count));
  for (const auto& b : report.bands) {
    for (std::size_t k = 0; k < b.low.size(); ++k) {
      row("ci_low", std::to_string(b.mode), "", std::to_string(k), format_real(b.low[k]));
      row("ci_high", std::to_string(b.mode), "", std::to_string(k), format_real(b.high[k]));
    }
  }
  return out;
}

std::vector<ComparisonRow> compare(const SnapshotMatrix& w, const ModeModel& cmd_model, const DmdModel& dmd_model,
                                   const std::optional<MlpTaskConfig>& task) {
  const SnapshotMatrix cmd_hat = cmd_model.epochs == w.epochs() ? reconstruct(cmd_model) : reconstruct_with(cmd_model, w);
  const SnapshotMatrix dmd_hat = dmd_reconstruct(dmd_model, w.epochs()).matrix;
  std::vector<ComparisonRow> rows;
  rows.push_back({"cmd", cmd_model.mode_count(), weights_mse(w, cmd_hat), std::nullopt});
  rows.push_back({"dmd", dmd_model.rank, weights_mse(w, dmd_hat), std::nullopt});
  if (task) {
    rows[0].final_metrics = evaluate_weights(*task, cmd_hat, w.last_epoch());
    rows[1].final_metrics = evaluate_weights(*task, dmd_hat, w.last_epoch());
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "method,dimension,weights_mse,final_train_accuracy,final_test_accuracy,final_test_loss\n";
  for (const auto& r : rows) {
    out += r.method + ',' + std::to_string(r.dimension) + ',' + format_real(r.weights_mse);
    if (r.final_metrics) {
      out += ',' + format_real(r.final_metrics->train_accuracy) + ',' + format_real(r.final_metrics->test_accuracy) +
             ',' + format_real(r.final_metrics->test_loss);
    } else {
      out += ",,,";
    }
    out += '\n';
  }
  return out;
}

}  // namespace cmdkit
