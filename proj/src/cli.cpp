#include "cmdkit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include "cmdkit/decomposition.hpp"
#include "cmdkit/dmd.hpp"
#include "cmdkit/error.hpp"
#include "cmdkit/generators.hpp"
#include "cmdkit/parallel.hpp"
#include "cmdkit/report.hpp"

#ifndef CMDKIT_VERSION
#define CMDKIT_VERSION "0.0.0"
#endif

namespace cmdkit {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

json read_json(const fs::path& path, ErrorKind on_parse_error) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(on_parse_error, path.string() + ": invalid JSON: " + e.what());
  }
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  auto out = p;
  out += suffix;
  return out;
}

bool is_csv(const fs::path& p) { return p.extension() == ".csv"; }

void write_trajectory(const SnapshotMatrix& m, const fs::path& path) {
  if (is_csv(path))
    write_text(path, format_trajectory_csv(m));
  else
    save_trajectory(m, path);
}

// Sidecar "<output>.manifest.json" describing one run.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json timings = json::object();

  void write(const fs::path& primary_output) const {
    const json j{{"tool", "cmdkit"},
                 {"version", CMDKIT_VERSION},
                 {"command", command},
                 {"argv", argv},
                 {"config", config},
                 {"config_hash", fnv1a_hex(config.dump())},
                 {"seed", seed},
                 {"inputs", inputs},
                 {"outputs", outputs},
                 {"timings_ms", timings}};
    write_text(with_suffix(primary_output, ".manifest.json"), j.dump(2) + "\n");
  }
};

// Task config embedded in a generated trajectory's manifest, if it was an MLP run.
std::optional<MlpTaskConfig> task_from_manifest(const fs::path& trajectory) {
  const auto path = with_suffix(trajectory, ".manifest.json");
  if (!fs::exists(path)) return std::nullopt;
  const json j = read_json(path, ErrorKind::Schema);
  if (j.value("command", "") != "generate" || !j.contains("config")) return std::nullopt;
  const json& cfg = j.at("config");
  if (cfg.value("kind", "") != "mlp") return std::nullopt;
  return mlp_task_config_from_json(cfg.at("task"));
}

std::string metrics_csv(const std::vector<TaskMetrics>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,train_accuracy,test_loss,test_accuracy\n";
  for (std::size_t k = 0; k < rows.size(); ++k)
    out << k << ',' << rows[k].train_loss << ',' << rows[k].train_accuracy << ',' << rows[k].test_loss << ','
        << rows[k].test_accuracy << '\n';
  return out.str();
}

struct GenerateArgs {
  std::string kind;
  std::string config;
  std::string out;
};

struct DecomposeArgs {
  std::string trajectory;
  std::optional<std::size_t> modes;
  std::optional<double> threshold;
  std::size_t sample = kDefaultSampleSize;
  std::uint64_t seed = 0;
  double epsilon = 0.1;
  std::optional<std::size_t> truncate_from;
  std::optional<std::size_t> subsample;
  unsigned threads = 0;
  std::string out;
  std::string report;
  std::string report_csv;
  std::string dendrogram;
};

struct ReconstructArgs {
  std::string model;
  std::string full;
  std::string out;
};

struct DmdArgs {
  std::string trajectory;
  std::size_t rank = 0;
  std::string out;
};

struct ReportArgs {
  std::string trajectory;
  std::string reconstruction;
  std::string model;
  double level = 0.95;
  std::string out;
  std::string csv;
};

struct EvaluateArgs {
  std::string trajectory;
  std::string task;
  std::string out;
};

struct CompareArgs {
  std::string trajectory;
  std::string cmd_model;
  std::string dmd_model;
  std::string task;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, Manifest& manifest, std::ostream& out) {
  const json raw = read_json(a.config, ErrorKind::Config);
  const auto start = Clock::now();
  json config;
  std::uint64_t seed = 0;
  std::optional<SnapshotMatrix> weights;
  std::vector<TaskMetrics> log;
  if (a.kind == "toy-regression") {
    const auto cfg = toy_regression_config_from_json(raw);
    seed = cfg.seed;
    config = to_json(cfg);
    weights.emplace(generate_toy_regression(cfg));
  } else if (a.kind == "mlp") {
    const auto cfg = mlp_task_config_from_json(raw);
    seed = cfg.seed;
    config = to_json(cfg);
    auto run = generate_mlp_training(cfg);
    weights.emplace(std::move(run.weights));
    log = std::move(run.log);
  } else if (a.kind == "synthetic-modes") {
    const auto cfg = synthetic_modes_config_from_json(raw);
    seed = cfg.seed;
    config = to_json(cfg);
    weights.emplace(generate_synthetic_modes(cfg).weights);
  } else {
    throw Error(ErrorKind::Config, "unknown generator kind '" + a.kind + "'");
  }
  manifest.timings["generate"] = elapsed_ms(start);

  write_trajectory(*weights, a.out);
  manifest.config = {{"kind", a.kind}, {"task", config}};
  manifest.seed = seed;
  manifest.inputs = {a.config};
  manifest.outputs = {a.out};
  if (!log.empty()) {
    const auto log_path = with_suffix(fs::path(a.out), ".metrics.csv");
    write_text(log_path, metrics_csv(log));
    manifest.outputs.push_back(log_path.string());
  }
  manifest.write(a.out);
  out << "wrote " << weights->rows() << " x " << weights->epochs() << " trajectory to " << a.out << "\n";
  return 0;
}

int cmd_decompose(const DecomposeArgs& a, Manifest& manifest, std::ostream& out) {
  const SnapshotMatrix full = load_trajectory(a.trajectory);

  ClusterConfig cfg;
  cfg.sample_size = a.sample;
  cfg.seed = a.seed;
  cfg.epsilon = a.epsilon;
  if (a.modes)
    cfg.cut = FixedModes{*a.modes};
  else if (a.threshold)
    cfg.cut = DistanceThreshold{*a.threshold};
  cfg.validate();

  std::optional<SelectedTrajectory> selected;
  if (a.truncate_from) selected.emplace(truncate_history(full, *a.truncate_from));
  if (a.subsample) selected.emplace(subsample_epochs(full, *a.subsample));
  const SnapshotMatrix& m = selected ? selected->matrix : full;

  DecomposeOptions options;
  options.threads = resolve_threads(a.threads);
  options.epoch_selection = selected ? selected->selection : EpochSelection::full(full.epochs());

  const Decomposition d = decompose_detailed(m, cfg, options);
  save_model(d.model, a.out);

  const auto report_start = Clock::now();
  const DecompositionReport report = build_report(m, d.model, reconstruct(d.model));
  const fs::path report_path = a.report.empty() ? with_suffix(fs::path(a.out), ".report.json") : fs::path(a.report);
  write_text(report_path, dump_json(to_json(report)) + "\n");
  manifest.outputs = {a.out, report_path.string()};
  if (!a.report_csv.empty()) {
    write_text(a.report_csv, report_csv(report));
    manifest.outputs.push_back(a.report_csv);
  }
  if (!a.dendrogram.empty()) {
    write_text(a.dendrogram, dump_json(to_json(d.dendrogram)) + "\n");
    manifest.outputs.push_back(a.dendrogram);
  }

  json selection{{"kind", to_string(options.epoch_selection.kind)}, {"parameter", options.epoch_selection.parameter}};
  manifest.config = {{"cluster", to_json(cfg)}, {"epoch_selection", selection}};
  manifest.seed = a.seed;
  manifest.inputs = {a.trajectory};
  manifest.timings = {{"sample", d.timings.sample_ms},   {"correlate", d.timings.correlate_ms},
                      {"cluster", d.timings.cluster_ms}, {"assign", d.timings.assign_ms},
                      {"fit", d.timings.fit_ms},         {"report", elapsed_ms(report_start)}};
  manifest.write(a.out);
  out << "M=" << d.model.mode_count() << " threshold=" << d.model.threshold << " weights_mse=" << report.weights_mse
      << "\n";
  return 0;
}

int cmd_reconstruct(const ReconstructArgs& a, Manifest& manifest, std::ostream& out) {
  const ModeModel model = load_model(a.model);
  const auto start = Clock::now();
  std::optional<SnapshotMatrix> recon;
  manifest.inputs = {a.model};
  if (a.full.empty()) {
    recon.emplace(reconstruct(model));
  } else {
    recon.emplace(reconstruct_with(model, load_trajectory(a.full)));
    manifest.inputs.push_back(a.full);
  }
  manifest.timings["reconstruct"] = elapsed_ms(start);
  write_trajectory(*recon, a.out);
  manifest.config = {{"full_trajectory", !a.full.empty()}};
  manifest.seed = model.config.seed;
  manifest.outputs = {a.out};
  manifest.write(a.out);
  out << "wrote " << recon->rows() << " x " << recon->epochs() << " reconstruction to " << a.out << "\n";
  return 0;
}

int cmd_dmd(const DmdArgs& a, Manifest& manifest, std::ostream& out, std::ostream& err) {
  const SnapshotMatrix m = load_trajectory(a.trajectory);
  const auto start = Clock::now();
  const DmdModel model = dmd_fit(m, a.rank);
  manifest.timings["fit"] = elapsed_ms(start);
  for (const auto& w : model.warnings) err << "warning: " << w << "\n";
  save_dmd(model, a.out);
  manifest.config = {{"rank", a.rank}};
  manifest.inputs = {a.trajectory};
  manifest.outputs = {a.out, dmd_modes_path(a.out).string()};
  manifest.write(a.out);
  out << "DMD rank " << model.rank << " written to " << a.out << "\n";
  return 0;
}

int cmd_report(const ReportArgs& a, Manifest& manifest, std::ostream& out) {
  const SnapshotMatrix w = load_trajectory(a.trajectory);
  const SnapshotMatrix w_hat = load_trajectory(a.reconstruction);
  manifest.inputs = {a.trajectory, a.reconstruction};
  json j;
  std::optional<DecompositionReport> report;
  if (a.model.empty()) {
    j = {{"weights_mse", weights_mse(w, w_hat)}};
  } else {
    const ModeModel model = load_model(a.model);
    manifest.inputs.push_back(a.model);
    report.emplace(build_report(w, model, w_hat, a.level));
    j = to_json(*report);
  }
  write_text(a.out, dump_json(j) + "\n");
  manifest.outputs = {a.out};
  if (!a.csv.empty()) {
    const std::string csv = report ? report_csv(*report)
                                   : "metric,mode,layer,epoch,value\nweights_mse,,,," + j.at("weights_mse").dump() + "\n";
    write_text(a.csv, csv);
    manifest.outputs.push_back(a.csv);
  }
  manifest.config = {{"level", a.level}};
  manifest.write(a.out);
  out << "weights_mse=" << j.at("weights_mse").get<double>() << "\n";
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a, Manifest& manifest, std::ostream& out) {
  const SnapshotMatrix m = load_trajectory(a.trajectory);
  const MlpTaskConfig task = mlp_task_config_from_json(read_json(a.task, ErrorKind::Config));
  std::vector<TaskMetrics> rows;
  for (std::size_t k = 0; k < m.epochs(); ++k) rows.push_back(evaluate_weights(task, m, k));
  write_text(a.out, metrics_csv(rows));
  manifest.config = to_json(task);
  manifest.seed = task.seed;
  manifest.inputs = {a.trajectory, a.task};
  manifest.outputs = {a.out};
  manifest.write(a.out);
  out << "final test accuracy " << rows.back().test_accuracy << "\n";
  return 0;
}

int cmd_compare(const CompareArgs& a, Manifest& manifest, std::ostream& out) {
  const SnapshotMatrix w = load_trajectory(a.trajectory);
  const ModeModel cmd_model = load_model(a.cmd_model);
  const DmdModel dmd_model = load_dmd(a.dmd_model);
  std::optional<MlpTaskConfig> task;
  if (!a.task.empty())
    task = mlp_task_config_from_json(read_json(a.task, ErrorKind::Config));
  else
    task = task_from_manifest(a.trajectory);
  const auto rows = compare(w, cmd_model, dmd_model, task);
  write_text(a.out, comparison_csv(rows));
  manifest.config = {{"task", task ? to_json(*task) : json(nullptr)}};
  manifest.inputs = {a.trajectory, a.cmd_model, a.dmd_model};
  if (!a.task.empty()) manifest.inputs.push_back(a.task);
  manifest.outputs = {a.out};
  manifest.write(a.out);
  for (const auto& r : rows) out << r.method << " dim=" << r.dimension << " weights_mse=" << r.weights_mse << "\n";
  return 0;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Correlation mode decomposition of training trajectories", "cmdkit"};
  app.set_version_flag("--version", CMDKIT_VERSION);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Simulate a training trajectory");
  generate->add_option("kind", gen.kind, "toy-regression | mlp | synthetic-modes")
      ->required()
      ->check(CLI::IsMember({"toy-regression", "mlp", "synthetic-modes"}));
  generate->add_option("config", gen.config, "Generator config (JSON)")->required();
  generate->add_option("--out,-o", gen.out, "Output trajectory (.cmdt, or .csv)")->required();

  DecomposeArgs dec;
  auto* decompose_cmd = app.add_subcommand("decompose", "Fit a CMD model");
  decompose_cmd->add_option("trajectory", dec.trajectory)->required();
  auto* modes_opt = decompose_cmd->add_option("--modes,-M", dec.modes, "Fixed number of modes");
  auto* threshold_opt = decompose_cmd->add_option("--threshold,-t", dec.threshold, "Linkage distance threshold in (0, 1]");
  modes_opt->excludes(threshold_opt);
  decompose_cmd->add_option("--sample,-K", dec.sample, "Representative sample size")->capture_default_str();
  decompose_cmd->add_option("--seed", dec.seed)->capture_default_str();
  decompose_cmd->add_option("--epsilon", dec.epsilon, "Diagnostic correlation slack")->capture_default_str();
  auto* trunc_opt = decompose_cmd->add_option("--truncate-from", dec.truncate_from, "Keep epochs E..T only");
  auto* sub_opt = decompose_cmd->add_option("--subsample", dec.subsample, "Keep every F-th epoch");
  trunc_opt->excludes(sub_opt);
  decompose_cmd->add_option("--threads", dec.threads, "Worker threads (default: CMDKIT_THREADS or 1)");
  decompose_cmd->add_option("--out,-o", dec.out, "Model JSON")->required();
  decompose_cmd->add_option("--report", dec.report, "Report JSON (default <out>.report.json)");
  decompose_cmd->add_option("--report-csv", dec.report_csv, "Long-format report CSV");
  decompose_cmd->add_option("--dendrogram", dec.dendrogram, "Dendrogram JSON");

  ReconstructArgs rec;
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Rebuild weights from a CMD model");
  reconstruct_cmd->add_option("model", rec.model)->required();
  reconstruct_cmd->add_option("--full-trajectory", rec.full,
                              "Original trajectory; use its reference rows over all epochs");
  reconstruct_cmd->add_option("--out,-o", rec.out)->required();

  DmdArgs dmd;
  auto* dmd_cmd = app.add_subcommand("dmd", "Fit an exact DMD baseline");
  dmd_cmd->add_option("trajectory", dmd.trajectory)->required();
  dmd_cmd->add_option("--rank,-r", dmd.rank)->required();
  dmd_cmd->add_option("--out,-o", dmd.out)->required();

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Compare a trajectory with its reconstruction");
  report_cmd->add_option("trajectory", rep.trajectory)->required();
  report_cmd->add_option("reconstruction", rep.reconstruction)->required();
  report_cmd->add_option("--model", rep.model, "CMD model, for per-mode statistics and bands");
  report_cmd->add_option("--level", rep.level)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  report_cmd->add_option("--out,-o", rep.out)->required();
  report_cmd->add_option("--csv", rep.csv);

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Task metrics of every epoch of a trajectory");
  evaluate_cmd->add_option("trajectory", ev.trajectory)->required();
  evaluate_cmd->add_option("task", ev.task, "MLP task config (JSON)")->required();
  evaluate_cmd->add_option("--out,-o", ev.out, "Metrics CSV")->required();

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "CMD vs DMD table");
  compare_cmd->add_option("trajectory", cmp.trajectory)->required();
  compare_cmd->add_option("cmd_model", cmp.cmd_model)->required();
  compare_cmd->add_option("dmd_model", cmp.dmd_model)->required();
  compare_cmd->add_option("--task", cmp.task, "MLP task config; read from the trajectory manifest when omitted");
  compare_cmd->add_option("--out,-o", cmp.out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  Manifest manifest;
  manifest.argv = args;
  try {
    if (generate->parsed()) {
      manifest.command = "generate";
      return cmd_generate(gen, manifest, out);
    }
    if (decompose_cmd->parsed()) {
      manifest.command = "decompose";
      return cmd_decompose(dec, manifest, out);
    }
    if (reconstruct_cmd->parsed()) {
      manifest.command = "reconstruct";
      return cmd_reconstruct(rec, manifest, out);
    }
    if (dmd_cmd->parsed()) {
      manifest.command = "dmd";
      return cmd_dmd(dmd, manifest, out, err);
    }
    if (report_cmd->parsed()) {
      manifest.command = "report";
      return cmd_report(rep, manifest, out);
    }
    if (evaluate_cmd->parsed()) {
      manifest.command = "evaluate";
      return cmd_evaluate(ev, manifest, out);
    }
    if (compare_cmd->parsed()) {
      manifest.command = "compare";
      return cmd_compare(cmp, manifest, out);
    }
  } catch (const Error& e) {
    err << "cmdkit: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << "cmdkit: config error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "cmdkit: I/O error: " << e.what() << "\n";
    return 5;
  } catch (const std::bad_alloc&) {
    err << "cmdkit: numeric error: out of memory\n";
    return 3;
  }
  return 2;
}

}  // namespace cmdkit
