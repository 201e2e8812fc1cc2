#include "sbgnn/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"
#include "sbgnn/metrics.hpp"
#include "sbgnn/model.hpp"
#include "sbgnn/spectral.hpp"
#include "sbgnn/train.hpp"

namespace sbgnn::cli {

using nlohmann::json;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SBGNN_SEED")) {
    return static_cast<std::uint64_t>(io::parse_long(env, "SBGNN_SEED"));
  }
  return 42;
}

void ensure_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw ConfigError("output path " + dir.string() + " exists and is not a directory");
    }
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() +
                        " is not empty (pass --force to overwrite)");
    }
  } else {
    fs::create_directories(dir);
  }
}

void cmd_synth(const SynthOptions& opt) {
  SyntheticSpec spec;
  spec.n_classes = opt.classes;
  spec.graphs_per_class = opt.graphs_per_class;
  spec.n_rois = opt.nodes;
  spec.n_timepoints = opt.timesteps;
  spec.rho_in = opt.rho_in;
  spec.rho_out = opt.rho_out;
  spec.seed = opt.seed;
  validate_synthetic_spec(spec);  // validate before touching outputs
  ensure_output_dir(opt.out, opt.force);

  const SyntheticOutput gen = generate_synthetic(spec);
  std::string labels = "id,label\n";
  for (std::size_t k = 0; k < gen.ids.size(); ++k) {
    io::write_csv_matrix(opt.out / (gen.ids[k] + "_ts.csv"), gen.series[k].values);
    labels += gen.ids[k] + "," + std::to_string(gen.labels[k]) + "\n";
  }
  io::write_file(opt.out / "labels.csv", labels);
  std::cerr << "synth: wrote " << gen.ids.size() << " subjects to " << opt.out.string() << "\n";
}

namespace {

struct LabelledSubjects {
  std::vector<std::string> ids;
  std::vector<int> labels;
  int n_classes = 0;
};

LabelledSubjects read_labels(const std::filesystem::path& path) {
  const std::vector<std::string> lines = io::read_lines(path);
  if (lines.empty() || lines[0] != "id,label") {
    throw FormatError("labels.csv must start with an 'id,label' header");
  }
  LabelledSubjects out;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::vector<std::string> cells = io::split(lines[k], ',');
    if (cells.size() != 2) throw FormatError("malformed labels.csv line '" + lines[k] + "'");
    out.ids.push_back(cells[0]);
    const long label = io::parse_long(cells[1], "labels.csv");
    if (label < 0) throw ValidationError("negative label for subject " + cells[0]);
    out.labels.push_back(static_cast<int>(label));
    out.n_classes = std::max(out.n_classes, static_cast<int>(label) + 1);
  }
  if (out.ids.empty()) throw FormatError("labels.csv lists no subjects");
  return out;
}

}  // namespace

void cmd_build(const BuildOptions& opt) {
  const FeatureMode mode = feature_mode_from_string(opt.features);
  if (!(opt.threshold > 0.0 && opt.threshold < 1.0)) {
    throw ConfigError("threshold tau must lie in (0,1), got " + io::format_double(opt.threshold));
  }
  const LabelledSubjects subjects = read_labels(opt.ts_dir / "labels.csv");
  if (subjects.n_classes < 2) throw ValidationError("labels.csv must cover at least 2 classes");
  ensure_output_dir(opt.out, opt.force);
  if (opt.dump_spectrum) ensure_output_dir(*opt.dump_spectrum, opt.force);

  Dataset d;
  d.feature_mode = mode;
  d.provenance = opt.ts_dir.string();
  for (int c = 0; c < subjects.n_classes; ++c) d.class_names.push_back("class_" + std::to_string(c));

  std::vector<std::string> isolated;
  for (std::size_t k = 0; k < subjects.ids.size(); ++k) {
    const std::string& id = subjects.ids[k];
    const TimeSeriesMatrix ts = load_timeseries(opt.ts_dir / (id + "_ts.csv"));
    const ConnectivityMatrix c = pearson_matrix(ts);
    Graph g = threshold_graph(c, opt.threshold, mode, ts);
    g.label = subjects.labels[k];

    const Eigen::Index edges = (g.adjacency.array() != 0.0).count() / 2;
    std::cerr << "build: " << id << " label " << g.label << " nodes " << g.nodes()
              << " edges " << edges << "\n";
    if (edges == 0) isolated.push_back(id);

    if (opt.dump_spectrum) {
      const Eigen::MatrixXd laplacian = normalized_laplacian(g.adjacency);
      const EighResult eig = symmetric_eigh(laplacian);
      std::string dump;
      for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        if (i > 0) dump.push_back(',');
        dump += io::format_double(eig.values(i));
      }
      dump.push_back('\n');
      for (Eigen::Index i = 0; i < eig.vectors.rows(); ++i) {
        for (Eigen::Index j = 0; j < eig.vectors.cols(); ++j) {
          if (j > 0) dump.push_back(',');
          dump += io::format_double(eig.vectors(i, j));
        }
        dump.push_back('\n');
      }
      io::write_file(*opt.dump_spectrum / (id + "_spectrum.csv"), dump);
    }

    d.graphs.push_back(std::move(g));
    d.ids.push_back(id);
  }

  if (!isolated.empty()) {
    std::cerr << "warning: " << isolated.size()
              << " graph(s) have no edges at threshold " << io::format_double(opt.threshold) << ":";
    for (const std::string& id : isolated) std::cerr << " " << id;
    std::cerr << "\n";
  }
  save_dataset(d, opt.out);
  std::cerr << "build: wrote dataset with " << d.graphs.size() << " graphs to "
            << opt.out.string() << "\n";
}

namespace {

std::string history_csv(const RunResult& res) {
  std::string out = "epoch,train_loss,val_acc\n";
  for (const EpochStats& e : res.history) {
    out += std::to_string(e.epoch) + "," + io::format_double(e.train_loss) + "," +
           io::format_double(e.val_accuracy) + "\n";
  }
  return out;
}

json mean_std_json(const MeanStd& ms) { return {{"mean", ms.mean}, {"std", ms.std}}; }

}  // namespace

void cmd_train(const TrainOptions& opt) {
  const Dataset data = load_dataset(opt.data);
  TrainConfig cfg;
  cfg.seed = default_seed();
  if (opt.config) cfg = load_train_config(*opt.config, default_seed());
  if (opt.runs) cfg.runs = *opt.runs;
  cfg.validate();
  ensure_output_dir(opt.out, opt.force);

  BasisCache cache;
  const RunStats stats = repeated_runs(data, cfg, cache, opt.jobs);

  for (int r = 0; r < stats.runs; ++r) {
    if (!stats.results[r]) continue;
    const RunResult& res = *stats.results[r];
    const std::filesystem::path run_dir = opt.out / ("run_" + std::to_string(r));
    std::filesystem::create_directories(run_dir);
    save_model(res.snapshot, run_dir / "model.json");
    io::write_file(run_dir / "history.csv", history_csv(res));
    std::cerr << "train: run " << r << " best val acc " << res.best_val_accuracy
              << " (epoch " << res.epoch_of_best << "), test acc " << res.test.accuracy << "\n";
  }

  json summary;
  summary["config"] = json::parse(train_config_json(cfg));
  summary["runs"] = stats.runs;
  summary["succeeded"] = static_cast<int>(stats.accuracies.size());
  json failed = json::array();
  for (const auto& [run, message] : stats.failures) {
    failed.push_back({{"run", run}, {"error", message}});
    std::cerr << "train: run " << run << " FAILED: " << message << "\n";
  }
  summary["failed"] = std::move(failed);
  summary["single_run_flag"] = stats.single_run;
  summary["metrics"] = {{"accuracy", mean_std_json(stats.accuracy)},
                        {"precision", mean_std_json(stats.precision)},
                        {"recall", mean_std_json(stats.recall)},
                        {"f1", mean_std_json(stats.f1)}};
  json per_run;
  per_run["accuracy"] = stats.accuracies;
  per_run["precision"] = stats.precisions;
  per_run["recall"] = stats.recalls;
  per_run["f1"] = stats.f1s;
  json best_val = json::array(), best_epoch = json::array();
  for (const auto& res : stats.results) {
    if (!res) continue;
    best_val.push_back(res->best_val_accuracy);
    best_epoch.push_back(res->epoch_of_best);
  }
  per_run["best_val_accuracy"] = std::move(best_val);
  per_run["epoch_of_best"] = std::move(best_epoch);
  summary["per_run"] = std::move(per_run);
  io::write_file(opt.out / "summary.json", summary.dump(2) + "\n");

  if (stats.accuracies.empty()) {
    throw NumericalError("all " + std::to_string(stats.runs) + " runs failed");
  }
}

void cmd_eval(const EvalOptions& opt) {
  const ModelParams params = load_model(opt.model);
  const Dataset data = load_dataset(opt.data);
  if (params.dims.f_in != data.feature_dim()) {
    throw ValidationError("feature width " + std::to_string(params.dims.f_in) + " \xE2\x89\xA0 " +
                          std::to_string(data.feature_dim()));
  }
  if (params.dims.n_classes != data.classes()) {
    throw ValidationError("model classes " + std::to_string(params.dims.n_classes) + " \xE2\x89\xA0 " +
                          std::to_string(data.classes()));
  }
  const SplitIndices split = split_dataset(data, opt.split_ratios, opt.split_seed);
  ensure_output_dir(opt.out, opt.force);

  BasisCache cache;
  std::vector<int> preds, labels;
  std::string attention = "graph,node_index,weight\n";
  for (const int idx : split.test) {
    const Graph& g = data.graphs[idx];
    const EvalForward ev = eval_forward(g, params, cache);
    Eigen::Index pred = 0;
    ev.logits.maxCoeff(&pred);
    preds.push_back(static_cast<int>(pred));
    labels.push_back(g.label);
    for (Eigen::Index i = 0; i < ev.attention_weights.size(); ++i) {
      attention += data.ids[idx] + "," + std::to_string(i) + "," +
                   io::format_double(ev.attention_weights(i)) + "\n";
    }
  }

  const ConfusionMatrix cm = confusion(preds, labels, data.classes());
  const MetricsReport rep = report(cm);
  io::write_file(opt.out / "metrics.json", metrics_json(rep));
  io::write_file(opt.out / "confusion.csv", confusion_csv(cm, data.class_names));
  io::write_file(opt.out / "attention.csv", attention);
  std::cerr << "eval: accuracy " << rep.accuracy << " over " << split.test.size()
            << " test graphs\n";
}

void cmd_report(const ReportOptions& opt, std::ostream& out) {
  const json summary = json::parse(io::read_file(opt.runs / "summary.json"));
  out << "runs: " << opt.runs.string() << "\n";
  out << "metric      mean        std\n";
  for (const char* metric : {"accuracy", "precision", "recall", "f1"}) {
    const json& ms = summary.at("metrics").at(metric);
    char line[96];
    std::snprintf(line, sizeof(line), "%-10s  %.6f    %.6f\n", metric,
                  ms.at("mean").get<double>(), ms.at("std").get<double>());
    out << line;
  }
  if (!opt.ttest) return;

  const json other = json::parse(io::read_file(*opt.ttest / "summary.json"));
  const auto a = summary.at("per_run").at("accuracy").get<std::vector<double>>();
  const auto b = other.at("per_run").at("accuracy").get<std::vector<double>>();
  if (a.size() != b.size()) {
    throw ValidationError("pairing undefined: " + std::to_string(a.size()) + " runs vs " +
                          std::to_string(b.size()));
  }
  const TTestResult t = paired_t_test(a, b, opt.one_sided);
  out << "paired t-test (" << (opt.one_sided ? "one-sided" : "two-sided") << ") vs "
      << opt.ttest->string() << ": t = " << io::format_double(t.t_statistic)
      << ", df = " << t.degrees_of_freedom << ", p = " << io::format_double(t.p_value) << "\n";
}

double cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out) {
  if (opt.nodes < 3 || opt.nodes > 16) {
    throw ConfigError("gradcheck nodes must lie in [3,16], got " + std::to_string(opt.nodes));
  }
  const double err = gradient_check(opt.seed, opt.nodes);
  char line[96];
  std::snprintf(line, sizeof(line), "gradcheck: max rel err = %.6e, %s\n", err,
                err < 1e-4 ? "PASS" : "FAIL");
  out << line;
  return err;
}

}  // namespace sbgnn::cli
