#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sbgnn/cli.hpp"

namespace cli = sbgnn::cli;

int main(int argc, char** argv) {
  CLI::App app{"sbgnn: spectral graph neural networks for functional connectomes"};
  app.require_subcommand(1);

  cli::SynthOptions synth;
  synth.seed = cli::default_seed();
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic ROI time-series");
  synth_cmd->add_option("--classes", synth.classes, "number of classes")->capture_default_str();
  synth_cmd->add_option("--graphs-per-class", synth.graphs_per_class, "subjects per class")
      ->capture_default_str();
  synth_cmd->add_option("--nodes", synth.nodes, "ROIs per subject (divisible by 3)")
      ->capture_default_str();
  synth_cmd->add_option("--timesteps", synth.timesteps, "timepoints per subject")
      ->capture_default_str();
  synth_cmd->add_option("--rho-in", synth.rho_in, "within-community correlation")
      ->capture_default_str();
  synth_cmd->add_option("--rho-out", synth.rho_out, "cross-community correlation")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "rng seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_flag("--force", synth.force, "write into a non-empty directory");

  cli::BuildOptions build;
  CLI::App* build_cmd = app.add_subcommand("build", "build connectivity graphs from time-series");
  build_cmd->add_option("--ts-dir", build.ts_dir, "directory with labels.csv and *_ts.csv")
      ->required();
  build_cmd->add_option("--threshold", build.threshold, "correlation threshold tau in (0,1)")
      ->capture_default_str();
  build_cmd->add_option("--features", build.features, "node features: corr-row | timeseries")
      ->capture_default_str();
  build_cmd->add_option("--out", build.out, "output dataset directory")->required();
  build_cmd->add_flag("--force", build.force, "write into a non-empty directory");
  std::string dump_spectrum;
  build_cmd->add_option("--dump-spectrum", dump_spectrum,
                        "also dump each graph's eigenvalues and eigenvectors to this directory");

  cli::TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train over repeated runs");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  std::string config_path;
  train_cmd->add_option("--config", config_path, "training config JSON");
  int runs_override = 0;
  CLI::Option* runs_opt = train_cmd->add_option("--runs", runs_override, "override run count");
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--jobs", train.jobs, "parallel runs")->capture_default_str();
  train_cmd->add_flag("--force", train.force, "write into a non-empty directory");

  cli::EvalOptions eval;
  eval.split_seed = cli::default_seed();
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on the test split");
  eval_cmd->add_option("--model", eval.model, "model JSON path")->required();
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--split-seed", eval.split_seed, "seed that defines the 60/20/20 split")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_flag("--force", eval.force, "write into a non-empty directory");

  cli::ReportOptions report;
  CLI::App* report_cmd = app.add_subcommand("report", "summarize runs and compare with a t-test");
  report_cmd->add_option("--runs", report.runs, "run directory with summary.json")->required();
  std::string ttest_path;
  report_cmd->add_option("--ttest", ttest_path, "second run directory to compare against");
  report_cmd->add_flag("--one-sided", report.one_sided, "one-sided t-test");

  cli::GradcheckOptions gradcheck;
  gradcheck.seed = cli::default_seed();
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "rng seed")->capture_default_str();
  gradcheck_cmd->add_option("--nodes", gradcheck.nodes, "graph size in [3,16]")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*synth_cmd) {
      cli::cmd_synth(synth);
    } else if (*build_cmd) {
      if (!dump_spectrum.empty()) build.dump_spectrum = dump_spectrum;
      cli::cmd_build(build);
    } else if (*train_cmd) {
      if (!config_path.empty()) train.config = config_path;
      if (runs_opt->count() > 0) train.runs = runs_override;
      cli::cmd_train(train);
    } else if (*eval_cmd) {
      cli::cmd_eval(eval);
    } else if (*report_cmd) {
      if (!ttest_path.empty()) report.ttest = ttest_path;
      cli::cmd_report(report, std::cout);
    } else if (*gradcheck_cmd) {
      const double err = cli::cmd_gradcheck(gradcheck, std::cout);
      return err < 1e-4 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
