#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "sbgnn/dataset.hpp"

namespace sbgnn::cli {

// Fallback default seed: SBGNN_SEED environment variable, else 42.
std::uint64_t default_seed();

// Refuses a non-empty existing directory unless `force`; creates it otherwise.
void ensure_output_dir(const std::filesystem::path& dir, bool force);

struct SynthOptions {
  int classes = 2;
  int graphs_per_class = 10;
  int nodes = 30;
  int timesteps = 128;
  double rho_in = 0.7;
  double rho_out = 0.1;
  std::uint64_t seed = 42;
  std::filesystem::path out;
  bool force = false;
};
// Writes subject_<id>_ts.csv files plus labels.csv ("id,label" header).
void cmd_synth(const SynthOptions& opt);

struct BuildOptions {
  std::filesystem::path ts_dir;
  double threshold = 0.3;
  std::string features = "corr-row";
  std::filesystem::path out;
  bool force = false;
  std::optional<std::filesystem::path> dump_spectrum;
};
// Pearson + threshold per subject; writes the dataset directory format.
void cmd_build(const BuildOptions& opt);

struct TrainOptions {
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  std::optional<int> runs;
  std::filesystem::path out;
  bool force = false;
  int jobs = 1;
};
// Repeated runs; writes run_<r>/model.json, run_<r>/history.csv, summary.json.
// Throws NumericalError after writing the summary if every run failed.
void cmd_train(const TrainOptions& opt);

struct EvalOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::uint64_t split_seed = 42;
  std::array<double, 3> split_ratios = kDefaultSplitRatios;
  std::filesystem::path out;
  bool force = false;
};
// Eval-mode inference over the test split; writes metrics.json,
// confusion.csv and attention.csv.
void cmd_eval(const EvalOptions& opt);

struct ReportOptions {
  std::filesystem::path runs;
  std::optional<std::filesystem::path> ttest;
  bool one_sided = false;
};
// Prints the mean +/- std table (and the paired t-test when comparing).
void cmd_report(const ReportOptions& opt, std::ostream& out);

struct GradcheckOptions {
  std::uint64_t seed = 42;
  int nodes = 6;
};
// Prints the max relative error and PASS/FAIL; returns the error value.
double cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out);

}  // namespace sbgnn::cli
