#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sbgnn {

// N ROI time-series of T samples each, one row per ROI.
struct TimeSeriesMatrix {
  Eigen::MatrixXd values;  // N x T

  Eigen::Index rois() const { return values.rows(); }
  Eigen::Index timepoints() const { return values.cols(); }
};

// Pairwise Pearson correlations: exactly symmetric, unit diagonal,
// every entry in [-1, 1].
struct ConnectivityMatrix {
  Eigen::MatrixXd values;  // N x N

  Eigen::Index size() const { return values.rows(); }
};

enum class FeatureMode {
  kCorrRow,     // node i's feature = row i of the connectivity matrix (F = N)
  kTimeseries,  // node features = the raw time-series (F = T)
};

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& name);

// One sample: weighted undirected graph with node features and a class label.
struct Graph {
  Eigen::MatrixXd adjacency;  // N x N, symmetric, zero diagonal
  Eigen::MatrixXd features;   // N x F
  int label = 0;

  Eigen::Index nodes() const { return adjacency.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
};

struct Dataset {
  std::vector<Graph> graphs;
  std::vector<std::string> ids;  // parallel to graphs
  std::vector<std::string> class_names;
  FeatureMode feature_mode = FeatureMode::kCorrRow;
  std::string provenance;

  int classes() const { return static_cast<int>(class_names.size()); }
  Eigen::Index feature_dim() const {
    return graphs.empty() ? 0 : graphs.front().feature_dim();
  }
};

// Parameters of the synthetic factor-model generator.
struct SyntheticSpec {
  int n_classes = 2;
  int graphs_per_class = 10;
  int n_rois = 30;        // must be divisible by 3 (community count)
  int n_timepoints = 128;
  double rho_in = 0.7;    // expected within-community correlation, in (0, 1)
  double rho_out = 0.1;   // expected cross-community correlation, in [0, rho_in)
  std::uint64_t seed = 0;
};

void validate_synthetic_spec(const SyntheticSpec& spec);

struct SyntheticOutput {
  std::vector<std::string> ids;           // "subject_000", ...
  std::vector<TimeSeriesMatrix> series;   // parallel to ids
  std::vector<int> labels;                // parallel to ids
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

inline constexpr std::array<double, 3> kDefaultSplitRatios{0.6, 0.2, 0.2};

// Loads an N x T CSV (no header). Rejects ragged rows, non-numeric cells,
// fewer than 2 rows or 3 columns, and constant (zero-variance) rows.
TimeSeriesMatrix load_timeseries(const std::filesystem::path& path);

// Sample Pearson correlation of every ROI pair. The upper triangle is
// computed and mirrored, so the result is exactly symmetric.
ConnectivityMatrix pearson_matrix(const TimeSeriesMatrix& ts);

// Keeps correlations strictly above tau (tau in (0,1)) as edge weights,
// zeroes the diagonal, and attaches node features per `mode`.
Graph threshold_graph(const ConnectivityMatrix& c, double tau, FeatureMode mode,
                      const TimeSeriesMatrix& ts);

// Draws per-subject time-series from a 3-community factor model with a
// class-dependent community assignment. Bit-reproducible per seed.
SyntheticOutput generate_synthetic(const SyntheticSpec& spec);

// Disjoint, exhaustive shuffled split with sizes
// floor(r0*n) / floor(r1*n) / remainder. Requires n >= 5.
SplitIndices split_dataset(const Dataset& d, const std::array<double, 3>& ratios,
                           std::uint64_t seed);

// On-disk layout: manifest.json plus per-graph <id>_adj.csv (one "i,j,w" line
// per undirected edge, 0-based, i < j) and <id>_x.csv (N x F). Doubles are
// written with 17 significant digits so load(save(d)) reproduces d exactly.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace sbgnn
