#include "sbgnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"
#include "sbgnn/rng.hpp"

namespace sbgnn {

using nlohmann::json;

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::kCorrRow ? "corr-row" : "timeseries";
}

FeatureMode feature_mode_from_string(const std::string& name) {
  if (name == "corr-row") return FeatureMode::kCorrRow;
  if (name == "timeseries") return FeatureMode::kTimeseries;
  throw ConfigError("unknown feature mode '" + name + "' (expected corr-row or timeseries)");
}

namespace {

void validate_timeseries(const Eigen::MatrixXd& values) {
  if (values.rows() < 2) {
    throw ValidationError("time-series needs at least 2 ROI rows, got " +
                          std::to_string(values.rows()));
  }
  if (values.cols() < 3) {
    throw ValidationError("time-series needs at least 3 timepoints, got " +
                          std::to_string(values.cols()));
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (values.row(i).maxCoeff() == values.row(i).minCoeff()) {
      throw ValidationError("constant ROI row " + std::to_string(i));
    }
  }
}

}  // namespace

TimeSeriesMatrix load_timeseries(const std::filesystem::path& path) {
  TimeSeriesMatrix ts{io::read_csv_matrix(path)};
  validate_timeseries(ts.values);
  return ts;
}

ConnectivityMatrix pearson_matrix(const TimeSeriesMatrix& ts) {
  const Eigen::MatrixXd& x = ts.values;
  const Eigen::Index n = x.rows();

  Eigen::MatrixXd centered = x;
  centered.colwise() -= x.rowwise().mean();
  const Eigen::VectorXd norms = centered.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) == 0.0) {
      throw ValidationError("zero-variance ROI row " + std::to_string(i));
    }
  }

  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double rho = centered.row(i).dot(centered.row(j)) / (norms(i) * norms(j));
      rho = std::clamp(rho, -1.0, 1.0);
      c(i, j) = rho;
      c(j, i) = rho;  // mirror, exact symmetry
    }
  }
  return ConnectivityMatrix{std::move(c)};
}

Graph threshold_graph(const ConnectivityMatrix& c, double tau, FeatureMode mode,
                      const TimeSeriesMatrix& ts) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("threshold tau must lie in (0,1), got " + io::format_double(tau));
  }
  const Eigen::Index n = c.size();

  Graph g;
  g.adjacency = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (c.values(i, j) > tau) {
        g.adjacency(i, j) = c.values(i, j);
        g.adjacency(j, i) = c.values(i, j);
      }
    }
  }

  if (mode == FeatureMode::kCorrRow) {
    g.features = c.values;  // row i of C, diagonal kept, F = N
  } else {
    if (ts.rois() != n) {
      throw ValidationError("time-series rows (" + std::to_string(ts.rois()) +
                            ") do not match connectivity size (" + std::to_string(n) + ")");
    }
    g.features = ts.values;  // F = T
  }
  return g;
}

void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ValidationError("synthetic spec needs at least 2 classes");
  if (spec.graphs_per_class < 1) throw ValidationError("graphs_per_class must be >= 1");
  if (spec.n_rois < 2) throw ValidationError("n_rois must be >= 2");
  if (spec.n_timepoints < 3) throw ValidationError("n_timepoints must be >= 3");
  if (spec.n_rois % 3 != 0) {
    throw ValidationError("n_rois must be divisible by 3 (community count), got " +
                          std::to_string(spec.n_rois));
  }
  if (!(spec.rho_in > 0.0 && spec.rho_in < 1.0)) {
    throw ValidationError("rho_in must lie in (0,1), got " + io::format_double(spec.rho_in));
  }
  if (!(spec.rho_out >= 0.0 && spec.rho_out < spec.rho_in)) {
    throw ValidationError("rho_out must lie in [0, rho_in), got " +
                          io::format_double(spec.rho_out));
  }
}

SyntheticOutput generate_synthetic(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);

  const int n = spec.n_rois;
  const int t = spec.n_timepoints;
  const int community_size = n / 3;
  // Distinct community partitions per class: class c rotates the three
  // contiguous blocks by c*stride node positions. A stride equal to a
  // multiple of the block size would merely relabel communities, so the
  // stride is one C-th of a block (at least 1).
  const int stride = std::max(1, n / (3 * spec.n_classes));

  // Mixing weights: with shared global factor g0, community factor f_c and
  // node noise e_i (all i.i.d. standard normal),
  //   factor_c = sqrt(rho_out/rho_in) * g0 + sqrt(1 - rho_out/rho_in) * f_c
  //   x_i      = sqrt(rho_in) * factor_{community(i)} + sqrt(1 - rho_in) * e_i
  // gives unit variance, within-community correlation rho_in and
  // cross-community correlation rho_in * (rho_out/rho_in) = rho_out.
  const double global_w = std::sqrt(spec.rho_out / spec.rho_in);
  const double community_w = std::sqrt(1.0 - spec.rho_out / spec.rho_in);
  const double signal_w = std::sqrt(spec.rho_in);
  const double noise_w = std::sqrt(1.0 - spec.rho_in);

  Rng rng(spec.seed);
  SyntheticOutput out;
  const int total = spec.n_classes * spec.graphs_per_class;
  out.ids.reserve(total);
  out.series.reserve(total);
  out.labels.reserve(total);

  int subject = 0;
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    const int shift = cls * stride;
    for (int rep = 0; rep < spec.graphs_per_class; ++rep, ++subject) {
      Eigen::VectorXd global(t);
      for (int k = 0; k < t; ++k) global(k) = rng.normal();
      Eigen::MatrixXd community(3, t);
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < t; ++k) community(c, k) = rng.normal();

      Eigen::MatrixXd x(n, t);
      for (int i = 0; i < n; ++i) {
        const int comm = ((i + shift) % n) / community_size;
        for (int k = 0; k < t; ++k) {
          const double factor = global_w * global(k) + community_w * community(comm, k);
          x(i, k) = signal_w * factor + noise_w * rng.normal();
        }
      }

      char id[32];
      std::snprintf(id, sizeof(id), "subject_%03d", subject);
      out.ids.emplace_back(id);
      out.series.push_back(TimeSeriesMatrix{std::move(x)});
      out.labels.push_back(cls);
    }
  }
  return out;
}

SplitIndices split_dataset(const Dataset& d, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  const int n = static_cast<int>(d.graphs.size());
  if (n < 5) {
    throw ValidationError("dataset too small to split: " + std::to_string(n) +
                          " graphs (need at least 5)");
  }
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + io::format_double(sum));
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const int n_train = static_cast<int>(std::floor(ratios[0] * n));
  const int n_val = static_cast<int>(std::floor(ratios[1] * n));
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  if (d.classes() < 2) throw ValidationError("dataset needs at least 2 classes");
  if (d.ids.size() != d.graphs.size()) {
    throw ValidationError("dataset ids do not match graph count");
  }
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["classes"] = d.class_names;
  manifest["feature_mode"] = to_string(d.feature_mode);
  manifest["provenance"] = d.provenance;
  json entries = json::array();

  for (std::size_t k = 0; k < d.graphs.size(); ++k) {
    const Graph& g = d.graphs[k];
    if (g.label < 0 || g.label >= d.classes()) {
      throw ValidationError("graph " + d.ids[k] + " label " + std::to_string(g.label) +
                            " out of range for " + std::to_string(d.classes()) + " classes");
    }
    const std::string adj_name = d.ids[k] + "_adj.csv";
    const std::string x_name = d.ids[k] + "_x.csv";

    std::string adj;
    for (Eigen::Index i = 0; i < g.nodes(); ++i) {
      for (Eigen::Index j = i + 1; j < g.nodes(); ++j) {
        if (g.adjacency(i, j) != 0.0) {
          adj += std::to_string(i) + "," + std::to_string(j) + "," +
                 io::format_double(g.adjacency(i, j)) + "\n";
        }
      }
    }
    io::write_file(dir / adj_name, adj);
    io::write_csv_matrix(dir / x_name, g.features);

    entries.push_back({{"id", d.ids[k]},
                       {"label", g.label},
                       {"adj", adj_name},
                       {"x", x_name}});
  }
  manifest["graphs"] = std::move(entries);
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw FormatError("invalid manifest.json in " + dir.string() + ": " + e.what());
  }

  Dataset d;
  try {
    d.class_names = manifest.at("classes").get<std::vector<std::string>>();
    d.feature_mode = feature_mode_from_string(manifest.at("feature_mode").get<std::string>());
    d.provenance = manifest.value("provenance", std::string{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (d.classes() < 2) throw ValidationError("manifest declares fewer than 2 classes");
  if (!manifest.contains("graphs") || !manifest["graphs"].is_array()) {
    throw FormatError("manifest missing 'graphs' array");
  }

  for (const json& entry : manifest["graphs"]) {
    std::string id, adj_name, x_name;
    int label = 0;
    try {
      id = entry.at("id").get<std::string>();
      label = entry.at("label").get<int>();
      adj_name = entry.at("adj").get<std::string>();
      x_name = entry.at("x").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed graph entry: ") + e.what());
    }
    if (label < 0 || label >= d.classes()) {
      throw ValidationError("label " + std::to_string(label) + " for graph " + id +
                            " out of range (valid 0-" + std::to_string(d.classes() - 1) + ")");
    }

    Graph g;
    g.label = label;
    g.features = io::read_csv_matrix(dir / x_name);
    const Eigen::Index n = g.features.rows();
    g.adjacency = Eigen::MatrixXd::Zero(n, n);
    for (const std::string& line : io::read_lines(dir / adj_name)) {
      const std::vector<std::string> cells = io::split(line, ',');
      if (cells.size() != 3) throw FormatError("malformed edge line '" + line + "' in " + adj_name);
      const long i = io::parse_long(cells[0], adj_name);
      const long j = io::parse_long(cells[1], adj_name);
      const double w = io::parse_double(cells[2], adj_name);
      if (i < 0 || j < 0 || i >= n || j >= n || i >= j) {
        throw FormatError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                          ") out of range in " + adj_name);
      }
      g.adjacency(i, j) = w;
      g.adjacency(j, i) = w;
    }

    if (!d.graphs.empty() && g.feature_dim() != d.graphs.front().feature_dim()) {
      throw ValidationError("graph " + id + " feature dim " + std::to_string(g.feature_dim()) +
                            " differs from dataset feature dim " +
                            std::to_string(d.graphs.front().feature_dim()));
    }
    d.graphs.push_back(std::move(g));
    d.ids.push_back(std::move(id));
  }
  return d;
}

}  // namespace sbgnn
