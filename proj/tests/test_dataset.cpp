#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sbgnn/dataset.hpp"
#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"
#include "sbgnn/rng.hpp"
#include "test_util.hpp"

using namespace sbgnn;

namespace {

TimeSeriesMatrix ts_from(std::initializer_list<std::initializer_list<double>> rows) {
  TimeSeriesMatrix ts;
  ts.values.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (const double v : row) ts.values(i, j++) = v;
    ++i;
  }
  return ts;
}

// Independent Pearson oracle: direct covariance / variance loops.
double pearson_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.size();
  double mx = 0, my = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    mx += x(i);
    my += y(i);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0, vx = 0, vy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cov += (x(i) - mx) * (y(i) - my);
    vx += (x(i) - mx) * (x(i) - mx);
    vy += (y(i) - my) * (y(i) - my);
  }
  const double dn = static_cast<double>(n);
  return (cov / dn) / (std::sqrt(vx / dn) * std::sqrt(vy / dn));
}

Eigen::MatrixXd random_timeseries(Eigen::Index n, Eigen::Index t, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, t);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < t; ++j) m(i, j) = rng.normal();
  return m;
}

Dataset small_dataset() {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.graphs_per_class = 3;
  spec.n_rois = 6;
  spec.n_timepoints = 24;
  spec.seed = 5;
  const SyntheticOutput gen = generate_synthetic(spec);
  Dataset d;
  d.class_names = {"class_0", "class_1"};
  d.provenance = "synthetic seed 5";
  for (std::size_t k = 0; k < gen.ids.size(); ++k) {
    const ConnectivityMatrix c = pearson_matrix(gen.series[k]);
    Graph g = threshold_graph(c, 0.3, FeatureMode::kCorrRow, gen.series[k]);
    g.label = gen.labels[k];
    d.graphs.push_back(std::move(g));
    d.ids.push_back(gen.ids[k]);
  }
  return d;
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("load_timeseries parses a rectangular CSV") {
  TempDir dir;
  io::write_file(dir.path / "ts.csv", "1,2,3,4\n4,3,2,1\n1,3,2,4\n");
  const TimeSeriesMatrix ts = load_timeseries(dir.path / "ts.csv");
  CHECK(ts.rois() == 3);
  CHECK(ts.timepoints() == 4);
  CHECK(ts.values(0, 0) == 1.0);
  CHECK(ts.values(2, 3) == 4.0);
}

TEST_CASE("load_timeseries rejects a constant row naming the ROI") {
  TempDir dir;
  io::write_file(dir.path / "ts.csv", "5,5,5,5\n1,2,3,4\n");
  CHECK_THROWS_WITH_AS(load_timeseries(dir.path / "ts.csv"), "constant ROI row 0",
                       ValidationError);
}

TEST_CASE("load_timeseries rejects ragged and non-numeric input") {
  TempDir dir;
  io::write_file(dir.path / "ragged.csv", "1,2,3\n4,5,6\n1,2\n");
  CHECK_THROWS_WITH_AS(load_timeseries(dir.path / "ragged.csv"), doctest::Contains("row 2"),
                       FormatError);

  io::write_file(dir.path / "bad.csv", "1,2,3\n4,x,6\n");
  CHECK_THROWS_WITH_AS(load_timeseries(dir.path / "bad.csv"),
                       doctest::Contains("row 1 col 1"), ParseError);
}

TEST_CASE("pearson handles perfect linear relations") {
  const ConnectivityMatrix c = pearson_matrix(ts_from({{1, 2, 3}, {2, 4, 6}}));
  CHECK(std::abs(c.values(0, 1) - 1.0) <= 1e-15);
  CHECK(c.values(0, 1) <= 1.0);

  const ConnectivityMatrix anti = pearson_matrix(ts_from({{1, 2, 3}, {3, 2, 1}}));
  CHECK(std::abs(anti.values(0, 1) + 1.0) <= 1e-15);
}

TEST_CASE("pearson matches the brute-force oracle") {
  const TimeSeriesMatrix ts = ts_from({{1, 2, 3, 4}, {1, 3, 2, 4}});
  const double expected = pearson_oracle(ts.values.row(0), ts.values.row(1));
  CHECK(expected == doctest::Approx(0.8).epsilon(1e-12));  // frozen from the oracle
  const ConnectivityMatrix c = pearson_matrix(ts);
  CHECK(std::abs(c.values(0, 1) - expected) <= 1e-14);

  const TimeSeriesMatrix random{random_timeseries(4, 25, 3)};
  const ConnectivityMatrix cr = pearson_matrix(random);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = i + 1; j < 4; ++j) {
      CHECK(std::abs(cr.values(i, j) -
                     pearson_oracle(random.values.row(i), random.values.row(j))) < 1e-13);
    }
  }
}

TEST_CASE("pearson output is exactly symmetric with unit diagonal and bounded entries") {
  TimeSeriesMatrix ts{random_timeseries(6, 50, 11)};
  const ConnectivityMatrix c = pearson_matrix(ts);
  for (Eigen::Index i = 0; i < 6; ++i) {
    CHECK(c.values(i, i) == 1.0);
    for (Eigen::Index j = 0; j < 6; ++j) {
      CHECK(c.values(i, j) == c.values(j, i));  // mirrored, so exact
      CHECK(std::abs(c.values(i, j)) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("pearson is invariant under positive affine row transforms") {
  TimeSeriesMatrix ts{random_timeseries(5, 40, 12)};
  const ConnectivityMatrix before = pearson_matrix(ts);
  Rng rng(13);
  TimeSeriesMatrix scaled = ts;
  for (Eigen::Index i = 0; i < scaled.rois(); ++i) {
    const double a = rng.uniform(0.1, 5.0);
    const double b = rng.uniform(-10.0, 10.0);
    scaled.values.row(i) = (a * scaled.values.row(i)).array() + b;
  }
  const ConnectivityMatrix after = pearson_matrix(scaled);
  CHECK(max_abs_diff(before.values, after.values) < 1e-12);
}

TEST_CASE("pearson rejects zero-variance rows") {
  TimeSeriesMatrix ts = ts_from({{1, 1, 1}, {1, 2, 3}});
  CHECK_THROWS_AS(pearson_matrix(ts), ValidationError);
}

TEST_CASE("threshold keeps strong edges and zeroes the diagonal") {
  ConnectivityMatrix c;
  c.values.resize(2, 2);
  c.values << 1, 0.9, 0.9, 1;
  const TimeSeriesMatrix ts = ts_from({{1, 2, 3}, {2, 4, 7}});
  const Graph g = threshold_graph(c, 0.5, FeatureMode::kCorrRow, ts);
  CHECK(g.adjacency(0, 0) == 0.0);
  CHECK(g.adjacency(1, 1) == 0.0);
  CHECK(g.adjacency(0, 1) == 0.9);
  CHECK(g.adjacency(1, 0) == 0.9);

  c.values << 1, 0.2, 0.2, 1;
  const Graph empty = threshold_graph(c, 0.5, FeatureMode::kCorrRow, ts);
  CHECK(empty.adjacency.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("threshold keeps exactly the pairs above tau") {
  // Off-diagonals 0.6, 0.4, 0.7 at tau 0.5: the surviving undirected edges
  // are (0,1) with weight 0.6 and (1,2) with weight 0.7.
  ConnectivityMatrix c;
  c.values.resize(3, 3);
  c.values << 1, 0.6, 0.4, 0.6, 1, 0.7, 0.4, 0.7, 1;
  const TimeSeriesMatrix ts = ts_from({{1, 2, 3}, {2, 4, 7}, {3, 1, 2}});
  const Graph g = threshold_graph(c, 0.5, FeatureMode::kCorrRow, ts);
  CHECK((g.adjacency.array() != 0.0).count() == 4);  // 2 undirected edges
  CHECK(g.adjacency(0, 1) == 0.6);
  CHECK(g.adjacency(1, 2) == 0.7);
  CHECK(g.adjacency(0, 2) == 0.0);
}

TEST_CASE("threshold feature modes set the feature width") {
  TimeSeriesMatrix ts{random_timeseries(4, 10, 21)};
  const ConnectivityMatrix c = pearson_matrix(ts);
  const Graph corr = threshold_graph(c, 0.3, FeatureMode::kCorrRow, ts);
  CHECK(corr.feature_dim() == 4);
  CHECK(max_abs_diff(corr.features, c.values) == 0.0);
  CHECK(corr.features(2, 2) == 1.0);  // diagonal kept in corr-row features

  const Graph raw = threshold_graph(c, 0.3, FeatureMode::kTimeseries, ts);
  CHECK(raw.feature_dim() == 10);
  CHECK(max_abs_diff(raw.features, ts.values) == 0.0);
}

TEST_CASE("threshold edge sets shrink monotonically in tau") {
  TimeSeriesMatrix ts{random_timeseries(8, 30, 31)};
  const ConnectivityMatrix c = pearson_matrix(ts);
  const Graph loose = threshold_graph(c, 0.2, FeatureMode::kCorrRow, ts);
  const Graph tight = threshold_graph(c, 0.6, FeatureMode::kCorrRow, ts);
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) {
      if (tight.adjacency(i, j) != 0.0) CHECK(loose.adjacency(i, j) != 0.0);
      CHECK(tight.adjacency(i, j) == tight.adjacency(j, i));
    }
  }
}

TEST_CASE("threshold validates tau") {
  ConnectivityMatrix c;
  c.values = Eigen::MatrixXd::Identity(2, 2);
  const TimeSeriesMatrix ts = ts_from({{1, 2, 3}, {2, 4, 7}});
  CHECK_THROWS_AS(threshold_graph(c, 0.0, FeatureMode::kCorrRow, ts), ConfigError);
  CHECK_THROWS_AS(threshold_graph(c, 1.0, FeatureMode::kCorrRow, ts), ConfigError);
  CHECK_THROWS_AS(threshold_graph(c, -0.3, FeatureMode::kCorrRow, ts), ConfigError);
}

TEST_CASE("synthetic generator is deterministic per seed") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.graphs_per_class = 2;
  spec.n_rois = 6;
  spec.n_timepoints = 16;
  spec.seed = 99;
  const SyntheticOutput a = generate_synthetic(spec);
  const SyntheticOutput b = generate_synthetic(spec);
  REQUIRE(a.ids == b.ids);
  REQUIRE(a.labels == b.labels);
  for (std::size_t k = 0; k < a.series.size(); ++k) {
    CHECK(max_abs_diff(a.series[k].values, b.series[k].values) == 0.0);
  }
}

TEST_CASE("synthetic generator validates its spec") {
  SyntheticSpec spec;
  spec.rho_in = 0.5;
  spec.rho_out = 0.5;
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
  spec.rho_out = 0.6;
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
  spec.rho_out = 0.1;
  spec.rho_in = 0.7;
  spec.n_rois = 20;  // not divisible by 3
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
}

TEST_CASE("synthetic within-community correlations concentrate near rho_in") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.graphs_per_class = 1;
  spec.n_rois = 6;
  spec.n_timepoints = 4096;
  spec.rho_in = 0.7;
  spec.rho_out = 0.1;
  spec.seed = 7;
  const SyntheticOutput out = generate_synthetic(spec);

  const int community_size = spec.n_rois / 3;
  const int stride = std::max(1, spec.n_rois / (3 * spec.n_classes));
  int within = 0, inside_band = 0;
  for (std::size_t k = 0; k < out.series.size(); ++k) {
    const ConnectivityMatrix c = pearson_matrix(out.series[k]);
    const int shift = out.labels[k] * stride;
    for (int i = 0; i < spec.n_rois; ++i) {
      for (int j = i + 1; j < spec.n_rois; ++j) {
        const int ci = ((i + shift) % spec.n_rois) / community_size;
        const int cj = ((j + shift) % spec.n_rois) / community_size;
        if (ci != cj) continue;
        ++within;
        if (c.values(i, j) >= 0.6 && c.values(i, j) <= 0.8) ++inside_band;
      }
    }
  }
  REQUIRE(within > 0);
  CHECK(static_cast<double>(inside_band) / within >= 0.9);
}

TEST_CASE("split sizes follow the floor rule") {
  Dataset d;
  d.class_names = {"a", "b"};
  d.graphs.resize(10);
  d.ids.resize(10);
  SplitIndices s = split_dataset(d, kDefaultSplitRatios, 1);
  CHECK(s.train.size() == 6);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 2);

  d.graphs.resize(7);
  d.ids.resize(7);
  s = split_dataset(d, kDefaultSplitRatios, 1);
  CHECK(s.train.size() == 4);  // floor(4.2)
  CHECK(s.val.size() == 1);    // floor(1.4)
  CHECK(s.test.size() == 2);   // remainder
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
  Dataset d;
  d.class_names = {"a", "b"};
  d.graphs.resize(23);
  d.ids.resize(23);
  const SplitIndices s1 = split_dataset(d, kDefaultSplitRatios, 77);
  const SplitIndices s2 = split_dataset(d, kDefaultSplitRatios, 77);
  CHECK(s1.train == s2.train);
  CHECK(s1.val == s2.val);
  CHECK(s1.test == s2.test);

  std::vector<int> all = s1.train;
  all.insert(all.end(), s1.val.begin(), s1.val.end());
  all.insert(all.end(), s1.test.begin(), s1.test.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 23; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("split rejects tiny datasets") {
  Dataset d;
  d.class_names = {"a", "b"};
  d.graphs.resize(4);
  d.ids.resize(4);
  CHECK_THROWS_AS(split_dataset(d, kDefaultSplitRatios, 1), ValidationError);
}

TEST_CASE("dataset save/load round trip is exact") {
  const Dataset d = small_dataset();
  TempDir dir;
  save_dataset(d, dir.path);
  const Dataset loaded = load_dataset(dir.path);

  REQUIRE(loaded.graphs.size() == d.graphs.size());
  CHECK(loaded.ids == d.ids);
  CHECK(loaded.class_names == d.class_names);
  CHECK(loaded.feature_mode == d.feature_mode);
  CHECK(loaded.provenance == d.provenance);
  for (std::size_t k = 0; k < d.graphs.size(); ++k) {
    CHECK(loaded.graphs[k].label == d.graphs[k].label);
    CHECK(max_abs_diff(loaded.graphs[k].adjacency, d.graphs[k].adjacency) == 0.0);
    CHECK(max_abs_diff(loaded.graphs[k].features, d.graphs[k].features) == 0.0);
  }
}

TEST_CASE("dataset load reports a missing graph file by name") {
  const Dataset d = small_dataset();
  TempDir dir;
  save_dataset(d, dir.path);
  std::string manifest = io::read_file(dir.path / "manifest.json");
  const std::string needle = "subject_001_adj.csv";
  const auto pos = manifest.find(needle);
  REQUIRE(pos != std::string::npos);
  manifest.replace(pos, needle.size(), "g9_adj.csv");
  io::write_file(dir.path / "manifest.json", manifest);
  CHECK_THROWS_WITH_AS(load_dataset(dir.path), doctest::Contains("g9_adj.csv not found"),
                       FormatError);
}

TEST_CASE("dataset load validates labels against the class count") {
  const Dataset d = small_dataset();
  TempDir dir;
  save_dataset(d, dir.path);
  std::string manifest = io::read_file(dir.path / "manifest.json");
  const std::string needle = "\"label\": 1";
  const auto pos = manifest.find(needle);
  REQUIRE(pos != std::string::npos);
  manifest.replace(pos, needle.size(), "\"label\": 7");
  io::write_file(dir.path / "manifest.json", manifest);
  CHECK_THROWS_WITH_AS(load_dataset(dir.path), doctest::Contains("out of range"),
                       ValidationError);
}

TEST_SUITE_END();
