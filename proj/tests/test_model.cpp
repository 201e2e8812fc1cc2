#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"
#include "sbgnn/model.hpp"
#include "sbgnn/rng.hpp"
#include "sbgnn/spectral.hpp"
#include "test_util.hpp"

using namespace sbgnn;

namespace {

Graph random_graph(Eigen::Index n, std::uint64_t seed, Eigen::Index f = -1) {
  if (f < 0) f = n;
  Rng rng(seed);
  Graph g;
  g.adjacency = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.6) {
        const double w = rng.uniform(0.1, 1.0);
        g.adjacency(i, j) = w;
        g.adjacency(j, i) = w;
      }
    }
  }
  g.features.resize(n, f);
  for (Eigen::Index j = 0; j < f; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g.features(i, j) = rng.normal();
  g.label = static_cast<int>(rng.below(2));
  return g;
}

bool params_equal(ModelParams& a, ModelParams& b) {
  const auto ra = tensor_refs(a);
  const auto rb = tensor_refs(b);
  if (ra.size() != rb.size()) return false;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    if (ra[k].size != rb[k].size) return false;
    for (Eigen::Index j = 0; j < ra[k].size; ++j) {
      if (ra[k].data[j] != rb[k].data[j]) return false;
    }
  }
  return true;
}

FilterMlpParams constant_filter(double value) {
  FilterMlpParams f;
  f.w1 = Eigen::VectorXd::Zero(kFilterHidden);
  f.b1 = Eigen::VectorXd::Zero(kFilterHidden);
  f.w2 = Eigen::VectorXd::Zero(kFilterHidden);
  f.b2 = value;
  return f;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("init is deterministic per seed") {
  ModelParams a = init_params(10, 8, 3, 7);
  ModelParams b = init_params(10, 8, 3, 7);
  ModelParams c = init_params(10, 8, 3, 8);
  CHECK(params_equal(a, b));
  CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("init respects the Glorot bound") {
  ModelParams p = init_params(10, 64, 2, 3);
  const double bound = std::sqrt(6.0 / (10 + 64));
  CHECK(p.layers[0].w.cwiseAbs().maxCoeff() <= bound);
  CHECK(p.layers[0].w.cwiseAbs().maxCoeff() > 0.0);
  CHECK(p.layers[0].b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.output.b_out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initial filter response is near the identity") {
  ModelParams p = init_params(6, 16, 2, 11);
  Eigen::VectorXd lambdas(3);
  lambdas << 0.0, 1.0, 2.0;
  for (const auto& layer : p.layers) {
    const Eigen::VectorXd g = filter_response(layer.filter, lambdas);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(g(i) - 1.0) <= 0.05);
  }
}

TEST_CASE("filter response degenerates to its output bias") {
  Eigen::VectorXd lambdas(4);
  lambdas << 0.0, 0.5, 1.3, 2.0;
  const Eigen::VectorXd ones = filter_response(constant_filter(1.0), lambdas);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(ones(i) == 1.0);

  FilterMlpParams f = constant_filter(0.25);
  Rng rng(3);
  for (int k = 0; k < kFilterHidden; ++k) f.w2(k) = rng.uniform(-1, 1);  // w1 = 0, b1 = 0
  const Eigen::VectorXd flat = filter_response(f, lambdas);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(flat(i) == 0.25);
}

TEST_CASE("filter response is a pointwise function of the eigenvalue") {
  ModelParams p = init_params(4, 8, 2, 5);
  Eigen::VectorXd lambdas(3);
  lambdas << 0.7, 0.7, 1.9;
  const Eigen::VectorXd g = filter_response(p.layers[0].filter, lambdas);
  CHECK(g(0) == g(1));
}

TEST_CASE("spectral_conv with unit filter and identity mixing is ReLU") {
  BasisCache cache;
  const Graph g = random_graph(5, 19);
  const SpectralBasis& basis = cache.basis_for(g);
  SpectralLayerParams layer;
  layer.filter = constant_filter(1.0);
  layer.w = Eigen::MatrixXd::Identity(5, 5);
  layer.b = Eigen::VectorXd::Zero(5);
  const Eigen::MatrixXd out = spectral_conv(g.features, basis, layer, 0.0, false, nullptr, nullptr);
  CHECK(max_abs_diff(out, g.features.cwiseMax(0.0)) < 1e-10);
}

TEST_CASE("spectral_conv with zero filter broadcasts ReLU(b)") {
  BasisCache cache;
  const Graph g = random_graph(4, 23);
  const SpectralBasis& basis = cache.basis_for(g);
  SpectralLayerParams layer;
  layer.filter = constant_filter(0.0);
  Rng rng(5);
  layer.w.resize(4, 3);
  for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = rng.normal();
  layer.b.resize(3);
  layer.b << -0.5, 0.25, 1.5;
  const Eigen::MatrixXd out = spectral_conv(g.features, basis, layer, 0.0, false, nullptr, nullptr);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(out(i, 0) == 0.0);
    CHECK(out(i, 1) == 0.25);
    CHECK(out(i, 2) == 1.5);
  }
}

TEST_CASE("spectral_conv matches the dense spectral oracle") {
  BasisCache cache;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = random_graph(4 + static_cast<Eigen::Index>(seed), 29 + seed);
    const SpectralBasis& basis = cache.basis_for(g);
    ModelParams p = init_params(static_cast<int>(g.nodes()), 6, 2, seed + 1, 1);
    Rng rng(seed + 100);
    for (auto& ref : tensor_refs(p))
      for (Eigen::Index j = 0; j < ref.size; ++j) ref.data[j] = rng.uniform(-0.8, 0.8);
    const SpectralLayerParams& layer = p.layers[0];

    // Naive oracle: U diag(g(lambda)) U^T H W + b, then ReLU.
    const Eigen::VectorXd gains = filter_response(layer.filter, basis.values);
    const Eigen::MatrixXd filter_matrix =
        basis.vectors * gains.asDiagonal() * basis.vectors.transpose();
    Eigen::MatrixXd pre = filter_matrix * g.features * layer.w;
    pre.rowwise() += layer.b.transpose();

    LayerTrace trace;
    const Eigen::MatrixXd out =
        spectral_conv(g.features, basis, layer, 0.0, true, nullptr, &trace);
    CHECK(max_abs_diff(trace.pre_act, pre) < 1e-10);
    CHECK(max_abs_diff(out, pre.cwiseMax(0.0)) < 1e-10);
  }
}

TEST_CASE("attention with zero gamma reduces to mean pooling") {
  Rng rng(7);
  Eigen::MatrixXd h(6, 4);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = rng.normal();
  AttentionParams att{Eigen::VectorXd::Zero(4)};
  const Readout r = attention_readout(h, att);
  const Eigen::VectorXd mean = h.colwise().mean();
  CHECK((r.graph_embed - mean).cwiseAbs().maxCoeff() < 1e-7);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(r.scores(i) == 0.5);
}

TEST_CASE("attention on a single node gives weight just below one") {
  Eigen::MatrixXd h(1, 3);
  h << 0.3, -0.2, 0.9;
  AttentionParams att{Eigen::VectorXd::Zero(3)};
  const Readout r = attention_readout(h, att);
  CHECK(r.weights(0) > 1.0 - 3e-8);
  CHECK(r.weights(0) < 1.0);
  CHECK((r.graph_embed - h.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("attention gives duplicate rows identical weights") {
  Eigen::MatrixXd h(3, 2);
  h << 0.4, -1.0, 0.4, -1.0, 2.0, 0.1;
  AttentionParams att{Eigen::VectorXd::Ones(2)};
  const Readout r = attention_readout(h, att);
  CHECK(r.weights(0) == r.weights(1));
}

TEST_CASE("attention weights leave exactly the epsilon slack") {
  Rng rng(31);
  Eigen::MatrixXd h(5, 3);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = rng.normal();
  AttentionParams att{Eigen::VectorXd::Ones(3) * 0.3};
  const Readout r = attention_readout(h, att);
  const double total = r.weights.sum();
  const double raw_sum = r.scores.sum();
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(r.weights(i) > 0.0);
    CHECK(r.weights(i) < 1.0);
  }
  CHECK(1.0 - total >= 0.0);
  CHECK(1.0 - total <= kAttentionEpsilon / raw_sum + 1e-16);
}

TEST_CASE("classify is the plain affine map") {
  OutputParams out;
  out.w_out = Eigen::MatrixXd::Zero(4, 3);
  out.b_out.resize(3);
  out.b_out << 0.1, -0.2, 0.3;
  Eigen::VectorXd h = Eigen::VectorXd::Ones(4);
  CHECK(max_abs_diff(classify(h, out), out.b_out) == 0.0);

  Rng rng(41);
  for (Eigen::Index i = 0; i < out.w_out.size(); ++i) out.w_out.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < 4; ++i) h(i) = rng.normal();
  const Eigen::VectorXd logits = classify(h, out);
  for (Eigen::Index c = 0; c < 3; ++c) {
    double dot = out.b_out(c);
    for (Eigen::Index f = 0; f < 4; ++f) dot += h(f) * out.w_out(f, c);  // naive oracle
    CHECK(std::abs(logits(c) - dot) < 1e-12);
  }

  CHECK(max_abs_diff(classify(Eigen::VectorXd::Zero(4), out), out.b_out) == 0.0);
}

TEST_CASE("eval-mode forward is deterministic") {
  BasisCache cache;
  const Graph g = random_graph(6, 47);
  ModelParams p = init_params(6, 12, 3, 9);
  const Eigen::VectorXd a = model_forward(g, p, cache, 0.5, false, nullptr);
  const Eigen::VectorXd b = model_forward(g, p, cache, 0.5, false, nullptr);
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("training-mode dropout responds to the rng seed") {
  BasisCache cache;
  const Graph g = random_graph(6, 53);
  ModelParams p = init_params(6, 12, 3, 9);
  Rng r1(1), r2(2), r3(1);
  const Eigen::VectorXd a = model_forward(g, p, cache, 0.5, true, &r1);
  const Eigen::VectorXd b = model_forward(g, p, cache, 0.5, true, &r2);
  const Eigen::VectorXd c = model_forward(g, p, cache, 0.5, true, &r3);
  CHECK(max_abs_diff(a, b) > 0.0);
  CHECK(max_abs_diff(a, c) == 0.0);
}

TEST_CASE("logits are invariant under node permutations") {
  BasisCache cache;
  const Eigen::Index n = 7;
  Graph g = random_graph(n, 59);
  ModelParams p = init_params(static_cast<int>(n), 16, 3, 13);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(61);
  rng.shuffle(perm);
  Eigen::MatrixXd pm = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) pm(perm[static_cast<std::size_t>(i)], i) = 1.0;

  Graph permuted;
  permuted.adjacency = pm * g.adjacency * pm.transpose();
  permuted.features = pm * g.features;
  permuted.label = g.label;

  const Eigen::VectorXd base = model_forward(g, p, cache, 0.0, false, nullptr);
  const Eigen::VectorXd moved = model_forward(permuted, p, cache, 0.0, false, nullptr);
  CHECK(max_abs_diff(base, moved) < 1e-8);
}

TEST_CASE("eigenvector sign flips do not change the output") {
  BasisCache cache;
  const Graph g = random_graph(6, 67);
  const SpectralBasis& basis = cache.basis_for(g);
  ModelParams p = init_params(6, 10, 2, 17);

  SpectralBasis flipped = basis;
  flipped.vectors.col(1) = -flipped.vectors.col(1);
  flipped.vectors.col(4) = -flipped.vectors.col(4);

  const Eigen::MatrixXd a =
      spectral_conv(g.features, basis, p.layers[0], 0.0, false, nullptr, nullptr);
  const Eigen::MatrixXd b =
      spectral_conv(g.features, flipped, p.layers[0], 0.0, false, nullptr, nullptr);
  CHECK(max_abs_diff(a, b) < 1e-10);

  const Eigen::VectorXd la = model_forward_with_basis(g.features, basis, p, 0.0, false, nullptr);
  const Eigen::VectorXd lb = model_forward_with_basis(g.features, flipped, p, 0.0, false, nullptr);
  CHECK(max_abs_diff(la, lb) < 1e-8);
}

TEST_CASE("rotations inside a degenerate eigenspace do not change the output") {
  // Two disjoint unit K2 components: eigenvalues {0, 0, 2, 2}.
  Graph g;
  g.adjacency = Eigen::MatrixXd::Zero(4, 4);
  g.adjacency(0, 1) = g.adjacency(1, 0) = 1.0;
  g.adjacency(2, 3) = g.adjacency(3, 2) = 1.0;
  Rng rng(71);
  g.features.resize(4, 4);
  for (Eigen::Index i = 0; i < g.features.size(); ++i) g.features.data()[i] = rng.normal();

  BasisCache cache;
  const SpectralBasis& basis = cache.basis_for(g);
  REQUIRE(std::abs(basis.values(2) - 2.0) < 1e-10);
  REQUIRE(std::abs(basis.values(3) - 2.0) < 1e-10);

  const double angle = 0.7;
  SpectralBasis rotated = basis;
  const Eigen::VectorXd c2 = basis.vectors.col(2), c3 = basis.vectors.col(3);
  rotated.vectors.col(2) = std::cos(angle) * c2 + std::sin(angle) * c3;
  rotated.vectors.col(3) = -std::sin(angle) * c2 + std::cos(angle) * c3;

  ModelParams p = init_params(4, 8, 2, 19);
  const Eigen::VectorXd a = model_forward_with_basis(g.features, basis, p, 0.0, false, nullptr);
  const Eigen::VectorXd b = model_forward_with_basis(g.features, rotated, p, 0.0, false, nullptr);
  CHECK(max_abs_diff(a, b) < 1e-8);
}

TEST_CASE("model JSON round trip is bit-exact") {
  ModelParams p = init_params(5, 8, 3, 23);
  TempDir dir;
  save_model(p, dir.path / "model.json");
  ModelParams q = load_model(dir.path / "model.json");
  CHECK(q.dims.f_in == 5);
  CHECK(q.dims.f_h == 8);
  CHECK(q.dims.n_classes == 3);
  CHECK(params_equal(p, q));
}

TEST_CASE("model load rejects malformed documents") {
  TempDir dir;
  io::write_file(dir.path / "bad.json", "{not json");
  CHECK_THROWS_AS(load_model(dir.path / "bad.json"), FormatError);
  io::write_file(dir.path / "empty.json", "{}");
  CHECK_THROWS_AS(load_model(dir.path / "empty.json"), FormatError);
}

TEST_CASE("forward validates the feature width") {
  BasisCache cache;
  const Graph g = random_graph(5, 73, 5);
  ModelParams p = init_params(9, 8, 2, 29);
  CHECK_THROWS_WITH_AS(model_forward(g, p, cache, 0.0, false, nullptr),
                       doctest::Contains("feature width"), ValidationError);
}

TEST_CASE("attention csv lists one row per node") {
  Eigen::VectorXd w(3);
  w << 0.2, 0.3, 0.5;
  const std::string csv = attention_csv(w);
  CHECK(csv.find("node_index,weight\n") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_SUITE_END();
