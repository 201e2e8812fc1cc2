#include "sbgnn/model.hpp"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"

namespace sbgnn {

using nlohmann::json;

namespace {

void glorot_fill(double* data, Eigen::Index size, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < size; ++i) data[i] = rng.uniform(-bound, bound);
}

}  // namespace

ModelParams init_params(int f_in, int f_h, int n_classes, std::uint64_t seed, int n_layers) {
  if (f_in < 1 || f_h < 1 || n_classes < 1 || n_layers < 1) {
    throw ConfigError("model dims must be positive");
  }
  Rng rng(seed);
  ModelParams p;
  p.dims = {f_in, f_h, n_classes};
  p.layers.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    SpectralLayerParams& layer = p.layers[l];
    const int in = l == 0 ? f_in : f_h;
    layer.filter.w1.resize(kFilterHidden);
    for (int k = 0; k < kFilterHidden; ++k) layer.filter.w1(k) = rng.uniform(-0.01, 0.01);
    layer.filter.b1 = Eigen::VectorXd::Zero(kFilterHidden);
    layer.filter.w2.resize(kFilterHidden);
    for (int k = 0; k < kFilterHidden; ++k) layer.filter.w2(k) = rng.uniform(-0.01, 0.01);
    layer.filter.b2 = 1.0;  // near-identity filter at init
    layer.w.resize(in, f_h);
    glorot_fill(layer.w.data(), layer.w.size(), in, f_h, rng);
    layer.b = Eigen::VectorXd::Zero(f_h);
  }
  p.attention.gamma.resize(f_h);
  glorot_fill(p.attention.gamma.data(), f_h, f_h, 1, rng);
  p.output.w_out.resize(f_h, n_classes);
  glorot_fill(p.output.w_out.data(), p.output.w_out.size(), f_h, n_classes, rng);
  p.output.b_out = Eigen::VectorXd::Zero(n_classes);
  return p;
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  refs.reserve(p.layers.size() * 6 + 3);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    SpectralLayerParams& layer = p.layers[l];
    refs.push_back({prefix + "filter.w1", layer.filter.w1.data(), layer.filter.w1.size()});
    refs.push_back({prefix + "filter.b1", layer.filter.b1.data(), layer.filter.b1.size()});
    refs.push_back({prefix + "filter.w2", layer.filter.w2.data(), layer.filter.w2.size()});
    refs.push_back({prefix + "filter.b2", &layer.filter.b2, 1});
    refs.push_back({prefix + "w", layer.w.data(), layer.w.size()});
    refs.push_back({prefix + "b", layer.b.data(), layer.b.size()});
  }
  refs.push_back({"attention.gamma", p.attention.gamma.data(), p.attention.gamma.size()});
  refs.push_back({"output.w_out", p.output.w_out.data(), p.output.w_out.size()});
  refs.push_back({"output.b_out", p.output.b_out.data(), p.output.b_out.size()});
  return refs;
}

TensorList zeros_like(ModelParams& p) {
  TensorList out;
  for (const TensorRef& ref : tensor_refs(p)) {
    out.push_back(Eigen::VectorXd::Zero(ref.size));
  }
  return out;
}

Eigen::VectorXd filter_response(const FilterMlpParams& f, const Eigen::VectorXd& eigenvalues) {
  const Eigen::MatrixXd hidden =
      ((eigenvalues * f.w1.transpose()).rowwise() + f.b1.transpose()).array().tanh();
  return (hidden * f.w2).array() + f.b2;
}

Eigen::MatrixXd spectral_conv(Eigen::Ref<const Eigen::MatrixXd> h, const SpectralBasis& basis,
                              const SpectralLayerParams& p, double dropout, bool training,
                              Rng* rng, LayerTrace* trace) {
  if (h.rows() != basis.size()) {
    throw ValidationError("spectral_conv: " + std::to_string(h.rows()) +
                          " feature rows vs basis size " + std::to_string(basis.size()));
  }
  if (h.cols() != p.w.rows()) {
    throw ValidationError("spectral_conv: feature width " + std::to_string(h.cols()) +
                          " vs mixing weight rows " + std::to_string(p.w.rows()));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0,1), got " + io::format_double(dropout));
  }

  Eigen::MatrixXd h_hat = basis.vectors.transpose() * h;
  Eigen::MatrixXd tanh_hidden =
      ((basis.values * p.filter.w1.transpose()).rowwise() + p.filter.b1.transpose())
          .array()
          .tanh();
  Eigen::VectorXd g = (tanh_hidden * p.filter.w2).array() + p.filter.b2;
  Eigen::MatrixXd h_tilde = basis.vectors * (g.asDiagonal() * h_hat);
  Eigen::MatrixXd pre_act = (h_tilde * p.w).rowwise() + p.b.transpose();
  Eigen::MatrixXd out = pre_act.cwiseMax(0.0);

  Eigen::MatrixXd mask;
  if (training && dropout > 0.0) {
    if (rng == nullptr) throw ConfigError("training-mode dropout needs an rng");
    const double keep = 1.0 - dropout;
    mask.resize(out.rows(), out.cols());
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
    }
    out = out.cwiseProduct(mask);
  }

  if (training && trace != nullptr) {
    trace->h_hat = std::move(h_hat);
    trace->tanh_hidden = std::move(tanh_hidden);
    trace->response = std::move(g);
    trace->h_tilde = std::move(h_tilde);
    trace->pre_act = std::move(pre_act);
    trace->mask = std::move(mask);
  }
  return out;
}

Readout attention_readout(Eigen::Ref<const Eigen::MatrixXd> h, const AttentionParams& p) {
  if (h.cols() != p.gamma.size()) {
    throw ValidationError("attention: feature width " + std::to_string(h.cols()) +
                          " vs gamma size " + std::to_string(p.gamma.size()));
  }
  Readout r;
  const Eigen::VectorXd pre = h * p.gamma;
  r.scores = (1.0 + (-pre.array()).exp()).inverse();
  r.score_sum = r.scores.sum() + kAttentionEpsilon;
  r.weights = r.scores / r.score_sum;
  r.graph_embed = h.transpose() * r.weights;
  return r;
}

Eigen::VectorXd classify(const Eigen::VectorXd& graph_embed, const OutputParams& p) {
  if (graph_embed.size() != p.w_out.rows()) {
    throw ValidationError("classify: embedding size " + std::to_string(graph_embed.size()) +
                          " vs output weight rows " + std::to_string(p.w_out.rows()));
  }
  return p.w_out.transpose() * graph_embed + p.b_out;
}

Eigen::VectorXd model_forward_with_basis(Eigen::Ref<const Eigen::MatrixXd> features,
                                         const SpectralBasis& basis, const ModelParams& params,
                                         double dropout, bool training, Rng* rng,
                                         ForwardTrace* trace) {
  if (features.cols() != params.dims.f_in) {
    throw ValidationError("feature width " + std::to_string(features.cols()) + " \xE2\x89\xA0 " +
                          std::to_string(params.dims.f_in));
  }
  const bool record = training && trace != nullptr;
  if (record) trace->layers.resize(params.layers.size());

  Eigen::MatrixXd h = features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = spectral_conv(h, basis, params.layers[l], dropout, training, rng,
                      record ? &trace->layers[l] : nullptr);
  }
  Readout r = attention_readout(h, params.attention);
  Eigen::VectorXd logits = classify(r.graph_embed, params.output);

  if (record) {
    trace->node_embed = std::move(h);
    trace->scores = std::move(r.scores);
    trace->weights = std::move(r.weights);
    trace->score_sum = r.score_sum;
    trace->graph_embed = std::move(r.graph_embed);
    trace->logits = logits;
  }
  return logits;
}

Eigen::VectorXd model_forward(const Graph& g, const ModelParams& params, BasisCache& cache,
                              double dropout, bool training, Rng* rng, ForwardTrace* trace) {
  return model_forward_with_basis(g.features, cache.basis_for(g), params, dropout, training,
                                  rng, trace);
}

EvalForward eval_forward(const Graph& g, const ModelParams& params, BasisCache& cache) {
  const SpectralBasis& basis = cache.basis_for(g);
  Eigen::MatrixXd h = g.features;
  for (const SpectralLayerParams& layer : params.layers) {
    h = spectral_conv(h, basis, layer, 0.0, false, nullptr, nullptr);
  }
  Readout r = attention_readout(h, params.attention);
  return {classify(r.graph_embed, params.output), std::move(r.weights)};
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const json& arr, const std::string& name) {
  if (!arr.is_array()) throw FormatError("model field " + name + " is not an array");
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    if (!std::isfinite(v(static_cast<Eigen::Index>(i)))) {
      throw ValidationError("non-finite value in model field " + name);
    }
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& name) {
  if (!rows.is_array() || rows.empty()) throw FormatError("model field " + name + " is not a matrix");
  const std::size_t n_cols = rows[0].size();
  Eigen::MatrixXd m(rows.size(), n_cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != n_cols) throw FormatError("ragged matrix in model field " + name);
    for (std::size_t j = 0; j < n_cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
      if (!std::isfinite(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))) {
        throw ValidationError("non-finite value in model field " + name);
      }
    }
  }
  return m;
}

}  // namespace

void save_model(const ModelParams& p, const std::filesystem::path& path) {
  json doc;
  doc["dims"] = {{"f_in", p.dims.f_in}, {"f_h", p.dims.f_h}, {"classes", p.dims.n_classes}};
  doc["n_layers"] = p.layers.size();
  json layers = json::array();
  for (const SpectralLayerParams& layer : p.layers) {
    layers.push_back({{"filter",
                       {{"w1", vector_to_json(layer.filter.w1)},
                        {"b1", vector_to_json(layer.filter.b1)},
                        {"w2", vector_to_json(layer.filter.w2)},
                        {"b2", layer.filter.b2}}},
                      {"w", matrix_to_json(layer.w)},
                      {"b", vector_to_json(layer.b)}});
  }
  doc["layers"] = std::move(layers);
  doc["attention"] = {{"gamma", vector_to_json(p.attention.gamma)}};
  doc["output"] = {{"w_out", matrix_to_json(p.output.w_out)},
                   {"b_out", vector_to_json(p.output.b_out)}};
  io::write_file(path, doc.dump(2) + "\n");
}

ModelParams load_model(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("invalid model JSON " + path.string() + ": " + e.what());
  }
  ModelParams p;
  try {
    p.dims.f_in = doc.at("dims").at("f_in").get<int>();
    p.dims.f_h = doc.at("dims").at("f_h").get<int>();
    p.dims.n_classes = doc.at("dims").at("classes").get<int>();
    for (const json& layer : doc.at("layers")) {
      SpectralLayerParams lp;
      lp.filter.w1 = vector_from_json(layer.at("filter").at("w1"), "filter.w1");
      lp.filter.b1 = vector_from_json(layer.at("filter").at("b1"), "filter.b1");
      lp.filter.w2 = vector_from_json(layer.at("filter").at("w2"), "filter.w2");
      lp.filter.b2 = layer.at("filter").at("b2").get<double>();
      lp.w = matrix_from_json(layer.at("w"), "w");
      lp.b = vector_from_json(layer.at("b"), "b");
      p.layers.push_back(std::move(lp));
    }
    p.attention.gamma = vector_from_json(doc.at("attention").at("gamma"), "attention.gamma");
    p.output.w_out = matrix_from_json(doc.at("output").at("w_out"), "output.w_out");
    p.output.b_out = vector_from_json(doc.at("output").at("b_out"), "output.b_out");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model JSON: ") + e.what());
  }
  if (p.layers.empty()) throw ValidationError("model has no layers");
  if (!std::isfinite(p.layers.front().filter.b2)) throw ValidationError("non-finite filter bias");
  return p;
}

std::string attention_csv(const Eigen::VectorXd& weights) {
  std::string out = "node_index,weight\n";
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    out += std::to_string(i) + "," + io::format_double(weights(i)) + "\n";
  }
  return out;
}

}  // namespace sbgnn
