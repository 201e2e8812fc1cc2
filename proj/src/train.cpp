#include "sbgnn/train.hpp"

#include <atomic>
#include <cmath>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"
#include "sbgnn/rng.hpp"

namespace sbgnn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  const double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split_ratios must sum to 1");
}

TrainConfig load_train_config(const std::filesystem::path& path, std::uint64_t fallback_seed) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid config JSON " + path.string() + ": " + e.what());
  }
  TrainConfig cfg;
  cfg.seed = fallback_seed;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "lr") cfg.lr = value.get<double>();
      else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "batch_size") cfg.batch_size = value.get<int>();
      else if (key == "dropout") cfg.dropout = value.get<double>();
      else if (key == "hidden") cfg.hidden = value.get<int>();
      else if (key == "layers") cfg.layers = value.get<int>();
      else if (key == "runs") cfg.runs = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "split_ratios") {
        const auto r = value.get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("split_ratios must have 3 entries");
        cfg.split_ratios = {r[0], r[1], r[2]};
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string train_config_json(const TrainConfig& cfg) {
  json doc;
  doc["lr"] = cfg.lr;
  doc["weight_decay"] = cfg.weight_decay;
  doc["epochs"] = cfg.epochs;
  doc["batch_size"] = cfg.batch_size;
  doc["dropout"] = cfg.dropout;
  doc["hidden"] = cfg.hidden;
  doc["layers"] = cfg.layers;
  doc["runs"] = cfg.runs;
  doc["seed"] = cfg.seed;
  doc["split_ratios"] = cfg.split_ratios;
  return doc.dump(2) + "\n";
}

CrossEntropy cross_entropy(const Eigen::VectorXd& logits, int label) {
  const Eigen::Index c = logits.size();
  if (label < 0 || label >= c) {
    throw ValidationError("cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(c) + " classes");
  }
  const double peak = logits.maxCoeff();
  CrossEntropy out;
  Eigen::VectorXd shifted_exp = (logits.array() - peak).exp();
  const double z = shifted_exp.sum();
  out.loss = std::log(z) + peak - logits(label);
  out.dlogits = shifted_exp / z;
  out.dlogits(label) -= 1.0;
  return out;
}

Gradients backward(const ForwardTrace& trace, const SpectralBasis& basis,
                   const ModelParams& params, const Eigen::VectorXd& dlogits) {
  const std::size_t n_layers = params.layers.size();
  if (trace.layers.size() != n_layers) {
    throw ValidationError("backward: trace has " + std::to_string(trace.layers.size()) +
                          " layers, model has " + std::to_string(n_layers));
  }
  if (dlogits.size() != params.dims.n_classes) {
    throw ValidationError("backward: dlogits size mismatch");
  }

  const Eigen::MatrixXd& node_embed = trace.node_embed;

  // Prediction head: logits = W_out^T h_g + b_out.
  Eigen::MatrixXd d_w_out = trace.graph_embed * dlogits.transpose();
  Eigen::VectorXd d_b_out = dlogits;
  Eigen::VectorXd d_graph_embed = params.output.w_out * dlogits;

  // Attention readout: h_g = sum_i atil_i h_i, atil = a / (sum a + eps).
  Eigen::VectorXd d_weights = node_embed * d_graph_embed;
  const double weighted = d_weights.dot(trace.weights);
  Eigen::VectorXd d_scores_raw =
      (d_weights.array() - weighted) / trace.score_sum;  // d loss / d a_i
  Eigen::VectorXd d_pre_sigmoid =
      d_scores_raw.array() * trace.scores.array() * (1.0 - trace.scores.array());
  Eigen::VectorXd d_gamma = node_embed.transpose() * d_pre_sigmoid;
  Eigen::MatrixXd d_h = trace.weights * d_graph_embed.transpose() +
                        d_pre_sigmoid * params.attention.gamma.transpose();

  // Spectral layers in reverse.
  std::vector<Eigen::VectorXd> d_w1(n_layers), d_b1(n_layers), d_w2(n_layers);
  std::vector<double> d_b2(n_layers);
  std::vector<Eigen::MatrixXd> d_w(n_layers);
  std::vector<Eigen::VectorXd> d_b(n_layers);

  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerTrace& lt = trace.layers[l];
    const SpectralLayerParams& lp = params.layers[l];

    Eigen::MatrixXd d_out = std::move(d_h);
    if (lt.mask.size() > 0) d_out = d_out.cwiseProduct(lt.mask);
    Eigen::MatrixXd d_pre =
        d_out.cwiseProduct((lt.pre_act.array() > 0.0).cast<double>().matrix());

    d_w[l] = lt.h_tilde.transpose() * d_pre;
    d_b[l] = d_pre.colwise().sum();
    Eigen::MatrixXd d_h_tilde = d_pre * lp.w.transpose();
    Eigen::MatrixXd d_h_hat_filtered = basis.vectors.transpose() * d_h_tilde;

    Eigen::VectorXd d_response = lt.h_hat.cwiseProduct(d_h_hat_filtered).rowwise().sum();
    Eigen::MatrixXd d_h_hat = lt.response.asDiagonal() * d_h_hat_filtered;

    // Filter MLP: g_i = w2 . tanh(w1 lambda_i + b1) + b2.
    d_w2[l] = lt.tanh_hidden.transpose() * d_response;
    d_b2[l] = d_response.sum();
    Eigen::MatrixXd d_hidden_pre =
        (d_response * lp.filter.w2.transpose()).array() *
        (1.0 - lt.tanh_hidden.array().square());
    d_w1[l] = d_hidden_pre.transpose() * basis.values;
    d_b1[l] = d_hidden_pre.colwise().sum();

    d_h = basis.vectors * d_h_hat;  // gradient w.r.t. this layer's input
  }

  Gradients grads;
  grads.reserve(n_layers * 6 + 3);
  for (std::size_t l = 0; l < n_layers; ++l) {
    grads.push_back(std::move(d_w1[l]));
    grads.push_back(std::move(d_b1[l]));
    grads.push_back(std::move(d_w2[l]));
    grads.push_back(Eigen::VectorXd::Constant(1, d_b2[l]));
    grads.push_back(Eigen::Map<Eigen::VectorXd>(d_w[l].data(), d_w[l].size()));
    grads.push_back(std::move(d_b[l]));
  }
  grads.push_back(std::move(d_gamma));
  grads.push_back(Eigen::Map<Eigen::VectorXd>(d_w_out.data(), d_w_out.size()));
  grads.push_back(std::move(d_b_out));

  for (const Eigen::VectorXd& g : grads) {
    if (!g.allFinite()) throw NumericalError("non-finite gradient produced by backward pass");
  }
  return grads;
}

void accumulate(Gradients& into, const Gradients& g) {
  if (into.size() != g.size()) throw ValidationError("gradient accumulation size mismatch");
  for (std::size_t k = 0; k < g.size(); ++k) into[k] += g[k];
}

AdamState init_adam(ModelParams& params) {
  AdamState state;
  state.m = zeros_like(params);
  state.v = zeros_like(params);
  return state;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  const std::vector<TensorRef> refs = tensor_refs(params);
  if (grads.size() != refs.size() || state.m.size() != refs.size()) {
    throw ValidationError("adam_step: tensor count mismatch");
  }
  state.t += 1;
  const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

  for (std::size_t k = 0; k < refs.size(); ++k) {
    Eigen::Map<Eigen::VectorXd> param(refs[k].data, refs[k].size);
    if (grads[k].size() != refs[k].size) {
      throw ValidationError("adam_step: gradient shape mismatch for " + refs[k].name);
    }
    const Eigen::VectorXd grad = grads[k] + cfg.weight_decay * param;
    state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * grad;
    state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * grad.cwiseProduct(grad);
    const Eigen::ArrayXd m_hat = state.m[k].array() / bias1;
    const Eigen::ArrayXd v_hat = state.v[k].array() / bias2;
    param.array() -= cfg.lr * m_hat / (v_hat.sqrt() + eps);
  }
}

double evaluate_accuracy(const Dataset& data, const std::vector<int>& indices,
                         const ModelParams& params, BasisCache& cache) {
  if (indices.empty()) return 0.0;
  int correct = 0;
  for (const int idx : indices) {
    const Eigen::VectorXd logits =
        model_forward(data.graphs[idx], params, cache, 0.0, false, nullptr);
    Eigen::Index pred = 0;
    logits.maxCoeff(&pred);
    if (static_cast<int>(pred) == data.graphs[idx].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

RunResult train_one(const Dataset& data, const SplitIndices& split, const TrainConfig& cfg,
                    std::uint64_t run_seed, BasisCache& cache) {
  cfg.validate();
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw ValidationError("train_one: every split part must be nonempty");
  }
  const int f_in = static_cast<int>(data.feature_dim());
  const int n_classes = data.classes();

  ModelParams params = init_params(f_in, cfg.hidden, n_classes, run_seed, cfg.layers);
  AdamState adam = init_adam(params);
  // Decorrelated stream for shuffling and dropout, distinct from init draws.
  Rng rng(run_seed + 0x9e3779b97f4a7c15ull);

  RunResult result;
  result.best_val_accuracy = -1.0;
  std::vector<int> order = split.train;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double batch_n = static_cast<double>(stop - start);
      Gradients batch_grads = zeros_like(params);

      for (std::size_t k = start; k < stop; ++k) {
        const Graph& g = data.graphs[order[k]];
        try {
          ForwardTrace trace;
          const Eigen::VectorXd logits =
              model_forward(g, params, cache, cfg.dropout, true, &rng, &trace);
          CrossEntropy ce = cross_entropy(logits, g.label);
          if (!std::isfinite(ce.loss)) {
            throw NumericalError("non-finite loss");
          }
          loss_sum += ce.loss;
          const Gradients g_k = backward(trace, cache.basis_for(g), params,
                                         Eigen::VectorXd(ce.dlogits / batch_n));
          accumulate(batch_grads, g_k);
        } catch (const NumericalError& e) {
          throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(start / cfg.batch_size) + ": " +
                               e.what());
        }
      }
      adam_step(params, batch_grads, adam, cfg);
    }

    const double val_acc = evaluate_accuracy(data, split.val, params, cache);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(order.size()), val_acc});
    if (val_acc > result.best_val_accuracy) {  // ties keep the earlier epoch
      result.best_val_accuracy = val_acc;
      result.epoch_of_best = epoch;
      result.snapshot = params;
    }
  }

  std::vector<int> preds, labels;
  preds.reserve(split.test.size());
  labels.reserve(split.test.size());
  for (const int idx : split.test) {
    const Eigen::VectorXd logits =
        model_forward(data.graphs[idx], result.snapshot, cache, 0.0, false, nullptr);
    Eigen::Index pred = 0;
    logits.maxCoeff(&pred);
    preds.push_back(static_cast<int>(pred));
    labels.push_back(data.graphs[idx].label);
  }
  result.test = report(confusion(preds, labels, n_classes));
  return result;
}

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (const double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;  // std 0 by convention at n=1
  double ss = 0.0;
  for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

}  // namespace

RunStats repeated_runs(const Dataset& data, const TrainConfig& cfg, BasisCache& cache,
                       int jobs) {
  cfg.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");

  RunStats stats;
  stats.runs = cfg.runs;
  stats.single_run = cfg.runs == 1;
  stats.results.resize(cfg.runs);
  std::vector<std::optional<std::string>> diverged(cfg.runs);
  std::vector<std::exception_ptr> fatal(cfg.runs);

  auto run_once = [&](int r) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(r);
    try {
      const SplitIndices split = split_dataset(data, cfg.split_ratios, run_seed);
      stats.results[r] = train_one(data, split, cfg, run_seed, cache);
    } catch (const NumericalError& e) {
      diverged[r] = e.what();
    } catch (...) {
      fatal[r] = std::current_exception();
    }
  };

  if (jobs == 1 || cfg.runs == 1) {
    for (int r = 0; r < cfg.runs; ++r) run_once(r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next.fetch_add(1); r < cfg.runs; r = next.fetch_add(1)) run_once(r);
    };
    std::vector<std::thread> pool;
    const int width = std::min(jobs, cfg.runs);
    pool.reserve(width);
    for (int w = 0; w < width; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  for (int r = 0; r < cfg.runs; ++r) {
    if (fatal[r]) {
      try {
        std::rethrow_exception(fatal[r]);
      } catch (const std::exception& e) {
        throw ValidationError("run " + std::to_string(r) + " failed: " + e.what());
      }
    }
    if (diverged[r]) {
      stats.failures.emplace_back(r, *diverged[r]);
      continue;
    }
    const RunResult& res = *stats.results[r];
    stats.accuracies.push_back(res.test.accuracy);
    stats.precisions.push_back(res.test.macro_precision);
    stats.recalls.push_back(res.test.macro_recall);
    stats.f1s.push_back(res.test.macro_f1);
  }

  stats.accuracy = mean_std(stats.accuracies);
  stats.precision = mean_std(stats.precisions);
  stats.recall = mean_std(stats.recalls);
  stats.f1 = mean_std(stats.f1s);
  return stats;
}

double gradient_check(std::uint64_t seed, int n_nodes) {
  if (n_nodes < 2) throw ConfigError("gradient check needs at least 2 nodes");
  Rng rng(seed);

  // Random weighted graph with ~60% edge density and random node features.
  const Eigen::Index n = n_nodes;
  Eigen::MatrixXd adjacency = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.6) {
        const double w = rng.uniform(0.1, 1.0);
        adjacency(i, j) = w;
        adjacency(j, i) = w;
      }
    }
  }
  Graph g;
  g.adjacency = std::move(adjacency);
  g.features.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g.features(i, j) = rng.normal();
  const int n_classes = 3;
  g.label = static_cast<int>(rng.below(n_classes));

  constexpr int f_h = 16;
  ModelParams params =
      init_params(static_cast<int>(n), f_h, n_classes, seed ^ 0xabcdef1234567890ull, 2);
  // Replace the training init with moderate per-role scales. Saturated
  // sigmoids or a saturated softmax would collapse whole gradient paths
  // toward the finite-difference noise floor and make the comparison
  // meaningless rather than strict.
  for (const TensorRef& ref : tensor_refs(params)) {
    double scale = 0.4;
    if (ref.name.find("filter") != std::string::npos) scale = 0.5;
    else if (ref.name.find("gamma") != std::string::npos) scale = 0.15;
    else if (ref.name.find("w_out") != std::string::npos) scale = 0.25;
    else if (ref.name.find("b_out") != std::string::npos) scale = 0.1;
    else if (ref.name.ends_with(".b")) scale = 0.2;
    for (Eigen::Index j = 0; j < ref.size; ++j) ref.data[j] = rng.uniform(-scale, scale);
  }
  BasisCache cache;
  const SpectralBasis& basis = cache.basis_for(g);

  ForwardTrace trace;
  const Eigen::VectorXd logits =
      model_forward(g, params, cache, 0.0, true, nullptr, &trace);
  const CrossEntropy ce = cross_entropy(logits, g.label);
  const Gradients analytic = backward(trace, basis, params, ce.dlogits);

  auto loss_at = [&]() {
    const Eigen::VectorXd l = model_forward(g, params, cache, 0.0, false, nullptr);
    return cross_entropy(l, g.label).loss;
  };

  constexpr double step = 1e-5;
  double max_rel = 0.0;
  const std::vector<TensorRef> refs = tensor_refs(params);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    for (Eigen::Index j = 0; j < refs[k].size; ++j) {
      double& theta = refs[k].data[j];
      const double saved = theta;
      theta = saved + step;
      const double plus = loss_at();
      theta = saved - step;
      const double minus = loss_at();
      theta = saved;
      const double fd = (plus - minus) / (2.0 * step);
      const double grad = analytic[k](j);
      const double denom = std::max({std::abs(fd), std::abs(grad), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - grad) / denom);
    }
  }
  return max_rel;
}

}  // namespace sbgnn
