#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sbgnn/dataset.hpp"
#include "sbgnn/rng.hpp"
#include "sbgnn/spectral.hpp"

namespace sbgnn {

inline constexpr double kAttentionEpsilon = 1e-8;
inline constexpr int kFilterHidden = 16;

// Eigenvalue filter MLP, 1 -> 16 -> 1 with tanh hidden and linear output:
// g(lambda) = w2 . tanh(w1 * lambda + b1) + b2.
struct FilterMlpParams {
  Eigen::VectorXd w1;  // 16
  Eigen::VectorXd b1;  // 16
  Eigen::VectorXd w2;  // 16
  double b2 = 0.0;
};

struct SpectralLayerParams {
  FilterMlpParams filter;
  Eigen::MatrixXd w;  // F_in x F_out channel mixing
  Eigen::VectorXd b;  // F_out
};

struct AttentionParams {
  Eigen::VectorXd gamma;  // F_h
};

struct OutputParams {
  Eigen::MatrixXd w_out;  // F_h x C
  Eigen::VectorXd b_out;  // C
};

struct ModelDims {
  int f_in = 0;
  int f_h = 64;
  int n_classes = 2;
};

struct ModelParams {
  ModelDims dims;
  std::vector<SpectralLayerParams> layers;  // layer 0 maps F_in -> F_h, rest F_h -> F_h
  AttentionParams attention;
  OutputParams output;
};

// Glorot-uniform weights, zero biases; the filter MLP starts near the
// identity filter (w1, w2 ~ U(-0.01, 0.01), b1 = 0, b2 = 1). Deterministic
// per seed.
ModelParams init_params(int f_in, int f_h, int n_classes, std::uint64_t seed,
                        int n_layers = 2);

// Stable enumeration of every learnable tensor (matrices flattened in
// storage order). Gradients and optimizer state align with this order.
struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index size;
};
std::vector<TensorRef> tensor_refs(ModelParams& p);

// Flat tensors mirroring tensor_refs(p); used for gradients and Adam moments.
using TensorList = std::vector<Eigen::VectorXd>;
TensorList zeros_like(ModelParams& p);

Eigen::VectorXd filter_response(const FilterMlpParams& f,
                                const Eigen::VectorXd& eigenvalues);

// Everything backward needs to replay one layer without recomputation.
struct LayerTrace {
  Eigen::MatrixXd h_hat;        // U^T H, pre-filter
  Eigen::MatrixXd tanh_hidden;  // N x 16 filter MLP hidden activations
  Eigen::VectorXd response;     // g(lambda), N
  Eigen::MatrixXd h_tilde;      // U (g .* h_hat)
  Eigen::MatrixXd pre_act;      // h_tilde W + b, before ReLU
  Eigen::MatrixXd mask;         // inverted-dropout mask (entries 0 or 1/keep); empty if none
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Eigen::MatrixXd node_embed;   // H^(L), N x F_h
  Eigen::VectorXd scores;       // a_i = sigmoid(h_i . gamma)
  Eigen::VectorXd weights;      // normalized attention weights
  double score_sum = 0.0;       // sum(a) + epsilon
  Eigen::VectorXd graph_embed;  // h_g
  Eigen::VectorXd logits;
};

// One spectral convolution: GFT, per-eigenvalue filter gain, inverse GFT,
// channel mixing, ReLU, then inverted dropout in training mode. `trace` is
// filled only when training.
Eigen::MatrixXd spectral_conv(Eigen::Ref<const Eigen::MatrixXd> h,
                              const SpectralBasis& basis,
                              const SpectralLayerParams& p, double dropout,
                              bool training, Rng* rng, LayerTrace* trace);

struct Readout {
  Eigen::VectorXd graph_embed;  // F_h
  Eigen::VectorXd weights;      // normalized attention weights, N
  Eigen::VectorXd scores;       // raw sigmoid scores, N
  double score_sum = 0.0;       // sum(scores) + epsilon
};

Readout attention_readout(Eigen::Ref<const Eigen::MatrixXd> h,
                          const AttentionParams& p);

Eigen::VectorXd classify(const Eigen::VectorXd& graph_embed, const OutputParams& p);

// Full forward pass against an explicit basis (used by tests that perturb
// the basis) and against the shared cache. Trace is filled only in training
// mode.
Eigen::VectorXd model_forward_with_basis(Eigen::Ref<const Eigen::MatrixXd> features,
                                         const SpectralBasis& basis,
                                         const ModelParams& params, double dropout,
                                         bool training, Rng* rng,
                                         ForwardTrace* trace = nullptr);

Eigen::VectorXd model_forward(const Graph& g, const ModelParams& params,
                              BasisCache& cache, double dropout, bool training,
                              Rng* rng, ForwardTrace* trace = nullptr);

// Evaluation-mode forward that also exposes the readout's attention weights
// for interpretability reports.
struct EvalForward {
  Eigen::VectorXd logits;
  Eigen::VectorXd attention_weights;  // N
};
EvalForward eval_forward(const Graph& g, const ModelParams& params, BasisCache& cache);

// JSON round trip of dims plus every tensor; values survive bit-exactly.
void save_model(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

// Per-node attention weights as "node_index,weight" CSV rows.
std::string attention_csv(const Eigen::VectorXd& weights);

}  // namespace sbgnn
