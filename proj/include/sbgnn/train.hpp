#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sbgnn/dataset.hpp"
#include "sbgnn/metrics.hpp"
#include "sbgnn/model.hpp"
#include "sbgnn/spectral.hpp"

namespace sbgnn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 200;
  int batch_size = 16;
  double dropout = 0.5;
  int hidden = 64;
  int layers = 2;
  int runs = 30;
  std::uint64_t seed = 42;
  std::array<double, 3> split_ratios = kDefaultSplitRatios;

  void validate() const;  // throws ConfigError
};

// JSON document mirroring the TrainConfig fields; unknown keys are rejected.
TrainConfig load_train_config(const std::filesystem::path& path,
                              std::uint64_t fallback_seed);
std::string train_config_json(const TrainConfig& cfg);

struct CrossEntropy {
  double loss = 0.0;
  Eigen::VectorXd dlogits;  // softmax(logits) - onehot(label)
};

// Softmax cross-entropy with max subtraction for stability.
CrossEntropy cross_entropy(const Eigen::VectorXd& logits, int label);

// Gradient tensors mirroring tensor_refs(params) order.
using Gradients = TensorList;

// Exact reverse-mode derivatives of the loss w.r.t. every parameter tensor.
// The basis (U, lambda) is data, not a parameter; dropout masks recorded in
// the trace are replayed. Throws NumericalError on non-finite gradients.
Gradients backward(const ForwardTrace& trace, const SpectralBasis& basis,
                   const ModelParams& params, const Eigen::VectorXd& dlogits);

void accumulate(Gradients& into, const Gradients& g);

struct AdamState {
  TensorList m;
  TensorList v;
  long t = 0;
};

AdamState init_adam(ModelParams& params);

// Classic Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction and
// coupled L2: grad += weight_decay * param before the moment update.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct RunResult {
  double best_val_accuracy = 0.0;
  int epoch_of_best = 0;
  MetricsReport test;  // computed from the best-validation snapshot
  std::vector<EpochStats> history;
  ModelParams snapshot;  // parameters at the best validation epoch
};

// One full training run: shuffled mini-batches, mean per-graph loss, one Adam
// step per batch, best-validation checkpointing (ties keep the earlier
// epoch), test metrics from the snapshot. Deterministic per run_seed.
RunResult train_one(const Dataset& data, const SplitIndices& split, const TrainConfig& cfg,
                    std::uint64_t run_seed, BasisCache& cache);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1); 0 by convention at n=1
};

struct RunStats {
  int runs = 0;
  bool single_run = false;  // flags the n=1 std convention
  MeanStd accuracy, precision, recall, f1;
  std::vector<double> accuracies;  // per successful run, in run order
  std::vector<double> precisions;
  std::vector<double> recalls;
  std::vector<double> f1s;
  std::vector<std::optional<RunResult>> results;  // index = run
  std::vector<std::pair<int, std::string>> failures;  // (run index, message)
};

// Run r uses seed cfg.seed + r for both split and init. Diverged runs are
// recorded in `failures`; other errors propagate annotated with the run
// index. Independent runs may execute in parallel (jobs > 1).
RunStats repeated_runs(const Dataset& data, const TrainConfig& cfg, BasisCache& cache,
                       int jobs = 1);

// Evaluation-mode accuracy of `params` over the given graph indices.
double evaluate_accuracy(const Dataset& data, const std::vector<int>& indices,
                         const ModelParams& params, BasisCache& cache);

// Max relative error between analytic gradients and central finite
// differences (step 1e-5) over every parameter of a random model on a random
// graph. Dropout is disabled for the check.
double gradient_check(std::uint64_t seed, int n_nodes);

}  // namespace sbgnn
