#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <unordered_map>

#include "sbgnn/dataset.hpp"

namespace sbgnn {

// Eigendecomposition of a graph's normalized Laplacian. Column k of `vectors`
// pairs with `values(k)`; eigenvalues are ascending and, for nonnegative edge
// weights, confined to [0, 2] up to roundoff.
struct SpectralBasis {
  Eigen::VectorXd values;   // N, ascending
  Eigen::MatrixXd vectors;  // N x N, orthonormal columns
  std::uint64_t graph_key = 0;

  Eigen::Index size() const { return values.size(); }
};

// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes (zero degree) get an all-zero
// row and column, which keeps the multiplicity of eigenvalue 0 equal to the
// number of connected components. Input must be symmetric, nonnegative and
// hollow (zero diagonal); the output is exactly symmetric.
Eigen::MatrixXd normalized_laplacian(Eigen::Ref<const Eigen::MatrixXd> adjacency);

struct EighResult {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values(k)
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps until the
// off-diagonal Frobenius norm drops below 1e-12 * ||m||_F, capped at 100
// sweeps (NumericalError beyond that). Each eigenvector column is
// sign-normalized so its largest-magnitude component is positive (first such
// index on ties).
EighResult symmetric_eigh(Eigen::Ref<const Eigen::MatrixXd> m);

// Graph Fourier transform U^T h and its inverse U h_hat.
Eigen::MatrixXd gft(const SpectralBasis& basis, Eigen::Ref<const Eigen::MatrixXd> h);
Eigen::MatrixXd igft(const SpectralBasis& basis, Eigen::Ref<const Eigen::MatrixXd> h_hat);

// Content hash (FNV-1a over the 17-significant-digit serialization) of an
// adjacency matrix; identical graphs share a key across dataset reloads.
std::uint64_t adjacency_key(Eigen::Ref<const Eigen::MatrixXd> adjacency);

// Write-once basis cache: concurrent readers, exclusive insertion. A
// duplicated concurrent computation of the same key may happen; the first
// stored value wins and is returned to every caller thereafter.
class BasisCache {
 public:
  const SpectralBasis& basis_for(const Graph& g);

  std::size_t decompositions() const { return decompositions_.load(); }
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::uint64_t, std::unique_ptr<const SpectralBasis>> entries_;
  std::atomic<std::size_t> decompositions_{0};
};

const SpectralBasis& basis_for(BasisCache& cache, const Graph& g);

}  // namespace sbgnn
