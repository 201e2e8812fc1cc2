#include "sbgnn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <vector>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"

namespace sbgnn {

Eigen::MatrixXd normalized_laplacian(Eigen::Ref<const Eigen::MatrixXd> a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ValidationError("adjacency must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a(i, i) != 0.0) {
      throw ValidationError("adjacency has a self-loop at node " + std::to_string(i));
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (a(i, j) != a(j, i)) {
        throw ValidationError("adjacency not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
      if (a(i, j) < 0.0) {
        throw ValidationError("negative edge weight at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
    }
  }

  const Eigen::VectorXd degree = a.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  }

  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    l(i, i) = degree(i) > 0.0 ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = -inv_sqrt(i) * a(i, j) * inv_sqrt(j);
      l(i, j) = v;
      l(j, i) = v;
    }
  }
  return l;
}

namespace {

double off_diagonal_norm(const Eigen::MatrixXd& a) {
  // Summed directly; subtracting the diagonal from the full norm cancels
  // catastrophically once the off-diagonal part is near machine precision.
  double ss = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (i != j) ss += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(ss);
}

}  // namespace

EighResult symmetric_eigh(Eigen::Ref<const Eigen::MatrixXd> m) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw ValidationError("eigh input must be square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    throw ValidationError("eigh input not symmetric: max |m - m^T| = " + io::format_double(asym));
  }

  Eigen::MatrixXd a = (m + m.transpose()) / 2.0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double target = 1e-12 * m.norm();
  constexpr int max_sweeps = 100;

  bool converged = off_diagonal_norm(a) <= target;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;

        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);  // avoids overflow in theta^2
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) /
              (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        // a <- J^T a J with J the (p,q) plane rotation; columns then rows.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) <= target;
  }
  if (!converged) {
    throw NumericalError("Jacobi eigensolver did not converge in 100 sweeps; residual " +
                         io::format_double(off_diagonal_norm(a)) + " vs target " +
                         io::format_double(target));
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

  EighResult result;
  result.values.resize(n);
  result.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    result.values(k) = a(order[k], order[k]);
    result.vectors.col(k) = v.col(order[k]);
    Eigen::Index arg = 0;
    result.vectors.col(k).cwiseAbs().maxCoeff(&arg);
    if (result.vectors(arg, k) < 0.0) result.vectors.col(k) = -result.vectors.col(k);
  }
  return result;
}

Eigen::MatrixXd gft(const SpectralBasis& basis, Eigen::Ref<const Eigen::MatrixXd> h) {
  if (h.rows() != basis.size()) {
    throw ValidationError("gft row count " + std::to_string(h.rows()) +
                          " does not match basis size " + std::to_string(basis.size()));
  }
  return basis.vectors.transpose() * h;
}

Eigen::MatrixXd igft(const SpectralBasis& basis, Eigen::Ref<const Eigen::MatrixXd> h_hat) {
  if (h_hat.rows() != basis.size()) {
    throw ValidationError("igft row count " + std::to_string(h_hat.rows()) +
                          " does not match basis size " + std::to_string(basis.size()));
  }
  return basis.vectors * h_hat;
}

std::uint64_t adjacency_key(Eigen::Ref<const Eigen::MatrixXd> a) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  auto mix = [&h](const std::string& s) {
    for (const unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
  };
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      mix(io::format_double(a(i, j)));
      mix(",");
    }
  }
  return h;
}

namespace {

// Checks the constructed basis against its Laplacian: orthonormal columns,
// small reconstruction residual, spectrum inside [0, 2] up to tolerance.
void validate_basis(const Eigen::MatrixXd& laplacian, const SpectralBasis& basis) {
  const Eigen::Index n = basis.size();
  const double ortho =
      (basis.vectors.transpose() * basis.vectors - Eigen::MatrixXd::Identity(n, n))
          .cwiseAbs()
          .maxCoeff();
  if (ortho >= 1e-8) {
    throw NumericalError("eigenbasis not orthonormal: max |U^T U - I| = " +
                         io::format_double(ortho));
  }
  const double residual =
      (laplacian * basis.vectors - basis.vectors * basis.values.asDiagonal())
          .cwiseAbs()
          .maxCoeff();
  if (residual >= 1e-8) {
    throw NumericalError("eigenbasis residual too large: max |LU - UL| = " +
                         io::format_double(residual));
  }
  if (n > 0) {
    if (basis.values(0) < -1e-9 || basis.values(n - 1) > 2.0 + 1e-9) {
      throw NumericalError("Laplacian spectrum outside [0, 2]: [" +
                           io::format_double(basis.values(0)) + ", " +
                           io::format_double(basis.values(n - 1)) + "]");
    }
  }
}

}  // namespace

const SpectralBasis& BasisCache::basis_for(const Graph& g) {
  const std::uint64_t key = adjacency_key(g.adjacency);
  {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it != entries_.end()) return *it->second;
  }

  const Eigen::MatrixXd laplacian = normalized_laplacian(g.adjacency);
  EighResult eig = symmetric_eigh(laplacian);
  auto basis = std::make_unique<const SpectralBasis>(
      SpectralBasis{std::move(eig.values), std::move(eig.vectors), key});
  validate_basis(laplacian, *basis);
  decompositions_.fetch_add(1);

  std::unique_lock lock(mutex_);
  const auto [it, inserted] = entries_.try_emplace(key, std::move(basis));
  return *it->second;  // first insertion wins
}

std::size_t BasisCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

const SpectralBasis& basis_for(BasisCache& cache, const Graph& g) {
  return cache.basis_for(g);
}

}  // namespace sbgnn
