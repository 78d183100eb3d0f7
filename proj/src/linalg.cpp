#include "emocomp/linalg.hpp"

#include <cmath>
#include <string>

#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

namespace {
constexpr double kMinReflectorNorm = 1e-8;
constexpr double kUnitTolerance = 1e-6;

void check_reflector(const Embedding& v) {
  if (!v.allFinite()) {
    throw NumericError("reflector has non-finite coordinates");
  }
  const double n = v.norm();
  if (n < kMinReflectorNorm) {
    throw NumericError("reflector norm " + std::to_string(n) +
                       " below minimum " + std::to_string(kMinReflectorNorm));
  }
  if (std::abs(n - 1.0) > kUnitTolerance) {
    throw NumericError("reflector is not unit-normalized (norm " +
                       std::to_string(n) + ")");
  }
}
}  // namespace

void validate_embedding(const Embedding& x, const char* what) {
  if (x.size() < 2) {
    throw DataError(std::string(what) + ": dimension must be >= 2, got " +
                    std::to_string(x.size()));
  }
  if (!x.allFinite()) {
    throw DataError(std::string(what) + ": non-finite coordinates");
  }
}

OrthogonalChain make_chain(Eigen::Index dim, std::vector<Embedding> reflectors,
                           std::uint64_t seed) {
  if (dim < 2) {
    throw DataError("chain dimension must be >= 2, got " +
                    std::to_string(dim));
  }
  for (Embedding& v : reflectors) {
    require_same_dim(v.size(), dim, "make_chain");
    if (!v.allFinite()) {
      throw NumericError("reflector has non-finite coordinates");
    }
    const double n = v.norm();
    if (n < kMinReflectorNorm) {
      throw NumericError("reflector norm below 1e-8");
    }
    v /= n;
  }
  return OrthogonalChain{dim, seed, std::move(reflectors)};
}

Embedding householder_reflect(const Embedding& v, const Embedding& x) {
  require_same_dim(v.size(), x.size(), "householder_reflect");
  check_reflector(v);
  return x - 2.0 * v.dot(x) * v;
}

Embedding chain_apply(const OrthogonalChain& chain, const Embedding& x) {
  require_same_dim(x.size(), chain.dim, "chain_apply");
  Embedding y = x;
  for (const Embedding& v : chain.reflectors) {
    y -= 2.0 * v.dot(y) * v;
  }
  return y;
}

Embedding chain_inverse(const OrthogonalChain& chain, const Embedding& y) {
  require_same_dim(y.size(), chain.dim, "chain_inverse");
  Embedding x = y;
  for (auto it = chain.reflectors.rbegin(); it != chain.reflectors.rend();
       ++it) {
    x -= 2.0 * it->dot(x) * *it;
  }
  return x;
}

void chain_apply_rows(const OrthogonalChain& chain, EmbeddingMatrix& X) {
  require_same_dim(X.cols(), chain.dim, "chain_apply_rows");
  for (const Embedding& v : chain.reflectors) {
    // rank-1 update: X <- X - 2 (X v) v^T
    X.noalias() -= 2.0 * (X * v) * v.transpose();
  }
}

OrthogonalChain random_chain(Eigen::Index dim, int k, std::uint64_t seed) {
  if (dim < 2) {
    throw DataError("random_chain: dim must be >= 2, got " +
                    std::to_string(dim));
  }
  if (k < 1) {
    throw DataError("random_chain: K must be >= 1, got " + std::to_string(k));
  }
  Rng rng(seed);
  std::vector<Embedding> reflectors;
  reflectors.reserve(static_cast<std::size_t>(k));
  while (reflectors.size() < static_cast<std::size_t>(k)) {
    Embedding v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      v[i] = rng.normal();
    }
    const double n = v.norm();
    if (n < kMinReflectorNorm) {
      continue;  // resample; astronomically rare
    }
    reflectors.push_back(v / n);
  }
  return OrthogonalChain{dim, seed, std::move(reflectors)};
}

double orthogonality_check(const OrthogonalChain& chain) {
  if (chain.reflectors.empty()) {
    return 0.0;
  }
  const Eigen::Index d = chain.dim;
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, d);
  // columns are images of the basis vectors
  for (const Embedding& v : chain.reflectors) {
    q.noalias() -= 2.0 * v * (v.transpose() * q);
  }
  Eigen::MatrixXd gram = q.transpose() * q;
  gram.diagonal().array() -= 1.0;
  return gram.cwiseAbs().maxCoeff();
}

}  // namespace emocomp
