#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace emocomp {

/// One utterance-level speaker embedding. Coordinates are unitless; the
/// dimension is carried by the vector itself (192 by convention).
using Embedding = Eigen::VectorXd;

/// Row-major matrix of embeddings, one utterance per row.
using EmbeddingMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Throws DataError if the vector is empty, shorter than 2 coordinates, or
/// contains non-finite values.
void validate_embedding(const Embedding& x, const char* what = "embedding");

/// An ordered composition of Householder reflections H_K ... H_2 H_1, an
/// exactly orthogonal map on R^dim. Reflectors are stored unit-normalized.
/// Chains are immutable after construction; all operations on them are
/// pure and safe to call concurrently.
struct OrthogonalChain {
  Eigen::Index dim = 0;
  std::uint64_t seed = 0;  ///< generator seed; 0 for trained chains
  std::vector<Embedding> reflectors;

  std::size_t size() const { return reflectors.size(); }
};

/// Builds a chain from raw reflector vectors, normalizing each to unit
/// length. Throws NumericError if any reflector has norm below 1e-8.
OrthogonalChain make_chain(Eigen::Index dim, std::vector<Embedding> reflectors,
                           std::uint64_t seed = 0);

/// Reflects x across the hyperplane orthogonal to the unit vector v:
/// returns x - 2 (v.x) v. Norm-preserving to machine precision.
Embedding householder_reflect(const Embedding& v, const Embedding& x);

/// Applies the reflectors in order. Norm-preserving and deterministic.
Embedding chain_apply(const OrthogonalChain& chain, const Embedding& x);

/// Applies the reflectors in reverse order; each reflection is its own
/// inverse, so chain_inverse(chain, chain_apply(chain, x)) == x.
Embedding chain_inverse(const OrthogonalChain& chain, const Embedding& y);

/// In-place batch apply: each row of X is transformed by the chain.
void chain_apply_rows(const OrthogonalChain& chain, EmbeddingMatrix& X);

/// Draws K reflectors i.i.d. from the unit sphere. Sphere sampling is d
/// standard normals followed by normalization; the generator is
/// mt19937_64 + Box-Muller (see Rng), so equal (dim, K, seed) triples give
/// byte-identical chains.
OrthogonalChain random_chain(Eigen::Index dim, int k, std::uint64_t seed);

/// Applies the chain to the standard basis, forming the image matrix Q,
/// and returns max |Q^T Q - I| entrywise. 0 for an empty chain.
double orthogonality_check(const OrthogonalChain& chain);

}  // namespace emocomp
