#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "emocomp/linalg.hpp"

namespace emocomp {

enum class AnonymizerMode {
  kTrainedChain,
  kRandomChainSpeakerLevel,
  kRandomChainUtteranceLevel,
  kSelectionAverage
};

std::string_view anonymizer_mode_name(AnonymizerMode mode);
AnonymizerMode anonymizer_mode_from_name(std::string_view name);

/// Training hyperparameters for the rotation-chain anonymizer. The loss is
/// lambda_cls * L_aam + lambda_push * mean(max(0, cos(x, OH(x)) - cos_margin)),
/// where L_aam is additive-angular-margin softmax over speaker identities
/// on the rotated embeddings against jointly trained class directions.
struct TrainConfig {
  int epochs = 200;
  double step_size = 0.05;
  double cos_margin = 0.2;
  double lambda_cls = 1.0;
  double lambda_push = 1.0;
  double aam_margin = 0.2;
  double aam_scale = 16.0;
};

struct AnonymizerConfig {
  AnonymizerMode mode = AnonymizerMode::kRandomChainUtteranceLevel;
  /// K. A K-reflection product acts as the identity on a (dim-K)-dim
  /// subspace, so random chains need K >= dim to scramble every direction;
  /// the default covers the 192-dim convention twice over. Trained chains
  /// can be much shallower because the reflectors adapt to the data
  /// subspace.
  int reflectors_per_chain = 384;
  int pool_size = 64;  ///< R, utterance-level chain pool
  int select_n = 10;   ///< embeddings averaged in selection mode
  std::uint64_t seed = 0;
  TrainConfig training;
};

/// (x - mean(x)) / std(x) over the coordinates of this single vector
/// (population std). Applied at export time only, mirroring the synthesis
/// convention; throws NumericError when std <= 1e-12.
Embedding instance_normalize(const Embedding& x);

/// Rotates x with the chain; exactly the chain application, named for the
/// pipeline role.
Embedding anonymize_ohnn(const Embedding& x, const OrthogonalChain& chain);

/// Selects chain hash(utt_seed) mod pool size (SplitMix64 finalizer, not an
/// RNG stream, so results are independent of processing order) and applies
/// it. Returns the embedding and the chosen index for audit logs.
std::pair<Embedding, std::size_t> anonymize_utterance_level(
    const Embedding& x, const std::vector<OrthogonalChain>& chain_pool,
    std::uint64_t utt_seed);

/// Builds the utterance-level chain pool: pool_size chains with seeds
/// derived from `seed`.
std::vector<OrthogonalChain> build_chain_pool(Eigen::Index dim, int k,
                                              int pool_size,
                                              std::uint64_t seed);

/// Selection-based baseline: draws select_n distinct pool members with the
/// seeded generator, averages them, and rescales the mean to the average
/// norm of the selected vectors. The source embedding only fixes the
/// expected dimension. Throws NumericError if the mean collapses below
/// 1e-8.
Embedding anonymize_selection(const Embedding& x,
                              const std::vector<Embedding>& pool, int select_n,
                              std::uint64_t seed);

/// Loss and analytic gradients at the given parameters, exposed for
/// finite-difference verification. Rows of `reflectors` are Householder
/// vectors (any nonzero scale; the map is scale-invariant), rows of
/// `class_dirs` are per-speaker directions.
struct OhnnGradients {
  double loss = 0.0;
  double loss_cls = 0.0;
  double loss_push = 0.0;
  Eigen::MatrixXd reflectors;
  Eigen::MatrixXd class_dirs;
};

OhnnGradients ohnn_loss_and_gradients(const Eigen::MatrixXd& reflectors,
                                      const Eigen::MatrixXd& class_dirs,
                                      const EmbeddingMatrix& x,
                                      const std::vector<int>& speaker,
                                      int n_speakers,
                                      const TrainConfig& config);

struct OhnnTrainResult {
  OrthogonalChain chain;
  std::vector<double> loss_history;  ///< train loss before each update
  double final_train_loss = 0.0;
  double final_dev_loss = 0.0;
};

/// Trains a K-reflector chain by deterministic full-batch gradient descent.
/// Reflectors are unconstrained vectors re-normalized to unit length after
/// each update; the reflection uses the projective form
/// x - 2 (v.x)/(v.v) v, so the map stays exactly orthogonal throughout.
/// speaker ids must be 0..n_speakers-1 with at least two speakers and two
/// utterances each.
OhnnTrainResult train_ohnn(const std::vector<Embedding>& train_x,
                           const std::vector<int>& train_speaker,
                           const std::vector<Embedding>& dev_x,
                           const std::vector<int>& dev_speaker, int k,
                           std::uint64_t seed, const TrainConfig& config = {});

/// Chain file: "OHC1", u32 dim, u32 K, K x dim little-endian float32
/// reflectors. Reflectors are re-normalized in float64 on load.
void write_chain(const std::filesystem::path& path,
                 const OrthogonalChain& chain);
OrthogonalChain read_chain(const std::filesystem::path& path);

}  // namespace emocomp
