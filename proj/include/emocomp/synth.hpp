#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "emocomp/archive.hpp"
#include "emocomp/labels.hpp"
#include "emocomp/linalg.hpp"

namespace emocomp {

struct EmotionBoundary;  // emotion.hpp

/// Parameters of the synthetic embedding world. Every utterance is
/// x = speaker_center + emotion_offset + noise, with globally shared
/// emotion offsets (the neutral offset is zero).
struct WorldSpec {
  Eigen::Index dim = 192;
  int n_speakers = 20;
  int utts_per_speaker_per_emotion = 50;
  double speaker_spread = 1.0;     ///< sigma of speaker centers
  double emotion_magnitude = 4.0;  ///< norm of each non-neutral offset
  double noise = 0.5;              ///< per-utterance noise sigma
  /// Optional per-(speaker, emotion) offset perturbation for robustness
  /// studies; 0 keeps the single-hyperplane assumption exactly true.
  double speaker_emotion_jitter = 0.0;
  std::uint64_t seed = 1;
};

/// Ground truth behind a generated world.
struct WorldTruth {
  Eigen::MatrixXd speaker_centers;          ///< n_speakers x dim
  std::array<Embedding, 4> emotion_offsets; ///< indexed by EmotionLabel
  WorldSpec spec;
};

struct World {
  EmbeddingArchive archive;
  Manifest manifest;
  WorldTruth truth;
};

/// Generates the world deterministically from spec.seed. Utterance noise is
/// drawn from per-speaker derived seeds, so output does not depend on
/// generation order. The three non-neutral emotion directions are drawn on
/// the unit sphere, Gram-Schmidt orthogonalized, and scaled to
/// emotion_magnitude.
World gen_world(const WorldSpec& spec);

/// cos(boundary normal, u) where u is the unit vector along the contrast
/// direction o_e - mean(other offsets, neutral's zero included). Throws on
/// a neutral boundary.
double oracle_direction_alignment(const EmotionBoundary& boundary,
                                  const WorldTruth& truth);

/// Truth file: magic "TRU1", u32 dim, u32 n_speakers, centers then offsets
/// as little-endian float32 rows.
void write_truth(const std::filesystem::path& path, const WorldTruth& truth);
WorldTruth read_truth(const std::filesystem::path& path);

}  // namespace emocomp
