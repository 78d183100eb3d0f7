#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emocomp/archive.hpp"
#include "emocomp/labels.hpp"
#include "emocomp/linalg.hpp"

namespace emocomp {

/// One scored verification trial.
struct Trial {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;
  bool same_speaker = false;
};

struct TrialSet {
  std::vector<Trial> trials;

  std::vector<double> genuine_scores() const;
  std::vector<double> impostor_scores() const;
};

/// Equal-error operating point of a score set.
struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  /// Empirical rates evaluated at `threshold`; they differ from `eer` by at
  /// most one step of the empirical ROC.
  double p_fa_at_threshold = 0.0;
  double p_miss_at_threshold = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

/// cos(e, t) = e.t / (|e||t|). Throws NumericError on a zero vector.
double cosine_score(const Embedding& e, const Embedding& t);

/// Computes the EER of the two empirical error-rate curves.
///
/// Conventions (fixed so an independent dense-threshold sweep reproduces the
/// result bit-for-bit): P_miss(t) counts genuine scores < t, P_fa(t) counts
/// impostor scores >= t (accept on tie). The crossing of the two step
/// functions is linearly interpolated between the adjacent empirical
/// operating points; where the curves touch along a plateau the plateau
/// midpoint is returned as the threshold. The EER value depends only on
/// score ranks, so it is invariant under strictly increasing transforms.
EerResult compute_eer(const std::vector<double>& genuine,
                      const std::vector<double>& impostor);

/// 4x4 counts, rows = true label, cols = predicted label.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 4>, 4> counts{};

  std::uint64_t row_sum(int row) const;
};

ConfusionMatrix confusion_from_predictions(
    const std::vector<std::pair<EmotionLabel, EmotionLabel>>& pairs);

/// Unweighted average recall. Classes with zero support are excluded from
/// the mean (their recall slot is NaN and `included` is false).
struct UarResult {
  double uar = 0.0;
  std::array<double, 4> per_class_recall{};
  std::array<bool, 4> included{};
};

UarResult compute_uar(const ConfusionMatrix& cm);

/// Trial-list construction schemes. Genuine trials pair distinct utterances
/// of one speaker; impostor trials pair utterances of different speakers.
enum class TrialProtocol {
  kSameSessionGenuine,   ///< genuine trials only
  kCrossSpeakerImpostor, ///< impostor trials only
  kFull                  ///< both classes in one set
};

std::string_view trial_protocol_name(TrialProtocol protocol);

/// Enumerates unordered utterance pairs per the protocol, subsampled
/// deterministically to at most `max_trials` per class, and scores each
/// pair with cosine_score. The enroll side is drawn from `enroll`, the test
/// side from `test`; both must be indexed by the same manifest (pass the
/// same archive twice for the usual single-condition evaluation).
TrialSet build_trials(const EmbeddingArchive& enroll,
                      const EmbeddingArchive& test, const Manifest& manifest,
                      TrialProtocol protocol, std::size_t max_trials,
                      std::uint64_t seed);

}  // namespace emocomp
