#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "emocomp/labels.hpp"
#include "emocomp/linalg.hpp"

namespace emocomp {

/// A trained one-vs-rest linear separator for one emotion. The hyperplane
/// is { x : w.x + b = 0 }; n = w/|w| is the unit normal used for latent
/// editing, so compensation strengths have Euclidean-distance units.
struct EmotionBoundary {
  EmotionLabel emotion = EmotionLabel::kHappy;
  Embedding w;
  double b = 0.0;
  Embedding n;
  double dev_accuracy = 0.0;
};

struct SvmTrainConfig {
  double reg_c = 2.0;
  int epochs = 2000;
  double eta0 = 1.0;
};

/// Trains a one-vs-rest SVM for `target` by deterministic full-batch
/// subgradient descent on 0.5|w|^2 + C * mean_i hinge(y_i (w.x_i + b)) with
/// step eta_t = eta0 / (1 + t). The mean (rather than sum) form keeps the
/// optimum invariant under sample duplication. Dev accuracy is evaluated on
/// the held-out set.
EmotionBoundary train_emotion_svm(const std::vector<Embedding>& train_x,
                                  const std::vector<EmotionLabel>& train_y,
                                  const std::vector<Embedding>& dev_x,
                                  const std::vector<EmotionLabel>& dev_y,
                                  EmotionLabel target,
                                  const SvmTrainConfig& config = {});

/// Signed Euclidean distance from x to the boundary hyperplane:
/// n.x + b/|w|. Positive values lie on the target-emotion side; larger
/// means stronger.
double directional_distance(const Embedding& x,
                            const EmotionBoundary& boundary);

/// Latent edit z + alpha * n. Moves the directional distance by exactly
/// alpha; alpha = 0 returns z unchanged.
Embedding compensate(const Embedding& z, const EmotionBoundary& boundary,
                     double alpha);

/// Per-emotion signed compensation strengths. Defaults follow the
/// calibrated working point (35 everywhere, -35 for sad, 0 for neutral).
struct CompensationConfig {
  std::array<double, 4> alpha = {35.0, 0.0, -35.0, 35.0};
  bool skip_neutral = true;

  double alpha_for(EmotionLabel e) const { return alpha[label_index(e)]; }
};

/// Two affine layers with a ramp (max(0,.)) between them and a softmax
/// output: d -> hidden -> 4 emotion probabilities.
struct EmotionIndicator {
  Eigen::MatrixXd w1;  ///< hidden x d
  Eigen::VectorXd b1;  ///< hidden
  Eigen::MatrixXd w2;  ///< 4 x hidden
  Eigen::VectorXd b2;  ///< 4

  Eigen::Index dim() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }
};

struct IndicatorTrainConfig {
  int hidden = 128;
  int max_epochs = 500;
  double learning_rate = 0.5;
  /// Stop when dev loss fails to improve by min_delta for patience epochs.
  int patience = 10;
  double min_delta = 1e-5;
};

struct IndicatorTrainResult {
  EmotionIndicator indicator;
  double final_train_loss = 0.0;
  double best_dev_loss = 0.0;
  int epochs_run = 0;
};

/// Full-batch gradient descent on softmax cross-entropy, deterministic for
/// a fixed seed. Aborts with NumericError if the loss exceeds 1e6.
IndicatorTrainResult train_indicator(const std::vector<Embedding>& train_x,
                                     const std::vector<EmotionLabel>& train_y,
                                     const std::vector<Embedding>& dev_x,
                                     const std::vector<EmotionLabel>& dev_y,
                                     std::uint64_t seed,
                                     const IndicatorTrainConfig& config = {});

/// Softmax probabilities for one embedding.
Eigen::Vector4d indicator_probs(const EmotionIndicator& ind,
                                const Embedding& x);

/// Argmax of the softmax output; exact ties resolve to the earlier label in
/// the order happy < neutral < sad < angry.
std::pair<EmotionLabel, Eigen::Vector4d> predict_emotion(
    const Embedding& x, const EmotionIndicator& ind);

/// Loss and analytic gradients of the indicator at the given parameters,
/// exposed for finite-difference verification.
struct IndicatorGradients {
  double loss = 0.0;
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};
IndicatorGradients indicator_loss_and_gradients(
    const EmotionIndicator& ind, const std::vector<Embedding>& x,
    const std::vector<EmotionLabel>& y);

/// Predicts the emotion from the original embedding (never from the
/// anonymized one), then edits the anonymized embedding along the matching
/// boundary normal. Neutral predictions skip the edit when
/// config.skip_neutral is set.
std::pair<Embedding, EmotionLabel> compensate_pipeline(
    const Embedding& x_orig, const Embedding& z_anon,
    const std::array<EmotionBoundary, 4>& boundaries,
    const EmotionIndicator& indicator, const CompensationConfig& config);

/// Per-emotion recall table over a grid of compensation strengths, using
/// authentic labels to select the SVM (the calibration protocol).
struct AlphaSweepTable {
  std::vector<double> grid;
  /// recall[e][g]: recall of emotion e when its utterances are compensated
  /// with grid[g]. The neutral row is constant (never compensated).
  std::array<std::vector<double>, 4> recall;
  /// uar[g]: mean over classes when every non-neutral emotion uses grid[g].
  std::vector<double> uar;
};

AlphaSweepTable sweep_alpha(const std::vector<EmotionLabel>& dev_labels,
                            const std::vector<Embedding>& dev_anon,
                            const std::array<EmotionBoundary, 4>& boundaries,
                            const EmotionIndicator& reference,
                            const std::vector<double>& grid);

struct CalibrationResult {
  CompensationConfig config;
  AlphaSweepTable table;
};

/// Selects, independently per non-neutral emotion, the grid value
/// maximizing that emotion's recall under the reference classifier; ties
/// break toward smaller |alpha|, then toward the positive sign. Neutral is
/// fixed at 0.
CalibrationResult calibrate_alpha(
    const std::vector<EmotionLabel>& dev_labels,
    const std::vector<Embedding>& dev_anon,
    const std::array<EmotionBoundary, 4>& boundaries,
    const EmotionIndicator& reference, const std::vector<double>& grid);

/// Boundary file: per-emotion records "SVM1", u32 dim, u8 emotion id,
/// f32 bias, dim x f32 weights; the four records are concatenated in label
/// order.
void write_boundaries(const std::filesystem::path& path,
                      const std::array<EmotionBoundary, 4>& boundaries);
std::array<EmotionBoundary, 4> read_boundaries(
    const std::filesystem::path& path);

/// Indicator file: "IND1", u32 dim, u32 hidden, u32 classes, then W1, b1,
/// W2, b2 as row-major little-endian float32.
void write_indicator(const std::filesystem::path& path,
                     const EmotionIndicator& ind);
EmotionIndicator read_indicator(const std::filesystem::path& path);

}  // namespace emocomp
