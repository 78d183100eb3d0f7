#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "emocomp/emotion.hpp"
#include "emocomp/error.hpp"
#include "emocomp/eval.hpp"
#include "emocomp/pipeline.hpp"
#include "emocomp/rng.hpp"
#include "emocomp/synth.hpp"
#include "support/oracles.hpp"

using namespace emocomp;
using emocomp::testing::finite_difference_gradient;
using emocomp::testing::max_relative_error;

namespace {

Embedding random_vector(Rng& rng, Eigen::Index dim, double scale = 1.0) {
  Embedding v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = scale * rng.normal();
  return v;
}

/// Axis-aligned boundary with w = 2 e0 and b = -4: the plane is x0 = 2.
EmotionBoundary axis_boundary(Eigen::Index dim, EmotionLabel e) {
  EmotionBoundary b;
  b.emotion = e;
  b.w = Embedding::Zero(dim);
  b.w[0] = 2.0;
  b.b = -4.0;
  b.n = b.w.normalized();
  return b;
}

}  // namespace

TEST_CASE("nine-to-four label mapping") {
  CHECK(map_nine_to_four(RawEmotion::kAngry) == EmotionLabel::kAngry);
  CHECK(map_nine_to_four(RawEmotion::kDisgusted) == EmotionLabel::kSad);
  CHECK(map_nine_to_four(RawEmotion::kFearful) == EmotionLabel::kSad);
  CHECK(map_nine_to_four(RawEmotion::kSad) == EmotionLabel::kSad);
  CHECK(map_nine_to_four(RawEmotion::kHappy) == EmotionLabel::kHappy);
  CHECK(map_nine_to_four(RawEmotion::kSurprised) == EmotionLabel::kHappy);
  CHECK(map_nine_to_four(RawEmotion::kNeutral) == EmotionLabel::kNeutral);
  CHECK(map_nine_to_four(RawEmotion::kOther) == EmotionLabel::kNeutral);
  CHECK(map_nine_to_four(RawEmotion::kUnknown) == EmotionLabel::kNeutral);
}

TEST_CASE("label order is fixed for confusion indexing") {
  CHECK(label_index(EmotionLabel::kHappy) == 0);
  CHECK(label_index(EmotionLabel::kNeutral) == 1);
  CHECK(label_index(EmotionLabel::kSad) == 2);
  CHECK(label_index(EmotionLabel::kAngry) == 3);
  CHECK(label_from_name("sad") == EmotionLabel::kSad);
  CHECK(label_from_name("joyful") == std::nullopt);
}

TEST_CASE("svm recovers the max-margin direction on a separable toy") {
  Rng rng(19);
  std::vector<Embedding> x;
  std::vector<EmotionLabel> y;
  for (int i = 0; i < 40; ++i) {
    Embedding p(2);
    p << 2.0 + 0.3 * rng.normal(), 0.3 * rng.normal();
    x.push_back(p);
    y.push_back(EmotionLabel::kHappy);
    Embedding n(2);
    n << -2.0 + 0.3 * rng.normal(), 0.3 * rng.normal();
    x.push_back(n);
    y.push_back(EmotionLabel::kNeutral);
  }
  const EmotionBoundary boundary =
      train_emotion_svm(x, y, x, y, EmotionLabel::kHappy);
  // the analytic max-margin normal is e0; allow 5 degrees
  CHECK(boundary.n[0] >= std::cos(5.0 * M_PI / 180.0));
  CHECK(boundary.dev_accuracy == doctest::Approx(1.0));

  SUBCASE("duplicating every sample leaves the normal unchanged") {
    std::vector<Embedding> x2;
    std::vector<EmotionLabel> y2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x2.push_back(x[i]);
      x2.push_back(x[i]);
      y2.push_back(y[i]);
      y2.push_back(y[i]);
    }
    const EmotionBoundary doubled =
        train_emotion_svm(x2, y2, x, y, EmotionLabel::kHappy);
    CHECK((doubled.n - boundary.n).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(doubled.b - boundary.b) < 1e-9);
  }
}

TEST_CASE("svm input validation") {
  Rng rng(3);
  std::vector<Embedding> x = {random_vector(rng, 4), random_vector(rng, 4)};
  std::vector<EmotionLabel> same = {EmotionLabel::kSad, EmotionLabel::kSad};
  CHECK_THROWS_AS(train_emotion_svm(x, same, {}, {}, EmotionLabel::kSad),
                  DataError);
  CHECK_THROWS_AS(train_emotion_svm(x, same, {}, {}, EmotionLabel::kHappy),
                  DataError);
  std::vector<EmotionLabel> mixed = {EmotionLabel::kSad, EmotionLabel::kHappy};
  Embedding bad = random_vector(rng, 4);
  bad[2] = std::numeric_limits<double>::infinity();
  std::vector<Embedding> with_bad = {x[0], bad};
  CHECK_THROWS_AS(
      train_emotion_svm(with_bad, mixed, {}, {}, EmotionLabel::kSad),
      DataError);
}

TEST_CASE("directional distance") {
  const EmotionBoundary boundary = axis_boundary(4, EmotionLabel::kHappy);
  SUBCASE("zero on the hyperplane") {
    Embedding on(4);
    on << 2.0, 5.0, -1.0, 0.5;  // w.x + b = 0
    CHECK(std::abs(directional_distance(on, boundary)) < 1e-12);
  }
  SUBCASE("moving along the normal moves the distance by exactly t") {
    Embedding base(4);
    base << 2.0, -3.0, 1.0, 7.0;
    for (double t : {-3.0, 1.0, 7.0}) {
      const Embedding x = base + t * boundary.n;
      CHECK(directional_distance(x, boundary) == doctest::Approx(t).epsilon(1e-12));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(directional_distance(Embedding::Ones(5), boundary),
                    DimensionError);
  }
}

TEST_CASE("compensation moves the directional distance by alpha") {
  Rng rng(27);
  EmotionBoundary boundary;
  boundary.emotion = EmotionLabel::kSad;
  boundary.w = random_vector(rng, 24, 3.0);
  boundary.b = rng.normal();
  boundary.n = boundary.w.normalized();

  SUBCASE("alpha = 0 is the identity") {
    const Embedding z = random_vector(rng, 24);
    CHECK((compensate(z, boundary, 0.0) - z).norm() == 0.0);
  }
  SUBCASE("random (z, alpha) pairs") {
    for (int trial = 0; trial < 200; ++trial) {
      const Embedding z = random_vector(rng, 24, 5.0);
      const double alpha = 100.0 * (rng.uniform() - 0.5);
      const Embedding edited = compensate(z, boundary, alpha);
      CHECK(std::abs(boundary.n.dot(edited) - boundary.n.dot(z) - alpha) <
            1e-9);
      CHECK(std::abs(directional_distance(edited, boundary) -
                     directional_distance(z, boundary) - alpha) < 1e-9);
      if (alpha > 0) {
        CHECK(boundary.n.dot(edited) > boundary.n.dot(z));
      }
    }
  }
  SUBCASE("default working points") {
    const Embedding z = random_vector(rng, 24, 5.0);
    CHECK(std::abs(directional_distance(compensate(z, boundary, 35.0),
                                        boundary) -
                   directional_distance(z, boundary) - 35.0) < 1e-9);
    CHECK(std::abs(directional_distance(compensate(z, boundary, -35.0),
                                        boundary) -
                   directional_distance(z, boundary) + 35.0) < 1e-9);
  }
  SUBCASE("composition is additive") {
    const Embedding z = random_vector(rng, 24);
    const Embedding once = compensate(z, boundary, 11.5);
    const Embedding twice = compensate(once, boundary, -4.25);
    const Embedding direct = compensate(z, boundary, 11.5 - 4.25);
    CHECK((twice - direct).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(compensate(Embedding::Ones(5), boundary, 1.0),
                    DimensionError);
    CHECK_THROWS_AS(
        compensate(Embedding::Ones(24), boundary, std::nan("")),
        DataError);
  }
}

TEST_CASE("boundary normals are speaker-invariant on the synthetic world") {
  WorldSpec spec;
  spec.dim = 96;
  spec.n_speakers = 12;
  spec.utts_per_speaker_per_emotion = 20;
  spec.seed = 13;
  const World world = gen_world(spec);

  const auto gather_speakers = [&](int lo, int hi) {
    LabeledEmbeddings data;
    for (const ManifestRow& row : world.manifest.rows) {
      const int s = std::stoi(row.speaker_id.substr(1));
      if (s >= lo && s < hi && row.emotion) {
        data.x.push_back(world.archive.rows[row.row_index]);
        data.y.push_back(*row.emotion);
      }
    }
    return data;
  };
  const LabeledEmbeddings first = gather_speakers(0, 6);
  const LabeledEmbeddings second = gather_speakers(6, 12);

  for (EmotionLabel e :
       {EmotionLabel::kHappy, EmotionLabel::kSad, EmotionLabel::kAngry}) {
    const EmotionBoundary a =
        train_emotion_svm(first.x, first.y, first.x, first.y, e);
    const EmotionBoundary b =
        train_emotion_svm(second.x, second.y, second.x, second.y, e);
    CHECK(a.n.dot(b.n) >= 0.8);
  }
}

TEST_CASE("directional-distance argmax agrees with the indicator") {
  WorldSpec spec;
  spec.dim = 64;
  spec.n_speakers = 8;
  spec.utts_per_speaker_per_emotion = 15;
  spec.seed = 29;
  const World world = gen_world(spec);
  const Splits splits = make_splits(world.manifest, SplitConfig{}, 4);
  const LabeledEmbeddings train =
      gather_labeled(world.archive, world.manifest, splits.train);
  const LabeledEmbeddings dev =
      gather_labeled(world.archive, world.manifest, splits.dev);

  std::array<EmotionBoundary, 4> boundaries;
  for (EmotionLabel e : kAllEmotions) {
    boundaries[label_index(e)] =
        train_emotion_svm(train.x, train.y, dev.x, dev.y, e);
  }
  IndicatorTrainConfig cfg;
  cfg.max_epochs = 150;
  const EmotionIndicator indicator =
      train_indicator(train.x, train.y, dev.x, dev.y, 17, cfg).indicator;

  std::size_t agree = 0;
  for (const Embedding& x : dev.x) {
    int best = 0;
    for (int k = 1; k < kNumEmotions; ++k) {
      if (directional_distance(x, boundaries[k]) >
          directional_distance(x, boundaries[best])) {
        best = k;
      }
    }
    if (static_cast<EmotionLabel>(best) == predict_emotion(x, indicator).first) {
      ++agree;
    }
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(dev.x.size()) >=
        0.85);
}

TEST_CASE("indicator gradients match finite differences") {
  Rng rng(55);
  const Eigen::Index d = 8;
  const int hidden = 6;
  std::vector<Embedding> x;
  std::vector<EmotionLabel> y;
  for (int i = 0; i < 24; ++i) {
    x.push_back(random_vector(rng, d, 1.5));
    y.push_back(static_cast<EmotionLabel>(i % 4));
  }
  EmotionIndicator ind;
  ind.w1.resize(hidden, d);
  ind.w2.resize(4, hidden);
  ind.b1.resize(hidden);
  ind.b2.resize(4);
  for (Eigen::Index i = 0; i < ind.w1.size(); ++i) {
    ind.w1.data()[i] = 0.4 * rng.normal();
  }
  for (Eigen::Index i = 0; i < ind.w2.size(); ++i) {
    ind.w2.data()[i] = 0.4 * rng.normal();
  }
  for (int i = 0; i < hidden; ++i) ind.b1[i] = 0.1 * rng.normal();
  for (int i = 0; i < 4; ++i) ind.b2[i] = 0.1 * rng.normal();

  const IndicatorGradients grads = indicator_loss_and_gradients(ind, x, y);

  const Eigen::Index n1 = ind.w1.size(), nb1 = ind.b1.size(),
                     n2 = ind.w2.size(), nb2 = ind.b2.size();
  Eigen::VectorXd params(n1 + nb1 + n2 + nb2);
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n1; ++i) params[at++] = ind.w1.data()[i];
  for (Eigen::Index i = 0; i < nb1; ++i) params[at++] = ind.b1[i];
  for (Eigen::Index i = 0; i < n2; ++i) params[at++] = ind.w2.data()[i];
  for (Eigen::Index i = 0; i < nb2; ++i) params[at++] = ind.b2[i];

  const auto loss_at = [&](const Eigen::VectorXd& p) {
    EmotionIndicator probe = ind;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n1; ++i) probe.w1.data()[i] = p[k++];
    for (Eigen::Index i = 0; i < nb1; ++i) probe.b1[i] = p[k++];
    for (Eigen::Index i = 0; i < n2; ++i) probe.w2.data()[i] = p[k++];
    for (Eigen::Index i = 0; i < nb2; ++i) probe.b2[i] = p[k++];
    return indicator_loss_and_gradients(probe, x, y).loss;
  };

  const Eigen::VectorXd fd = finite_difference_gradient(loss_at, params);
  Eigen::VectorXd analytic(params.size());
  at = 0;
  for (Eigen::Index i = 0; i < n1; ++i) analytic[at++] = grads.w1.data()[i];
  for (Eigen::Index i = 0; i < nb1; ++i) analytic[at++] = grads.b1[i];
  for (Eigen::Index i = 0; i < n2; ++i) analytic[at++] = grads.w2.data()[i];
  for (Eigen::Index i = 0; i < nb2; ++i) analytic[at++] = grads.b2[i];
  CHECK(max_relative_error(analytic, fd) < 1e-4);
}

TEST_CASE("indicator trains to high UAR on a separable world") {
  WorldSpec spec;
  spec.dim = 64;
  spec.n_speakers = 8;
  spec.utts_per_speaker_per_emotion = 15;
  spec.seed = 41;
  const World world = gen_world(spec);
  const Splits splits = make_splits(world.manifest, SplitConfig{}, 9);
  const LabeledEmbeddings train =
      gather_labeled(world.archive, world.manifest, splits.train);
  const LabeledEmbeddings dev =
      gather_labeled(world.archive, world.manifest, splits.dev);
  const LabeledEmbeddings held =
      gather_labeled(world.archive, world.manifest, splits.eval);

  const IndicatorTrainResult result =
      train_indicator(train.x, train.y, dev.x, dev.y, 31);
  CHECK(result.epochs_run <= 500);

  const auto uar_of = [&](const LabeledEmbeddings& data) {
    std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      pairs.emplace_back(data.y[i],
                         predict_emotion(data.x[i], result.indicator).first);
    }
    return compute_uar(confusion_from_predictions(pairs)).uar;
  };
  CHECK(uar_of(dev) >= 0.95);
  CHECK(uar_of(held) >= 0.9);

  SUBCASE("training is deterministic") {
    const IndicatorTrainResult again =
        train_indicator(train.x, train.y, dev.x, dev.y, 31);
    CHECK((again.indicator.w1 - result.indicator.w1).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(again.best_dev_loss == result.best_dev_loss);
  }
}

TEST_CASE("indicator edge cases") {
  Rng rng(66);
  SUBCASE("prediction on the zero embedding is a valid distribution") {
    EmotionIndicator ind;
    ind.w1 = Eigen::MatrixXd::Zero(4, 6);
    ind.b1 = Eigen::VectorXd::Zero(4);
    ind.w2 = Eigen::MatrixXd::Zero(4, 4);
    ind.b2 = Eigen::VectorXd::Zero(4);
    const auto [label, probs] = predict_emotion(Embedding::Zero(6), ind);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-9);
    // exact four-way tie resolves to the first label in order
    CHECK(label == EmotionLabel::kHappy);
    for (int i = 0; i < 4; ++i) CHECK(probs[i] == doctest::Approx(0.25));
  }
  SUBCASE("missing class in train or dev") {
    std::vector<Embedding> x;
    std::vector<EmotionLabel> y;
    for (int i = 0; i < 12; ++i) {
      x.push_back(random_vector(rng, 6));
      y.push_back(static_cast<EmotionLabel>(i % 3));  // angry absent
    }
    CHECK_THROWS_AS(train_indicator(x, y, x, y, 1), DataError);
  }
  SUBCASE("divergence aborts with a diagnostic") {
    std::vector<Embedding> x;
    std::vector<EmotionLabel> y;
    for (int i = 0; i < 16; ++i) {
      x.push_back(random_vector(rng, 6, 3.0));
      y.push_back(static_cast<EmotionLabel>(i % 4));
    }
    IndicatorTrainConfig cfg;
    cfg.learning_rate = 1e18;
    CHECK_THROWS_AS(train_indicator(x, y, x, y, 1, cfg), NumericError);
  }
}

namespace {

/// Indicator that always predicts the given label, regardless of input.
EmotionIndicator constant_indicator(Eigen::Index dim, EmotionLabel always) {
  EmotionIndicator ind;
  ind.w1 = Eigen::MatrixXd::Zero(3, dim);
  ind.b1 = Eigen::VectorXd::Zero(3);
  ind.w2 = Eigen::MatrixXd::Zero(4, 3);
  ind.b2 = Eigen::VectorXd::Zero(4);
  ind.b2[label_index(always)] = 10.0;
  return ind;
}

std::array<EmotionBoundary, 4> axis_boundaries(Eigen::Index dim) {
  std::array<EmotionBoundary, 4> boundaries;
  for (EmotionLabel e : kAllEmotions) {
    EmotionBoundary b;
    b.emotion = e;
    b.w = Embedding::Zero(dim);
    b.w[label_index(e)] = 1.0;
    b.b = 0.0;
    b.n = b.w;
    boundaries[label_index(e)] = std::move(b);
  }
  return boundaries;
}

}  // namespace

TEST_CASE("compensate_pipeline") {
  Rng rng(70);
  const Eigen::Index d = 16;
  const auto boundaries = axis_boundaries(d);
  const Embedding x_orig = random_vector(rng, d);
  const Embedding z_anon = random_vector(rng, d);
  CompensationConfig config;

  SUBCASE("neutral predictions skip the edit") {
    const auto ind = constant_indicator(d, EmotionLabel::kNeutral);
    const auto [z, chosen] =
        compensate_pipeline(x_orig, z_anon, boundaries, ind, config);
    CHECK(chosen == EmotionLabel::kNeutral);
    CHECK((z - z_anon).norm() == 0.0);
  }
  SUBCASE("happy predictions move the happy distance by +35") {
    const auto ind = constant_indicator(d, EmotionLabel::kHappy);
    const auto [z, chosen] =
        compensate_pipeline(x_orig, z_anon, boundaries, ind, config);
    CHECK(chosen == EmotionLabel::kHappy);
    CHECK(std::abs(directional_distance(z, boundaries[0]) -
                   directional_distance(z_anon, boundaries[0]) - 35.0) <
          1e-9);
  }
  SUBCASE("sad uses the calibrated negative strength") {
    const auto ind = constant_indicator(d, EmotionLabel::kSad);
    const auto [z, chosen] =
        compensate_pipeline(x_orig, z_anon, boundaries, ind, config);
    CHECK(chosen == EmotionLabel::kSad);
    CHECK(std::abs(directional_distance(z, boundaries[2]) -
                   directional_distance(z_anon, boundaries[2]) + 35.0) <
          1e-9);
  }
  SUBCASE("matches the oracle-label path when the prediction is right") {
    const auto ind = constant_indicator(d, EmotionLabel::kAngry);
    const auto [z, chosen] =
        compensate_pipeline(x_orig, z_anon, boundaries, ind, config);
    const Embedding oracle = compensate(z_anon, boundaries[3],
                                        config.alpha_for(EmotionLabel::kAngry));
    CHECK((z - oracle).norm() == 0.0);
  }
  SUBCASE("missing boundary is an error") {
    auto broken = boundaries;
    broken[0].n.resize(0);
    const auto ind = constant_indicator(d, EmotionLabel::kHappy);
    CHECK_THROWS_AS(
        compensate_pipeline(x_orig, z_anon, broken, ind, config), DataError);
  }
}

TEST_CASE("alpha calibration") {
  Rng rng(81);
  const Eigen::Index d = 16;
  const auto boundaries = axis_boundaries(d);

  std::vector<EmotionLabel> labels;
  std::vector<Embedding> anon;
  for (int i = 0; i < 80; ++i) {
    labels.push_back(static_cast<EmotionLabel>(i % 4));
    anon.push_back(random_vector(rng, d, 0.3));
  }

  SUBCASE("grid {0} keeps the uncompensated baseline") {
    // a real reference: logits read the first four coordinates
    EmotionIndicator ind;
    ind.w1 = Eigen::MatrixXd::Zero(4, d);
    for (int k = 0; k < 4; ++k) ind.w1(k, k) = 1.0;
    ind.b1 = Eigen::VectorXd::Zero(4);
    ind.w2 = Eigen::MatrixXd::Identity(4, 4);
    ind.b2 = Eigen::VectorXd::Zero(4);

    const CalibrationResult result =
        calibrate_alpha(labels, anon, boundaries, ind, {0.0});
    for (EmotionLabel e : kAllEmotions) {
      CHECK(result.config.alpha[label_index(e)] == 0.0);
    }
    // the sweep row at alpha 0 must equal the plain prediction recall
    std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
    for (std::size_t i = 0; i < anon.size(); ++i) {
      pairs.emplace_back(labels[i], predict_emotion(anon[i], ind).first);
    }
    const UarResult base = compute_uar(confusion_from_predictions(pairs));
    CHECK(result.table.uar[0] == doctest::Approx(base.uar));
  }

  SUBCASE("ties break toward smaller magnitude, then positive sign") {
    const auto ind = constant_indicator(d, EmotionLabel::kHappy);
    // constant predictions: recall is flat in alpha for every emotion
    const CalibrationResult result = calibrate_alpha(
        labels, anon, boundaries, ind, {-35.0, 35.0, -20.0, 20.0, 50.0});
    CHECK(result.config.alpha[label_index(EmotionLabel::kHappy)] == 20.0);
    CHECK(result.config.alpha[label_index(EmotionLabel::kSad)] == 20.0);
    CHECK(result.config.alpha[label_index(EmotionLabel::kAngry)] == 20.0);
    CHECK(result.config.alpha[label_index(EmotionLabel::kNeutral)] == 0.0);
  }

  SUBCASE("empty grid and missing emotions are rejected") {
    const auto ind = constant_indicator(d, EmotionLabel::kHappy);
    CHECK_THROWS_AS(calibrate_alpha(labels, anon, boundaries, ind, {}),
                    DataError);
    std::vector<EmotionLabel> no_sad;
    std::vector<Embedding> no_sad_x;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != EmotionLabel::kSad) {
        no_sad.push_back(labels[i]);
        no_sad_x.push_back(anon[i]);
      }
    }
    CHECK_THROWS_AS(
        calibrate_alpha(no_sad, no_sad_x, boundaries, ind, {0.0, 1.0}),
        DataError);
  }

  SUBCASE("calibration picks a strength that lifts recall") {
    // reference reads the first four coordinates as class evidence
    EmotionIndicator ind;
    ind.w1 = Eigen::MatrixXd::Zero(4, d);
    for (int k = 0; k < 4; ++k) ind.w1(k, k) = 1.0;
    ind.b1 = Eigen::VectorXd::Zero(4);
    ind.w2 = Eigen::MatrixXd::Identity(4, 4);
    ind.b2 = Eigen::VectorXd::Zero(4);

    const CalibrationResult result = calibrate_alpha(
        labels, anon, boundaries, ind, {-20.0, 0.0, 20.0});
    for (EmotionLabel e :
         {EmotionLabel::kHappy, EmotionLabel::kSad, EmotionLabel::kAngry}) {
      CHECK(result.config.alpha[label_index(e)] == 20.0);
      // at the chosen strength recall is perfect on this toy
      const auto& recalls = result.table.recall[label_index(e)];
      CHECK(recalls[2] == doctest::Approx(1.0));
    }
  }
}
