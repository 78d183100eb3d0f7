#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "emocomp/error.hpp"
#include "emocomp/eval.hpp"
#include "emocomp/linalg.hpp"
#include "emocomp/rng.hpp"
#include "support/oracles.hpp"

using namespace emocomp;
using emocomp::testing::brute_force_eer;

namespace {

std::vector<double> lattice_scores(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& s : out) {
    s = static_cast<double>(rng.index(513)) / 512.0;
  }
  return out;
}

Embedding random_vector(Rng& rng, Eigen::Index dim) {
  Embedding v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("cosine_score basics") {
  Embedding e(3), t(3);
  e << 1, 2, 3;
  t << 1, 2, 3;
  CHECK(cosine_score(e, t) == doctest::Approx(1.0).epsilon(1e-12));

  t << -2, 1, 0;
  CHECK(cosine_score(e, t) == doctest::Approx(0.0));
  CHECK(cosine_score(e, t) == cosine_score(t, e));

  Embedding zero = Embedding::Zero(3);
  CHECK_THROWS_AS(cosine_score(e, zero), NumericError);
  CHECK_THROWS_AS(cosine_score(e, Embedding::Ones(4)), DimensionError);
}

TEST_CASE("cosine is invariant under orthogonal chains") {
  Rng rng(14);
  const OrthogonalChain chain = random_chain(48, 12, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Embedding e = random_vector(rng, 48);
    const Embedding t = random_vector(rng, 48);
    CHECK(std::abs(cosine_score(chain_apply(chain, e), chain_apply(chain, t)) -
                   cosine_score(e, t)) < 1e-9);
  }
}

TEST_CASE("EER on hand-checked cases") {
  SUBCASE("perfect separation is exactly zero") {
    const EerResult r = compute_eer({0.9, 0.8}, {0.1, 0.2});
    CHECK(r.eer == 0.0);
    CHECK(r.p_fa_at_threshold == 0.0);
    CHECK(r.p_miss_at_threshold == 0.0);
    // threshold sits mid-plateau between the classes
    CHECK(r.threshold == doctest::Approx(0.5));
  }
  SUBCASE("identical score multisets give exactly 0.5") {
    Rng rng(2);
    const std::vector<double> s = lattice_scores(rng, 10000);
    const EerResult r = compute_eer(s, s);
    CHECK(std::abs(r.eer - 0.5) <= 0.02);
    CHECK(r.eer == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("interleaved case against the dense-sweep oracle") {
    const std::vector<double> genuine = {0.6, 0.4};
    const std::vector<double> impostor = {0.5};
    const double oracle = brute_force_eer(genuine, impostor, 1000001);
    CHECK(oracle == doctest::Approx(0.5).epsilon(1e-12));
    const EerResult r = compute_eer(genuine, impostor);
    CHECK(std::abs(r.eer - oracle) < 1e-9);
  }
  SUBCASE("fully reversed scores") {
    const EerResult r = compute_eer({0.1}, {0.9});
    CHECK(r.eer == 1.0);
  }
  SUBCASE("single tied pair") {
    const EerResult r = compute_eer({0.5}, {0.5});
    CHECK(r.eer == doctest::Approx(0.5));
  }
}

TEST_CASE("EER input validation") {
  CHECK_THROWS_AS(compute_eer({}, {0.1}), DataError);
  CHECK_THROWS_AS(compute_eer({0.1}, {}), DataError);
  CHECK_THROWS_AS(compute_eer({std::nan("")}, {0.1}), DataError);
}

TEST_CASE("EER matches the brute-force dense sweep on random score sets") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t ng = 2 + rng.index(800);
    const std::size_t ni = 2 + rng.index(800);
    const std::vector<double> genuine = lattice_scores(rng, ng);
    const std::vector<double> impostor = lattice_scores(rng, ni);
    const EerResult fast = compute_eer(genuine, impostor);
    const double oracle = brute_force_eer(genuine, impostor, 40001);
    CHECK(std::abs(fast.eer - oracle) < 1e-9);
    CHECK(fast.eer >= 0.0);
    CHECK(fast.eer <= 1.0);
  }
}

TEST_CASE("EER is a rank statistic") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> genuine = lattice_scores(rng, 40 + rng.index(200));
    std::vector<double> impostor = lattice_scores(rng, 40 + rng.index(200));
    const double base = compute_eer(genuine, impostor).eer;

    auto affine = [](std::vector<double> v) {
      for (double& s : v) s = 2.0 * s + 3.0;
      return v;
    };
    auto cube = [](std::vector<double> v) {
      for (double& s : v) s = s * s * s;
      return v;
    };
    CHECK(std::abs(compute_eer(affine(genuine), affine(impostor)).eer -
                   base) < 1e-9);
    CHECK(std::abs(compute_eer(cube(genuine), cube(impostor)).eer - base) <
          1e-9);
  }
}

TEST_CASE("rates at the returned threshold differ by at most one ROC step") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> genuine = lattice_scores(rng, 5 + rng.index(90));
    const std::vector<double> impostor =
        lattice_scores(rng, 5 + rng.index(90));
    const EerResult r = compute_eer(genuine, impostor);
    // the largest possible single step of the empirical ROC
    double max_step = 0.0;
    for (double t : genuine) {
      double gen_ties = 0, imp_ties = 0;
      for (double s : genuine) gen_ties += s == t;
      for (double s : impostor) imp_ties += s == t;
      max_step = std::max(max_step,
                          gen_ties / static_cast<double>(genuine.size()) +
                              imp_ties / static_cast<double>(impostor.size()));
    }
    for (double t : impostor) {
      double gen_ties = 0, imp_ties = 0;
      for (double s : genuine) gen_ties += s == t;
      for (double s : impostor) imp_ties += s == t;
      max_step = std::max(max_step,
                          gen_ties / static_cast<double>(genuine.size()) +
                              imp_ties / static_cast<double>(impostor.size()));
    }
    CHECK(std::abs(r.p_fa_at_threshold - r.p_miss_at_threshold) <=
          max_step + 1e-12);
  }
}

TEST_CASE("confusion matrix counting") {
  SUBCASE("all correct") {
    std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
    for (EmotionLabel e : kAllEmotions) {
      for (int i = 0; i < 10; ++i) pairs.emplace_back(e, e);
    }
    const ConfusionMatrix cm = confusion_from_predictions(pairs);
    for (int k = 0; k < kNumEmotions; ++k) {
      CHECK(cm.counts[k][k] == 10);
      CHECK(cm.row_sum(k) == 10);
    }
  }
  SUBCASE("single pair lands in [true][pred]") {
    const ConfusionMatrix cm = confusion_from_predictions(
        {{EmotionLabel::kSad, EmotionLabel::kHappy}});
    CHECK(cm.counts[2][0] == 1);
    std::uint64_t total = 0;
    for (int r = 0; r < 4; ++r) total += cm.row_sum(r);
    CHECK(total == 1);
  }
  SUBCASE("row sums match per-class input counts") {
    Rng rng(8);
    std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
    std::array<std::uint64_t, 4> expected{};
    for (int i = 0; i < 1000; ++i) {
      const auto truth = static_cast<EmotionLabel>(rng.index(4));
      const auto pred = static_cast<EmotionLabel>(rng.index(4));
      ++expected[label_index(truth)];
      pairs.emplace_back(truth, pred);
    }
    const ConfusionMatrix cm = confusion_from_predictions(pairs);
    for (int k = 0; k < kNumEmotions; ++k) {
      CHECK(cm.row_sum(k) == expected[k]);
    }
  }
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(confusion_from_predictions({}), DataError);
  }
}

TEST_CASE("UAR") {
  SUBCASE("perfect diagonal") {
    ConfusionMatrix cm;
    for (int k = 0; k < 4; ++k) cm.counts[k][k] = 7;
    CHECK(compute_uar(cm).uar == 1.0);
  }
  SUBCASE("arithmetic mean of recalls") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 1;
    cm.counts[0][1] = 1;  // recall 0.5
    cm.counts[1][1] = 4;  // recall 1.0
    cm.counts[2][0] = 3;  // recall 0.0
    cm.counts[3][3] = 2;
    cm.counts[3][0] = 2;  // recall 0.5
    const UarResult r = compute_uar(cm);
    CHECK(r.uar == doctest::Approx(0.5));
    CHECK(r.per_class_recall[0] == doctest::Approx(0.5));
    CHECK(r.per_class_recall[1] == doctest::Approx(1.0));
    CHECK(r.per_class_recall[2] == doctest::Approx(0.0));
    CHECK(r.per_class_recall[3] == doctest::Approx(0.5));
  }
  SUBCASE("invariant to per-class duplication") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 5;
    cm.counts[0][2] = 5;
    cm.counts[1][1] = 9;
    cm.counts[1][0] = 1;
    cm.counts[2][2] = 1;
    cm.counts[2][3] = 1;
    cm.counts[3][3] = 4;
    const UarResult base = compute_uar(cm);
    ConfusionMatrix scaled = cm;
    for (int r = 0; r < 4; ++r) {
      const std::uint64_t factor = 1 + static_cast<std::uint64_t>(r) * 99;
      for (int c = 0; c < 4; ++c) scaled.counts[r][c] = cm.counts[r][c] * factor;
    }
    CHECK(compute_uar(scaled).uar == doctest::Approx(base.uar).epsilon(1e-12));
  }
  SUBCASE("zero-support classes are excluded and flagged") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 2;
    cm.counts[1][1] = 2;
    cm.counts[3][3] = 1;
    cm.counts[3][1] = 1;
    const UarResult r = compute_uar(cm);
    CHECK_FALSE(r.included[2]);
    CHECK(std::isnan(r.per_class_recall[2]));
    CHECK(r.uar == doctest::Approx((1.0 + 1.0 + 0.5) / 3.0));
  }
  SUBCASE("all-empty matrix is an error") {
    CHECK_THROWS_AS(compute_uar(ConfusionMatrix{}), DataError);
  }
}

namespace {

EmbeddingArchive tiny_archive(const std::vector<Embedding>& rows) {
  EmbeddingArchive archive;
  archive.dim = rows[0].size();
  archive.rows = rows;
  return archive;
}

}  // namespace

TEST_CASE("build_trials enumeration and subsampling") {
  Rng rng(6);
  std::vector<Embedding> rows;
  for (int i = 0; i < 4; ++i) rows.push_back(random_vector(rng, 8));
  const EmbeddingArchive archive = tiny_archive(rows);
  Manifest manifest;
  manifest.rows.push_back({"a1", "spkA", std::nullopt, 0});
  manifest.rows.push_back({"a2", "spkA", std::nullopt, 1});
  manifest.rows.push_back({"b1", "spkB", std::nullopt, 2});
  manifest.rows.push_back({"b2", "spkB", std::nullopt, 3});

  SUBCASE("2 speakers x 2 utterances: 2 genuine, 4 impostor") {
    const TrialSet set = build_trials(archive, archive, manifest,
                                      TrialProtocol::kFull, 1000, 1);
    CHECK(set.genuine_scores().size() == 2);
    CHECK(set.impostor_scores().size() == 4);
    for (const Trial& t : set.trials) {
      const Embedding& e = rows[t.enroll_id[0] == 'a'
                                    ? (t.enroll_id[1] - '1')
                                    : 2 + (t.enroll_id[1] - '1')];
      const Embedding& u = rows[t.test_id[0] == 'a'
                                    ? (t.test_id[1] - '1')
                                    : 2 + (t.test_id[1] - '1')];
      CHECK(t.score == doctest::Approx(cosine_score(e, u)));
    }
  }
  SUBCASE("max_trials caps each class deterministically") {
    const TrialSet a = build_trials(archive, archive, manifest,
                                    TrialProtocol::kFull, 1, 42);
    const TrialSet b = build_trials(archive, archive, manifest,
                                    TrialProtocol::kFull, 1, 42);
    REQUIRE(a.trials.size() == 2);
    CHECK(a.genuine_scores().size() == 1);
    CHECK(a.impostor_scores().size() == 1);
    CHECK(a.trials[0].enroll_id == b.trials[0].enroll_id);
    CHECK(a.trials[1].test_id == b.trials[1].test_id);
  }
  SUBCASE("single-class protocols") {
    const TrialSet g = build_trials(archive, archive, manifest,
                                    TrialProtocol::kSameSessionGenuine, 100, 1);
    CHECK(g.trials.size() == 2);
    CHECK(g.impostor_scores().empty());
    const TrialSet i = build_trials(archive, archive, manifest,
                                    TrialProtocol::kCrossSpeakerImpostor, 100, 1);
    CHECK(i.trials.size() == 4);
    CHECK(i.genuine_scores().empty());
  }
  SUBCASE("fewer than two speakers is an error") {
    Manifest solo;
    solo.rows.push_back({"a1", "spkA", std::nullopt, 0});
    solo.rows.push_back({"a2", "spkA", std::nullopt, 1});
    CHECK_THROWS_AS(build_trials(archive, archive, solo, TrialProtocol::kFull,
                                 10, 1),
                    DataError);
  }
  SUBCASE("no genuine trials is an error when genuine are requested") {
    Manifest singles;
    singles.rows.push_back({"a1", "spkA", std::nullopt, 0});
    singles.rows.push_back({"b1", "spkB", std::nullopt, 1});
    CHECK_THROWS_AS(build_trials(archive, archive, singles,
                                 TrialProtocol::kFull, 10, 1),
                    DataError);
    const TrialSet imp = build_trials(archive, archive, singles,
                                      TrialProtocol::kCrossSpeakerImpostor,
                                      10, 1);
    CHECK(imp.trials.size() == 1);
  }
}
