#include "emocomp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

std::vector<double> TrialSet::genuine_scores() const {
  std::vector<double> out;
  for (const Trial& t : trials) {
    if (t.same_speaker) out.push_back(t.score);
  }
  return out;
}

std::vector<double> TrialSet::impostor_scores() const {
  std::vector<double> out;
  for (const Trial& t : trials) {
    if (!t.same_speaker) out.push_back(t.score);
  }
  return out;
}

double cosine_score(const Embedding& e, const Embedding& t) {
  require_same_dim(e.size(), t.size(), "cosine_score");
  const double ne = e.norm();
  const double nt = t.norm();
  if (ne < 1e-300 || nt < 1e-300) {
    throw NumericError("cosine_score: zero vector");
  }
  return e.dot(t) / (ne * nt);
}

namespace {

double frac_below(const std::vector<double>& sorted, double t) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(it - sorted.begin()) /
         static_cast<double>(sorted.size());
}

double frac_at_or_above(const std::vector<double>& sorted, double t) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(sorted.end() - it) /
         static_cast<double>(sorted.size());
}

}  // namespace

EerResult compute_eer(const std::vector<double>& genuine,
                      const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw DataError("compute_eer: empty genuine or impostor score list");
  }
  for (double s : genuine) {
    if (!std::isfinite(s)) throw DataError("compute_eer: non-finite score");
  }
  for (double s : impostor) {
    if (!std::isfinite(s)) throw DataError("compute_eer: non-finite score");
  }

  std::vector<double> gen = genuine;
  std::vector<double> imp = impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  // Candidate thresholds: unique pooled scores plus one sentinel past the
  // maximum. Both error curves are constant between candidates.
  std::vector<double> thetas;
  thetas.reserve(gen.size() + imp.size() + 1);
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(),
             std::back_inserter(thetas));
  thetas.erase(std::unique(thetas.begin(), thetas.end()), thetas.end());
  thetas.push_back(thetas.back() + 1.0);

  const std::size_t m = thetas.size();
  std::vector<double> miss(m), fa(m);
  for (std::size_t j = 0; j < m; ++j) {
    miss[j] = frac_below(gen, thetas[j]);
    fa[j] = frac_at_or_above(imp, thetas[j]);
  }

  EerResult result;
  result.n_genuine = gen.size();
  result.n_impostor = imp.size();

  // diff[j] = P_miss - P_fa is non-decreasing, -1 at the pooled minimum and
  // +1 at the sentinel, so either an exact zero run or a sign flip exists.
  std::size_t a = m;  // first index with diff == 0, if any
  for (std::size_t j = 0; j < m; ++j) {
    if (miss[j] == fa[j]) {
      a = j;
      break;
    }
    if (miss[j] > fa[j]) {
      break;
    }
  }

  if (a < m) {
    std::size_t b = a;
    while (b + 1 < m && miss[b + 1] == fa[b + 1]) ++b;
    result.eer = miss[a];
    // the curves coincide for thresholds in (thetas[a-1], thetas[b]]
    result.threshold =
        a == 0 ? thetas[a] : 0.5 * (thetas[a - 1] + thetas[b]);
  } else {
    std::size_t j = 0;
    while (j + 1 < m && miss[j + 1] < fa[j + 1]) ++j;
    const double dj = miss[j] - fa[j];
    const double dj1 = miss[j + 1] - fa[j + 1];
    const double t = -dj / (dj1 - dj);
    const double eer_miss = miss[j] + t * (miss[j + 1] - miss[j]);
    const double eer_fa = fa[j] + t * (fa[j + 1] - fa[j]);
    result.eer = 0.5 * (eer_miss + eer_fa);
    result.threshold = thetas[j] + t * (thetas[j + 1] - thetas[j]);
  }

  result.p_miss_at_threshold = frac_below(gen, result.threshold);
  result.p_fa_at_threshold = frac_at_or_above(imp, result.threshold);
  return result;
}

std::uint64_t ConfusionMatrix::row_sum(int row) const {
  std::uint64_t s = 0;
  for (int c = 0; c < kNumEmotions; ++c) s += counts[row][c];
  return s;
}

ConfusionMatrix confusion_from_predictions(
    const std::vector<std::pair<EmotionLabel, EmotionLabel>>& pairs) {
  if (pairs.empty()) {
    throw DataError("confusion_from_predictions: no prediction pairs");
  }
  ConfusionMatrix cm;
  for (const auto& [truth, predicted] : pairs) {
    ++cm.counts[label_index(truth)][label_index(predicted)];
  }
  return cm;
}

UarResult compute_uar(const ConfusionMatrix& cm) {
  UarResult result;
  double sum = 0.0;
  int included = 0;
  for (int k = 0; k < kNumEmotions; ++k) {
    const std::uint64_t row = cm.row_sum(k);
    if (row == 0) {
      result.per_class_recall[k] = std::numeric_limits<double>::quiet_NaN();
      result.included[k] = false;
      continue;
    }
    result.per_class_recall[k] =
        static_cast<double>(cm.counts[k][k]) / static_cast<double>(row);
    result.included[k] = true;
    sum += result.per_class_recall[k];
    ++included;
  }
  if (included == 0) {
    throw DataError("compute_uar: all classes have zero support");
  }
  result.uar = sum / included;
  return result;
}

std::string_view trial_protocol_name(TrialProtocol protocol) {
  switch (protocol) {
    case TrialProtocol::kSameSessionGenuine:
      return "same-session-genuine";
    case TrialProtocol::kCrossSpeakerImpostor:
      return "cross-speaker-impostor";
    case TrialProtocol::kFull:
      return "same-session-genuine+cross-speaker-impostor";
  }
  return "unknown";
}

namespace {

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Keeps `keep` elements of `pairs`, chosen by a partial Fisher-Yates
/// shuffle, preserving determinism for any input order.
void subsample(std::vector<IndexPair>& pairs, std::size_t keep, Rng& rng) {
  if (pairs.size() <= keep) return;
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + rng.index(pairs.size() - i);
    std::swap(pairs[i], pairs[j]);
  }
  pairs.resize(keep);
}

}  // namespace

TrialSet build_trials(const EmbeddingArchive& enroll,
                      const EmbeddingArchive& test, const Manifest& manifest,
                      TrialProtocol protocol, std::size_t max_trials,
                      std::uint64_t seed) {
  manifest.validate(enroll.count());
  manifest.validate(test.count());
  require_same_dim(enroll.dim, test.dim, "build_trials");
  if (max_trials == 0) {
    throw DataError("build_trials: max_trials must be > 0");
  }

  // group manifest positions (not raw row indices) by speaker
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    by_speaker[manifest.rows[i].speaker_id].push_back(i);
  }
  if (by_speaker.size() < 2) {
    throw DataError("build_trials: need at least 2 speakers, got " +
                    std::to_string(by_speaker.size()));
  }

  const bool want_genuine = protocol != TrialProtocol::kCrossSpeakerImpostor;
  const bool want_impostor = protocol != TrialProtocol::kSameSessionGenuine;
  const std::size_t n = manifest.rows.size();

  std::vector<IndexPair> genuine;
  if (want_genuine) {
    Rng rng(mix_seed(seed, fnv1a64("genuine-trials")));
    for (const auto& [speaker, utts] : by_speaker) {
      for (std::size_t i = 0; i < utts.size(); ++i) {
        for (std::size_t j = i + 1; j < utts.size(); ++j) {
          genuine.emplace_back(utts[i], utts[j]);
        }
      }
    }
    if (genuine.empty()) {
      throw DataError(
          "build_trials: no genuine trials (no speaker has 2 utterances)");
    }
    subsample(genuine, max_trials, rng);
  }

  std::vector<IndexPair> impostor;
  if (want_impostor) {
    Rng rng(mix_seed(seed, fnv1a64("impostor-trials")));
    std::size_t total = n * (n - 1) / 2;
    for (const auto& [speaker, utts] : by_speaker) {
      total -= utts.size() * (utts.size() - 1) / 2;
    }
    if (total <= max_trials) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          if (manifest.rows[i].speaker_id != manifest.rows[j].speaker_id) {
            impostor.emplace_back(i, j);
          }
        }
      }
    } else {
      // rejection-sample distinct cross-speaker pairs
      std::unordered_set<std::uint64_t> seen;
      while (impostor.size() < max_trials) {
        std::size_t i = rng.index(n);
        std::size_t j = rng.index(n);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (manifest.rows[i].speaker_id == manifest.rows[j].speaker_id) {
          continue;
        }
        const std::uint64_t key =
            (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
        if (!seen.insert(key).second) continue;
        impostor.emplace_back(i, j);
      }
    }
  }

  TrialSet set;
  set.trials.reserve(genuine.size() + impostor.size());
  const auto emit = [&](const IndexPair& p, bool same) {
    const ManifestRow& a = manifest.rows[p.first];
    const ManifestRow& b = manifest.rows[p.second];
    Trial t;
    t.enroll_id = a.utt_id;
    t.test_id = b.utt_id;
    t.same_speaker = same;
    t.score = cosine_score(enroll.rows[a.row_index], test.rows[b.row_index]);
    set.trials.push_back(std::move(t));
  };
  for (const IndexPair& p : genuine) emit(p, true);
  for (const IndexPair& p : impostor) emit(p, false);
  return set;
}

}  // namespace emocomp
