#include "emocomp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "emocomp/anonymizer.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"
#include "emocomp/synth.hpp"

namespace emocomp {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kAttackerModel = "embedding-cosine-lazy";
constexpr std::string_view kAttackerNote =
    "attacker scores anonymized trials with a fixed cosine backend; no ASV "
    "retraining on anonymized data";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Splits make_splits(const Manifest& manifest, const SplitConfig& config,
                   std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& row = manifest.rows[i];
    std::string key = row.speaker_id;
    key += '\x1f';
    key += row.emotion ? label_name(*row.emotion) : "-";
    groups[std::move(key)].push_back(i);
  }

  Splits splits;
  for (auto& [key, positions] : groups) {
    // order by utterance id so the assignment is independent of manifest
    // row order
    std::sort(positions.begin(), positions.end(),
              [&manifest](std::size_t a, std::size_t b) {
                return manifest.rows[a].utt_id < manifest.rows[b].utt_id;
              });
    Rng rng(mix_seed(seed, fnv1a64(key)));
    for (std::size_t i = 0; i + 1 < positions.size(); ++i) {
      const std::size_t j = i + rng.index(positions.size() - i);
      std::swap(positions[i], positions[j]);
    }
    const std::size_t n = positions.size();
    const auto n_train = static_cast<std::size_t>(
        std::floor(config.train_frac * static_cast<double>(n)));
    const auto n_dev = static_cast<std::size_t>(
        std::floor(config.dev_frac * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) {
        splits.train.push_back(positions[i]);
      } else if (i < n_train + n_dev) {
        splits.dev.push_back(positions[i]);
      } else {
        splits.eval.push_back(positions[i]);
      }
    }
  }
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.dev.begin(), splits.dev.end());
  std::sort(splits.eval.begin(), splits.eval.end());

  // split hygiene: abort if any utterance id leaks across splits
  std::unordered_set<std::string> seen;
  const auto check = [&](const std::vector<std::size_t>& split) {
    for (std::size_t i : split) {
      if (!seen.insert(manifest.rows[i].utt_id).second) {
        throw DataError("split hygiene violation: utt_id '" +
                        manifest.rows[i].utt_id + "' assigned twice");
      }
    }
  };
  check(splits.train);
  check(splits.dev);
  check(splits.eval);
  return splits;
}

LabeledEmbeddings gather_labeled(const EmbeddingArchive& archive,
                                 const Manifest& manifest,
                                 const std::vector<std::size_t>& positions) {
  LabeledEmbeddings out;
  for (std::size_t i : positions) {
    const ManifestRow& row = manifest.rows.at(i);
    if (!row.emotion) continue;
    out.x.push_back(archive.rows.at(row.row_index));
    out.y.push_back(*row.emotion);
    out.positions.push_back(i);
  }
  return out;
}

Pca2d pca_top2(const std::vector<Embedding>& rows) {
  if (rows.size() < 2) {
    throw DataError("pca_top2: need at least 2 rows");
  }
  const Eigen::Index d = rows[0].size();
  Embedding mean = Embedding::Zero(d);
  for (const Embedding& r : rows) {
    require_same_dim(r.size(), d, "pca_top2");
    mean += r;
  }
  mean /= static_cast<double>(rows.size());

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const Embedding& r : rows) {
    const Embedding c = r - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(rows.size());

  const auto power_iterate = [d](const Eigen::MatrixXd& m,
                                 const Embedding* orthogonal_to) {
    Rng rng(fnv1a64("pca-power-start"));
    Embedding v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
    v.normalize();
    for (int it = 0; it < 1000; ++it) {
      Embedding next = m * v;
      if (orthogonal_to) {
        next -= next.dot(*orthogonal_to) * *orthogonal_to;
      }
      const double norm = next.norm();
      if (norm < 1e-300) {
        throw NumericError("pca_top2: degenerate covariance");
      }
      next /= norm;
      const double delta = (next - v).norm();
      v = next;
      if (delta < 1e-13) break;
    }
    return v;
  };

  Pca2d result;
  result.mean = mean;
  result.component1 = power_iterate(cov, nullptr);
  result.eigenvalue1 = result.component1.dot(cov * result.component1);
  Eigen::MatrixXd deflated =
      cov - result.eigenvalue1 * result.component1 * result.component1.transpose();
  result.component2 = power_iterate(deflated, &result.component1);
  result.eigenvalue2 = result.component2.dot(cov * result.component2);

  // canonical sign: largest-magnitude coordinate positive
  for (Embedding* comp : {&result.component1, &result.component2}) {
    Eigen::Index arg = 0;
    comp->cwiseAbs().maxCoeff(&arg);
    if ((*comp)[arg] < 0.0) *comp = -*comp;
  }
  return result;
}

void export_projection(const EmbeddingArchive& archive,
                       const Manifest& manifest, const fs::path& out_csv) {
  manifest.validate(archive.count());
  if (manifest.rows.empty()) {
    throw DataError("export_projection: empty manifest");
  }
  std::vector<Embedding> rows;
  rows.reserve(manifest.rows.size());
  for (const ManifestRow& row : manifest.rows) {
    rows.push_back(archive.rows[row.row_index]);
  }
  const Pca2d pca = pca_top2(rows);

  std::string out = "utt_id,speaker_id,emotion,p1,p2\n";
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& row = manifest.rows[i];
    const Embedding centered = rows[i] - pca.mean;
    out += row.utt_id;
    out += ',';
    out += row.speaker_id;
    out += ',';
    out += row.emotion ? std::string(label_name(*row.emotion)) : "-";
    out += ',';
    out += format_double(centered.dot(pca.component1));
    out += ',';
    out += format_double(centered.dot(pca.component2));
    out += '\n';
  }
  atomic_write_bytes(out_csv, out);
}

namespace {

ordered_json eer_to_json(const EerResult& eer) {
  return ordered_json{
      {"eer", eer.eer},
      {"threshold", eer.threshold},
      {"p_fa_at_threshold", eer.p_fa_at_threshold},
      {"p_miss_at_threshold", eer.p_miss_at_threshold},
      {"n_genuine", eer.n_genuine},
      {"n_impostor", eer.n_impostor},
  };
}

ordered_json uar_to_json(const UarResult& uar) {
  ordered_json recall = ordered_json::object();
  ordered_json excluded = ordered_json::array();
  for (EmotionLabel e : kAllEmotions) {
    const int k = label_index(e);
    if (uar.included[k]) {
      recall[std::string(label_name(e))] = uar.per_class_recall[k];
    } else {
      recall[std::string(label_name(e))] = nullptr;
      excluded.push_back(std::string(label_name(e)));
    }
  }
  ordered_json out{{"uar", uar.uar}, {"per_class_recall", recall}};
  if (!excluded.empty()) {
    out["excluded_classes"] = excluded;
    out["warning"] = "classes with zero support are excluded from the mean";
  }
  return out;
}

}  // namespace

ordered_json metrics_report(const RunConfig& config, const EerResult* eer,
                            const UarResult* uar, std::string_view protocol,
                            std::uint64_t seed) {
  ordered_json doc;
  if (eer) {
    doc["eer"] = eer->eer;
    doc["threshold"] = eer->threshold;
    doc["n_genuine"] = eer->n_genuine;
    doc["n_impostor"] = eer->n_impostor;
  } else {
    doc["eer"] = nullptr;
    doc["threshold"] = nullptr;
    doc["n_genuine"] = nullptr;
    doc["n_impostor"] = nullptr;
  }
  if (uar) {
    doc["uar"] = uar->uar;
    ordered_json recall = ordered_json::object();
    for (EmotionLabel e : kAllEmotions) {
      const int k = label_index(e);
      if (uar->included[k]) {
        recall[std::string(label_name(e))] = uar->per_class_recall[k];
      } else {
        recall[std::string(label_name(e))] = nullptr;
      }
    }
    doc["per_class_recall"] = recall;
  } else {
    doc["uar"] = nullptr;
    doc["per_class_recall"] = nullptr;
  }
  doc["protocol"] = std::string(protocol);
  doc["seed"] = seed;
  doc["attacker_model"] = std::string(kAttackerModel);
  doc["attacker_note"] = std::string(kAttackerNote);
  doc["config"] = echo_config(config);
  return doc;
}

std::string report_to_string(const ordered_json& report) {
  return report.dump(2) + "\n";
}

EmbeddingArchive anonymize_archive(const EmbeddingArchive& archive,
                                   const Manifest& manifest,
                                   const AnonymizerConfig& config,
                                   const OrthogonalChain* trained_chain,
                                   const std::vector<Embedding>* pool) {
  manifest.validate(archive.count());
  EmbeddingArchive out;
  out.dim = archive.dim;
  out.rows.resize(archive.rows.size());

  switch (config.mode) {
    case AnonymizerMode::kTrainedChain: {
      if (trained_chain == nullptr) {
        throw DataError("anonymize_archive: trained-chain mode needs a chain");
      }
      for (const ManifestRow& row : manifest.rows) {
        out.rows[row.row_index] =
            anonymize_ohnn(archive.rows[row.row_index], *trained_chain);
      }
      break;
    }
    case AnonymizerMode::kRandomChainSpeakerLevel: {
      const OrthogonalChain chain = random_chain(
          archive.dim, config.reflectors_per_chain, config.seed);
      for (const ManifestRow& row : manifest.rows) {
        out.rows[row.row_index] =
            anonymize_ohnn(archive.rows[row.row_index], chain);
      }
      break;
    }
    case AnonymizerMode::kRandomChainUtteranceLevel: {
      const std::vector<OrthogonalChain> chains =
          build_chain_pool(archive.dim, config.reflectors_per_chain,
                           config.pool_size, config.seed);
      for (const ManifestRow& row : manifest.rows) {
        const std::uint64_t utt_seed =
            mix_seed(config.seed, fnv1a64(row.utt_id));
        out.rows[row.row_index] =
            anonymize_utterance_level(archive.rows[row.row_index], chains,
                                      utt_seed)
                .first;
      }
      break;
    }
    case AnonymizerMode::kSelectionAverage: {
      if (pool == nullptr || pool->empty()) {
        throw DataError(
            "anonymize_archive: selection-average mode needs a non-empty "
            "external pool");
      }
      for (const ManifestRow& row : manifest.rows) {
        const std::uint64_t utt_seed =
            mix_seed(config.seed, fnv1a64(row.utt_id));
        out.rows[row.row_index] = anonymize_selection(
            archive.rows[row.row_index], *pool, config.select_n, utt_seed);
      }
      break;
    }
  }
  return out;
}

namespace {

std::vector<int> dense_speaker_ids(const Manifest& manifest,
                                   const std::vector<std::size_t>& positions,
                                   int* n_speakers) {
  std::map<std::string, int> ids;
  for (std::size_t i : positions) {
    ids.emplace(manifest.rows[i].speaker_id, 0);
  }
  int next = 0;
  for (auto& [name, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(positions.size());
  for (std::size_t i : positions) {
    out.push_back(ids.at(manifest.rows[i].speaker_id));
  }
  *n_speakers = next;
  return out;
}

std::vector<Embedding> gather_rows(const EmbeddingArchive& archive,
                                   const Manifest& manifest,
                                   const std::vector<std::size_t>& positions) {
  std::vector<Embedding> out;
  out.reserve(positions.size());
  for (std::size_t i : positions) {
    out.push_back(archive.rows.at(manifest.rows[i].row_index));
  }
  return out;
}

Manifest sub_manifest(const Manifest& manifest,
                      const std::vector<std::size_t>& positions) {
  Manifest out;
  out.rows.reserve(positions.size());
  for (std::size_t i : positions) {
    out.rows.push_back(manifest.rows[i]);
  }
  return out;
}

ordered_json sweep_to_json(const AlphaSweepTable& table) {
  ordered_json recall = ordered_json::object();
  for (EmotionLabel e : kAllEmotions) {
    ordered_json row = ordered_json::array();
    for (double r : table.recall[label_index(e)]) {
      if (std::isnan(r)) {
        row.push_back(nullptr);
      } else {
        row.push_back(r);
      }
    }
    recall[std::string(label_name(e))] = row;
  }
  return ordered_json{
      {"grid", table.grid}, {"recall", recall}, {"uar", table.uar}};
}

UarResult uar_on_split(const EmbeddingArchive& archive,
                       const Manifest& manifest,
                       const std::vector<std::size_t>& positions,
                       const EmotionIndicator& indicator) {
  std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
  for (std::size_t i : positions) {
    const ManifestRow& row = manifest.rows[i];
    if (!row.emotion) continue;
    pairs.emplace_back(
        *row.emotion,
        predict_emotion(archive.rows[row.row_index], indicator).first);
  }
  return compute_uar(confusion_from_predictions(pairs));
}

}  // namespace

ordered_json run_pipeline(const RunConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);

  // ------------------------------------------------------------------ data
  EmbeddingArchive originals;
  Manifest manifest;
  bool have_truth = false;
  WorldTruth truth;
  if (!config.paths.originals.empty()) {
    if (config.paths.manifest.empty()) {
      throw DataError("pipeline: paths.originals requires paths.manifest");
    }
    originals = read_archive(config.paths.originals);
    manifest = read_manifest(config.paths.manifest);
    manifest.validate(originals.count());
  } else {
    World world = gen_world(config.world);
    originals = std::move(world.archive);
    manifest = std::move(world.manifest);
    truth = std::move(world.truth);
    have_truth = true;
    write_truth(out_dir / "truth.tru", truth);
  }
  write_archive(out_dir / "originals.semb", originals);
  write_manifest(out_dir / "manifest.tsv", manifest);

  const Splits splits = make_splits(manifest, config.split, config.split_seed);
  if (splits.train.empty() || splits.dev.empty() || splits.eval.empty()) {
    throw DataError("pipeline: a split is empty; adjust split fractions");
  }

  ordered_json report;
  report["tool"] = "emocomp";
  report["attacker_model"] = std::string(kAttackerModel);
  report["attacker_note"] = std::string(kAttackerNote);
  report["config"] = echo_config(config);
  report["data"] = ordered_json{{"n_utterances", originals.count()},
                                {"dim", originals.dim},
                                {"n_train", splits.train.size()},
                                {"n_dev", splits.dev.size()},
                                {"n_eval", splits.eval.size()}};

  // ------------------------------------------------------------ anonymizer
  OrthogonalChain trained_chain;
  const OrthogonalChain* trained_ptr = nullptr;
  std::vector<Embedding> selection_pool;
  const std::vector<Embedding>* pool_ptr = nullptr;
  if (config.anonymizer.mode == AnonymizerMode::kTrainedChain) {
    if (!config.paths.chain.empty()) {
      trained_chain = read_chain(config.paths.chain);
      report["anonymizer"] =
          ordered_json{{"mode", "trained-chain"},
                       {"chain", config.paths.chain},
                       {"reflectors", trained_chain.size()}};
    } else {
      int n_speakers = 0;
      const std::vector<int> speaker_ids =
          dense_speaker_ids(manifest, splits.train, &n_speakers);
      int n_dev_speakers = 0;
      const std::vector<int> dev_speaker_ids =
          dense_speaker_ids(manifest, splits.dev, &n_dev_speakers);
      const OhnnTrainResult trained = train_ohnn(
          gather_rows(originals, manifest, splits.train), speaker_ids,
          gather_rows(originals, manifest, splits.dev), dev_speaker_ids,
          config.anonymizer.reflectors_per_chain, config.anonymizer.seed,
          config.anonymizer.training);
      trained_chain = trained.chain;
      write_chain(out_dir / "chain.ohc", trained_chain);
      report["anonymizer"] =
          ordered_json{{"mode", "trained-chain"},
                       {"reflectors", trained_chain.size()},
                       {"final_train_loss", trained.final_train_loss},
                       {"final_dev_loss", trained.final_dev_loss}};
    }
    trained_ptr = &trained_chain;
  } else if (config.anonymizer.mode == AnonymizerMode::kSelectionAverage) {
    if (!config.paths.pool.empty()) {
      EmbeddingArchive pool_archive = read_archive(config.paths.pool);
      require_same_dim(pool_archive.dim, originals.dim, "selection pool");
      selection_pool = std::move(pool_archive.rows);
    } else {
      // default external pool: train-split originals
      selection_pool = gather_rows(originals, manifest, splits.train);
    }
    pool_ptr = &selection_pool;
    report["anonymizer"] =
        ordered_json{{"mode", "selection-average"},
                     {"pool_size", selection_pool.size()},
                     {"select_n", config.anonymizer.select_n}};
  } else {
    report["anonymizer"] = ordered_json{
        {"mode", std::string(anonymizer_mode_name(config.anonymizer.mode))},
        {"reflectors_per_chain", config.anonymizer.reflectors_per_chain},
        {"pool_size", config.anonymizer.pool_size}};
  }

  const EmbeddingArchive anonymized = anonymize_archive(
      originals, manifest, config.anonymizer, trained_ptr, pool_ptr);
  write_archive(out_dir / "anonymized.semb", anonymized);

  // ------------------------------------------------- emotion models (SVMs)
  const LabeledEmbeddings train_data =
      gather_labeled(originals, manifest, splits.train);
  const LabeledEmbeddings dev_data =
      gather_labeled(originals, manifest, splits.dev);
  if (train_data.x.empty() || dev_data.x.empty()) {
    throw DataError("pipeline: train or dev split has no labeled utterances");
  }

  std::array<EmotionBoundary, 4> boundaries;
  ordered_json svm_json = ordered_json::object();
  for (EmotionLabel e : kAllEmotions) {
    boundaries[label_index(e)] =
        train_emotion_svm(train_data.x, train_data.y, dev_data.x, dev_data.y,
                          e, config.svm);
    ordered_json entry{
        {"dev_accuracy", boundaries[label_index(e)].dev_accuracy}};
    if (have_truth && e != EmotionLabel::kNeutral) {
      entry["oracle_alignment"] =
          oracle_direction_alignment(boundaries[label_index(e)], truth);
    }
    svm_json[std::string(label_name(e))] = entry;
  }
  write_boundaries(out_dir / "boundaries.svm", boundaries);
  report["svm"] = svm_json;

  const IndicatorTrainResult indicator_result =
      train_indicator(train_data.x, train_data.y, dev_data.x, dev_data.y,
                      config.indicator_seed, config.indicator);
  const EmotionIndicator& indicator = indicator_result.indicator;
  write_indicator(out_dir / "indicator.ind", indicator);
  report["indicator"] =
      ordered_json{{"epochs_run", indicator_result.epochs_run},
                   {"final_train_loss", indicator_result.final_train_loss},
                   {"best_dev_loss", indicator_result.best_dev_loss}};

  // ------------------------------------------------------------ calibration
  CompensationConfig compensation = config.compensation;
  if (config.calibration.enabled) {
    const LabeledEmbeddings dev_anon =
        gather_labeled(anonymized, manifest, splits.dev);
    const CalibrationResult calibrated =
        calibrate_alpha(dev_anon.y, dev_anon.x, boundaries, indicator,
                        config.calibration.grid);
    compensation = calibrated.config;
    compensation.skip_neutral = config.compensation.skip_neutral;
    ordered_json chosen = ordered_json::object();
    for (EmotionLabel e : kAllEmotions) {
      chosen[std::string(label_name(e))] =
          compensation.alpha[label_index(e)];
    }
    ordered_json calib_json{{"enabled", true},
                            {"chosen_alpha", chosen},
                            {"sweep", sweep_to_json(calibrated.table)}};
    atomic_write_bytes(out_dir / "calibration.json",
                       calib_json.dump(2) + "\n");
    report["calibration"] = calib_json;
  } else {
    ordered_json chosen = ordered_json::object();
    for (EmotionLabel e : kAllEmotions) {
      chosen[std::string(label_name(e))] =
          compensation.alpha[label_index(e)];
    }
    report["calibration"] = ordered_json{{"enabled", false},
                                         {"chosen_alpha", chosen}};
  }

  // ------------------------------------------------------------ compensate
  EmbeddingArchive compensated;
  compensated.dim = anonymized.dim;
  compensated.rows.resize(anonymized.rows.size());
  for (const ManifestRow& row : manifest.rows) {
    compensated.rows[row.row_index] =
        compensate_pipeline(originals.rows[row.row_index],
                            anonymized.rows[row.row_index], boundaries,
                            indicator, compensation)
            .first;
  }
  write_archive(out_dir / "compensated.semb", compensated);

  // ------------------------------------------------------------- EER block
  const Manifest eval_manifest = sub_manifest(manifest, splits.eval);
  const auto eer_for = [&](const EmbeddingArchive& enroll,
                           const EmbeddingArchive& test) {
    const TrialSet trials =
        build_trials(enroll, test, eval_manifest, TrialProtocol::kFull,
                     config.eval.max_trials, config.trial_seed);
    return compute_eer(trials.genuine_scores(), trials.impostor_scores());
  };
  const EerResult eer_original = eer_for(originals, originals);
  const EerResult eer_cross = eer_for(originals, anonymized);
  const EerResult eer_anonymized = eer_for(anonymized, anonymized);
  const EerResult eer_compensated = eer_for(compensated, compensated);
  report["eer"] =
      ordered_json{{"protocol", std::string(trial_protocol_name(
                                    TrialProtocol::kFull))},
                   {"original", eer_to_json(eer_original)},
                   {"original_vs_anonymized", eer_to_json(eer_cross)},
                   {"anonymized", eer_to_json(eer_anonymized)},
                   {"compensated", eer_to_json(eer_compensated)}};

  // ------------------------------------------------------------- UAR block
  report["uar"] = ordered_json{
      {"original", uar_to_json(uar_on_split(originals, manifest, splits.eval,
                                            indicator))},
      {"anonymized", uar_to_json(uar_on_split(anonymized, manifest,
                                              splits.eval, indicator))},
      {"compensated", uar_to_json(uar_on_split(compensated, manifest,
                                               splits.eval, indicator))}};

  atomic_write_bytes(out_dir / "report.json", report_to_string(report));
  return report;
}

}  // namespace emocomp
