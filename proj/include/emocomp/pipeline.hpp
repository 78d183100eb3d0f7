#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emocomp/config.hpp"
#include "emocomp/eval.hpp"

namespace emocomp {

/// Disjoint train/dev/eval partitions, as positions into the manifest.
/// Splitting is stratified per (speaker, emotion) group and seeded per
/// group, so the assignment does not depend on manifest order.
struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> eval;
};

Splits make_splits(const Manifest& manifest, const SplitConfig& config,
                   std::uint64_t seed);

/// Labeled embedding view gathered from manifest positions; unlabeled rows
/// are skipped.
struct LabeledEmbeddings {
  std::vector<Embedding> x;
  std::vector<EmotionLabel> y;
  std::vector<std::size_t> positions;  ///< manifest positions kept
};

LabeledEmbeddings gather_labeled(const EmbeddingArchive& archive,
                                 const Manifest& manifest,
                                 const std::vector<std::size_t>& positions);

/// Top-2 principal components of a point cloud, computed by deterministic
/// power iteration with deflation. Component signs are canonicalized so the
/// largest-magnitude coordinate is positive.
struct Pca2d {
  Embedding component1;
  Embedding component2;
  double eigenvalue1 = 0.0;
  double eigenvalue2 = 0.0;
  Embedding mean;
};

Pca2d pca_top2(const std::vector<Embedding>& rows);

/// Writes (utt_id, speaker_id, emotion, p1, p2) CSV rows projected onto the
/// top-2 principal components.
void export_projection(const EmbeddingArchive& archive,
                       const Manifest& manifest,
                       const std::filesystem::path& out_csv);

/// Fixed report shape shared by the metric subcommands: eer fields, uar
/// fields (null when not applicable), protocol, seed, attacker model and
/// the resolved config echo.
nlohmann::ordered_json metrics_report(const RunConfig& config,
                                      const EerResult* eer,
                                      const UarResult* uar,
                                      std::string_view protocol,
                                      std::uint64_t seed);

/// Serializes a report with 2-space indentation and a trailing newline;
/// key order is fixed by construction.
std::string report_to_string(const nlohmann::ordered_json& report);

/// Runs the full flow: generate or load embeddings, anonymize, train SVMs
/// and the indicator on originals, calibrate alpha on the dev split,
/// compensate, evaluate EER and UAR, and write every artifact plus
/// report.json under out_dir. Returns the report.
nlohmann::ordered_json run_pipeline(const RunConfig& config,
                                    const std::filesystem::path& out_dir);

/// Anonymizes every archive row per the configured mode. For
/// selection-average,`pool` supplies the external speaker pool.
EmbeddingArchive anonymize_archive(const EmbeddingArchive& archive,
                                   const Manifest& manifest,
                                   const AnonymizerConfig& config,
                                   const OrthogonalChain* trained_chain,
                                   const std::vector<Embedding>* pool);

}  // namespace emocomp
