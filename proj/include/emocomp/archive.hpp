#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emocomp/labels.hpp"
#include "emocomp/linalg.hpp"

namespace emocomp {

/// On-disk embedding container. File layout, all little-endian:
/// magic "SEMB" (4 bytes), version u8 = 1, dim u32, count u64, then
/// count x dim float32 row-major payload. Values are held as float64 in
/// memory and rounded to nearest-even float32 only at write time.
struct EmbeddingArchive {
  Eigen::Index dim = 0;
  std::vector<Embedding> rows;

  std::size_t count() const { return rows.size(); }
};

EmbeddingArchive read_archive(const std::filesystem::path& path);
void write_archive(const std::filesystem::path& path,
                   const EmbeddingArchive& archive);

/// One manifest row. `emotion` is empty for unlabeled utterances (written
/// as "-" in the TSV).
struct ManifestRow {
  std::string utt_id;
  std::string speaker_id;
  std::optional<EmotionLabel> emotion;
  std::uint64_t row_index = 0;
};

/// Tab-separated sidecar describing archive rows:
/// utt_id <TAB> speaker_id <TAB> emotion <TAB> row_index, no header line.
struct Manifest {
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
  /// Throws DataError on duplicate utt_ids, duplicate row indices, or a
  /// row_index outside the archive.
  void validate(std::size_t archive_count) const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const Manifest& manifest);

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename), so interrupted runs never leave truncated files.
void atomic_write_bytes(const std::filesystem::path& path,
                        const std::string& bytes);

std::string read_bytes(const std::filesystem::path& path);

}  // namespace emocomp
