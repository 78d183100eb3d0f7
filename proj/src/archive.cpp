#include "emocomp/archive.hpp"

#include <array>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "bytes.hpp"
#include "emocomp/error.hpp"

namespace emocomp {

namespace fs = std::filesystem;

namespace {
constexpr char kMagic[4] = {'S', 'E', 'M', 'B'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

void atomic_write_bytes(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw DataError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw DataError("rename " + tmp.string() + " -> " + path.string() +
                    " failed: " + ec.message());
  }
}

EmbeddingArchive read_archive(const fs::path& path) {
  const std::string data = read_bytes(path);
  bytes::Reader r(data, path.string());
  r.magic(kMagic, "embedding archive");
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported archive version " +
                    std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim < 2) {
    throw DataError(path.string() + ": archive dim must be >= 2, got " +
                    std::to_string(dim));
  }
  if (count == 0) {
    throw DataError(path.string() + ": archive count must be > 0");
  }
  if (r.remaining() != std::size_t{4} * dim * count) {
    throw DataError(path.string() + ": payload size mismatch (have " +
                    std::to_string(r.remaining()) + " bytes, want " +
                    std::to_string(std::size_t{4} * dim * count) + ")");
  }
  EmbeddingArchive archive;
  archive.dim = static_cast<Eigen::Index>(dim);
  archive.rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Embedding x(archive.dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      x[static_cast<Eigen::Index>(j)] = static_cast<double>(r.f32());
    }
    if (!x.allFinite()) {
      throw DataError(path.string() + ": non-finite value in row " +
                      std::to_string(i));
    }
    archive.rows.push_back(std::move(x));
  }
  return archive;
}

void write_archive(const fs::path& path, const EmbeddingArchive& archive) {
  if (archive.dim < 2) {
    throw DataError("write_archive: dim must be >= 2");
  }
  if (archive.rows.empty()) {
    throw DataError("write_archive: archive count must be > 0");
  }
  std::string out;
  out.reserve(17 + 4 * archive.rows.size() *
                       static_cast<std::size_t>(archive.dim));
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  bytes::put_u32(out, static_cast<std::uint32_t>(archive.dim));
  bytes::put_u64(out, static_cast<std::uint64_t>(archive.rows.size()));
  for (const Embedding& x : archive.rows) {
    require_same_dim(x.size(), archive.dim, "write_archive");
    for (Eigen::Index j = 0; j < archive.dim; ++j) {
      bytes::put_f32(out, static_cast<float>(x[j]));
    }
  }
  atomic_write_bytes(path, out);
}

void Manifest::validate(std::size_t archive_count) const {
  std::unordered_set<std::string> ids;
  std::unordered_set<std::uint64_t> indices;
  for (const ManifestRow& row : rows) {
    if (!ids.insert(row.utt_id).second) {
      throw DataError("manifest: duplicate utt_id '" + row.utt_id + "'");
    }
    if (!indices.insert(row.row_index).second) {
      throw DataError("manifest: duplicate row_index " +
                      std::to_string(row.row_index));
    }
    if (row.row_index >= archive_count) {
      throw DataError("manifest: row_index " + std::to_string(row.row_index) +
                      " out of range for archive of " +
                      std::to_string(archive_count) + " rows (utt '" +
                      row.utt_id + "')");
    }
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  Manifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    ManifestRow row;
    std::array<std::string, 4> fields;
    std::size_t field = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        if (field >= 4) {
          throw DataError(path.string() + ":" + std::to_string(lineno) +
                          ": expected 4 tab-separated fields");
        }
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != 4) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 4 tab-separated fields, got " +
                      std::to_string(field));
    }
    row.utt_id = fields[0];
    row.speaker_id = fields[1];
    if (row.utt_id.empty() || row.speaker_id.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": empty utt_id or speaker_id");
    }
    if (fields[2] != "-") {
      const auto label = label_from_name(fields[2]);
      if (!label) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": unknown emotion '" + fields[2] + "'");
      }
      row.emotion = *label;
    }
    try {
      row.row_index = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": bad row_index '" + fields[3] + "'");
    }
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::string out;
  for (const ManifestRow& row : manifest.rows) {
    out += row.utt_id;
    out += '\t';
    out += row.speaker_id;
    out += '\t';
    out += row.emotion ? std::string(label_name(*row.emotion)) : "-";
    out += '\t';
    out += std::to_string(row.row_index);
    out += '\n';
  }
  atomic_write_bytes(path, out);
}

}  // namespace emocomp
