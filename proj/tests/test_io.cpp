#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "emocomp/anonymizer.hpp"
#include "emocomp/archive.hpp"
#include "emocomp/config.hpp"
#include "emocomp/emotion.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

using namespace emocomp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("emocomp-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static inline int counter = 0;
};

EmbeddingArchive random_archive(std::uint64_t seed, Eigen::Index dim,
                                std::size_t count) {
  Rng rng(seed);
  EmbeddingArchive archive;
  archive.dim = dim;
  for (std::size_t i = 0; i < count; ++i) {
    Embedding x(dim);
    for (Eigen::Index j = 0; j < dim; ++j) x[j] = rng.normal();
    archive.rows.push_back(std::move(x));
  }
  return archive;
}

}  // namespace

TEST_CASE("archive golden bytes for a 1x2 archive") {
  TempDir tmp;
  EmbeddingArchive archive;
  archive.dim = 2;
  Embedding row(2);
  row << 1.0, -1.0;
  archive.rows.push_back(row);
  const fs::path file = tmp.path / "golden.semb";
  write_archive(file, archive);

  const std::string data = read_bytes(file);
  // 17-byte header (magic, version, u32 dim, u64 count) + 2 float32 values
  const unsigned char expected[] = {
      'S',  'E',  'M',  'B',        // magic
      0x01,                         // version
      0x02, 0x00, 0x00, 0x00,       // dim = 2, u32 LE
      0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // count = 1, u64 LE
      0x00, 0x00, 0x80, 0x3f,       // 1.0f LE
      0x00, 0x00, 0x80, 0xbf,       // -1.0f LE
  };
  REQUIRE(data.size() == sizeof(expected));
  for (std::size_t i = 0; i < sizeof(expected); ++i) {
    CHECK(static_cast<unsigned char>(data[i]) == expected[i]);
  }
}

TEST_CASE("archive round trip is bit-exact") {
  TempDir tmp;
  const EmbeddingArchive archive = random_archive(5, 17, 23);
  const fs::path a = tmp.path / "a.semb";
  const fs::path b = tmp.path / "b.semb";
  write_archive(a, archive);
  const EmbeddingArchive reread = read_archive(a);
  CHECK(reread.dim == archive.dim);
  CHECK(reread.count() == archive.count());
  write_archive(b, reread);
  CHECK(read_bytes(a) == read_bytes(b));
}

TEST_CASE("archive write rounds float64 to nearest float32") {
  TempDir tmp;
  EmbeddingArchive archive;
  archive.dim = 2;
  Embedding row(2);
  row << 0.1, 1.0 + 1e-12;
  archive.rows.push_back(row);
  const fs::path file = tmp.path / "round.semb";
  write_archive(file, archive);
  const EmbeddingArchive reread = read_archive(file);
  CHECK(reread.rows[0][0] == static_cast<double>(static_cast<float>(0.1)));
  CHECK(reread.rows[0][1] == 1.0);
}

TEST_CASE("archive rejects malformed files") {
  TempDir tmp;
  const fs::path file = tmp.path / "bad.semb";

  SUBCASE("bad magic") {
    atomic_write_bytes(file, "XXXX rest");
    CHECK_THROWS_AS(read_archive(file), DataError);
  }
  SUBCASE("truncated payload") {
    EmbeddingArchive archive = random_archive(1, 4, 2);
    write_archive(file, archive);
    std::string data = read_bytes(file);
    data.resize(data.size() - 3);
    atomic_write_bytes(file, data);
    CHECK_THROWS_AS(read_archive(file), DataError);
  }
  SUBCASE("zero count is rejected") {
    std::string data = "SEMB";
    data.push_back('\x01');
    data.append("\x02\x00\x00\x00", 4);             // dim 2
    data.append("\x00\x00\x00\x00\x00\x00\x00\x00", 8);  // count 0
    atomic_write_bytes(file, data);
    CHECK_THROWS_AS(read_archive(file), DataError);
  }
  SUBCASE("unknown version") {
    EmbeddingArchive archive = random_archive(1, 4, 2);
    write_archive(file, archive);
    std::string data = read_bytes(file);
    data[4] = '\x07';
    atomic_write_bytes(file, data);
    CHECK_THROWS_AS(read_archive(file), DataError);
  }
  SUBCASE("empty archive cannot be written") {
    EmbeddingArchive archive;
    archive.dim = 4;
    CHECK_THROWS_AS(write_archive(file, archive), DataError);
  }
}

TEST_CASE("atomic write leaves no temp file") {
  TempDir tmp;
  const fs::path file = tmp.path / "x.bin";
  atomic_write_bytes(file, "payload");
  CHECK(read_bytes(file) == "payload");
  CHECK_FALSE(fs::exists(file.string() + ".tmp"));
}

TEST_CASE("manifest round trip and validation") {
  TempDir tmp;
  Manifest manifest;
  manifest.rows.push_back({"u1", "spkA", EmotionLabel::kHappy, 0});
  manifest.rows.push_back({"u2", "spkA", std::nullopt, 1});
  manifest.rows.push_back({"u3", "spkB", EmotionLabel::kSad, 2});
  const fs::path file = tmp.path / "m.tsv";
  write_manifest(file, manifest);

  const Manifest reread = read_manifest(file);
  REQUIRE(reread.size() == 3);
  CHECK(reread.rows[0].utt_id == "u1");
  CHECK(reread.rows[1].emotion == std::nullopt);
  CHECK(reread.rows[2].emotion == EmotionLabel::kSad);
  CHECK(reread.rows[2].row_index == 2);
  reread.validate(3);

  SUBCASE("row_index out of range") {
    CHECK_THROWS_AS(reread.validate(2), DataError);
  }
  SUBCASE("duplicate utt_id") {
    Manifest bad = reread;
    bad.rows[1].utt_id = "u1";
    CHECK_THROWS_AS(bad.validate(3), DataError);
  }
  SUBCASE("duplicate row_index") {
    Manifest bad = reread;
    bad.rows[1].row_index = 0;
    CHECK_THROWS_AS(bad.validate(3), DataError);
  }
  SUBCASE("unknown emotion string") {
    atomic_write_bytes(file, "u1\tspkA\tjoyful\t0\n");
    CHECK_THROWS_AS(read_manifest(file), DataError);
  }
  SUBCASE("wrong field count") {
    atomic_write_bytes(file, "u1\tspkA\thappy\n");
    CHECK_THROWS_AS(read_manifest(file), DataError);
  }
}

TEST_CASE("chain serialization") {
  TempDir tmp;
  const OrthogonalChain chain = random_chain(48, 6, 21);
  const fs::path file = tmp.path / "chain.ohc";
  write_chain(file, chain);
  const OrthogonalChain reread = read_chain(file);
  CHECK(reread.dim == 48);
  CHECK(reread.size() == 6);
  for (const Embedding& v : reread.reflectors) {
    CHECK(std::abs(v.norm() - 1.0) < 1e-15);
  }
  // float32 storage plus re-normalization keeps the map orthogonal
  CHECK(orthogonality_check(reread) < 1e-9);
  for (std::size_t k = 0; k < chain.reflectors.size(); ++k) {
    CHECK((reread.reflectors[k] - chain.reflectors[k]).cwiseAbs().maxCoeff() <
          1e-6);
  }
}

TEST_CASE("boundary serialization keeps label order") {
  TempDir tmp;
  Rng rng(3);
  std::array<EmotionBoundary, 4> boundaries;
  for (EmotionLabel e : kAllEmotions) {
    EmotionBoundary b;
    b.emotion = e;
    b.w.resize(12);
    for (Eigen::Index i = 0; i < 12; ++i) b.w[i] = rng.normal();
    b.b = rng.normal();
    b.n = b.w.normalized();
    boundaries[label_index(e)] = std::move(b);
  }
  const fs::path file = tmp.path / "b.svm";
  write_boundaries(file, boundaries);
  const auto reread = read_boundaries(file);
  for (EmotionLabel e : kAllEmotions) {
    const auto& a = boundaries[label_index(e)];
    const auto& b = reread[label_index(e)];
    CHECK(b.emotion == e);
    CHECK(std::abs(a.b - b.b) < 1e-6);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(std::abs(b.n.norm() - 1.0) < 1e-12);
  }

  SUBCASE("misordered records are rejected") {
    std::string data = read_bytes(file);
    data[8] = '\x03';  // first record claims to be angry
    atomic_write_bytes(file, data);
    CHECK_THROWS_AS(read_boundaries(file), DataError);
  }
}

TEST_CASE("indicator serialization") {
  TempDir tmp;
  Rng rng(9);
  EmotionIndicator ind;
  ind.w1.resize(5, 8);
  ind.w2.resize(4, 5);
  ind.b1.resize(5);
  ind.b2.resize(4);
  for (Eigen::Index i = 0; i < ind.w1.size(); ++i) {
    ind.w1.data()[i] = rng.normal();
  }
  for (Eigen::Index i = 0; i < ind.w2.size(); ++i) {
    ind.w2.data()[i] = rng.normal();
  }
  for (Eigen::Index i = 0; i < 5; ++i) ind.b1[i] = rng.normal();
  for (Eigen::Index i = 0; i < 4; ++i) ind.b2[i] = rng.normal();

  const fs::path file = tmp.path / "i.ind";
  write_indicator(file, ind);
  const EmotionIndicator reread = read_indicator(file);
  CHECK(reread.dim() == 8);
  CHECK(reread.hidden() == 5);
  CHECK((reread.w1 - ind.w1).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((reread.w2 - ind.w2).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((reread.b1 - ind.b1).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((reread.b2 - ind.b2).cwiseAbs().maxCoeff() < 1e-6);

  Embedding x(8);
  for (Eigen::Index i = 0; i < 8; ++i) x[i] = rng.normal();
  const Eigen::Vector4d p = indicator_probs(reread, x);
  CHECK(std::abs(p.sum() - 1.0) < 1e-9);
}

TEST_CASE("run config parsing") {
  SUBCASE("defaults") {
    const RunConfig c = parse_run_config(json::object(), "cfg");
    CHECK(c.seed == 1);
    CHECK(c.world.dim == 192);
    CHECK(c.anonymizer.mode == AnonymizerMode::kRandomChainUtteranceLevel);
    CHECK(c.compensation.alpha[label_index(EmotionLabel::kSad)] == -35.0);
    CHECK(c.compensation.alpha[label_index(EmotionLabel::kNeutral)] == 0.0);
    // every stage seed is resolved
    CHECK(c.world.seed != 0);
    CHECK(c.anonymizer.seed != 0);
    CHECK(c.indicator_seed != 0);
    CHECK(c.split_seed != 0);
    CHECK(c.trial_seed != 0);
  }
  SUBCASE("unknown top-level key is rejected") {
    CHECK_THROWS_AS(
        parse_run_config(json::parse(R"({"wrld": {}})"), "cfg"), DataError);
  }
  SUBCASE("unknown nested key is rejected") {
    CHECK_THROWS_AS(parse_run_config(
                        json::parse(R"({"world": {"dimension": 4}})"), "cfg"),
                    DataError);
  }
  SUBCASE("explicit stage seed survives master seed change") {
    const auto doc = json::parse(R"({"seed": 9, "world": {"seed": 1234}})");
    const RunConfig c = parse_run_config(doc, "cfg");
    CHECK(c.world.seed == 1234);
    CHECK(c.seed == 9);
  }
  SUBCASE("neutral alpha must stay zero with skip_neutral") {
    const auto doc = json::parse(
        R"({"compensation": {"alpha": {"neutral": 5.0}}})");
    CHECK_THROWS_AS(parse_run_config(doc, "cfg"), DataError);
  }
  SUBCASE("echo is stable and fully resolved") {
    const RunConfig c = parse_run_config(json::object(), "cfg");
    const auto a = echo_config(c).dump();
    const auto b = echo_config(c).dump();
    CHECK(a == b);
    CHECK(a.find("\"seed\"") != std::string::npos);
    // echo parses back without unknown-key errors
    const RunConfig reparsed = parse_run_config(json::parse(a), "echo");
    CHECK(reparsed.world.seed == c.world.seed);
    CHECK(echo_config(reparsed).dump() == a);
  }
}
