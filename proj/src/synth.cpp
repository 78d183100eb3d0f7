#include "emocomp/synth.hpp"

#include <string>

#include "bytes.hpp"
#include "emocomp/emotion.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

namespace {

constexpr char kTruthMagic[4] = {'T', 'R', 'U', '1'};

void validate_spec(const WorldSpec& spec) {
  if (spec.dim < 8) {
    throw DataError("world spec: dim must be >= 8, got " +
                    std::to_string(spec.dim));
  }
  if (spec.n_speakers < 1 || spec.utts_per_speaker_per_emotion < 1) {
    throw DataError("world spec: speaker and utterance counts must be >= 1");
  }
  if (spec.speaker_spread <= 0.0) {
    throw DataError("world spec: speaker_spread must be > 0");
  }
  if (spec.emotion_magnitude < 0.0 || spec.noise < 0.0 ||
      spec.speaker_emotion_jitter < 0.0) {
    throw DataError("world spec: magnitudes must be non-negative");
  }
}

Embedding draw_normal_vector(Rng& rng, Eigen::Index dim) {
  Embedding v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    v[i] = rng.normal();
  }
  return v;
}

std::string pad3(int v) {
  std::string s = std::to_string(v);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

World gen_world(const WorldSpec& spec) {
  validate_spec(spec);
  const Eigen::Index d = spec.dim;

  WorldTruth truth;
  truth.spec = spec;

  // Three orthonormal directions for happy/sad/angry, scaled to the
  // emotion magnitude; neutral keeps the zero offset.
  {
    Rng rng(mix_seed(spec.seed, fnv1a64("emotion-directions")));
    std::vector<Embedding> dirs;
    while (dirs.size() < 3) {
      Embedding g = draw_normal_vector(rng, d);
      for (const Embedding& u : dirs) {
        g -= g.dot(u) * u;
      }
      const double n = g.norm();
      if (n < 1e-8) continue;
      dirs.push_back(g / n);
    }
    truth.emotion_offsets[label_index(EmotionLabel::kNeutral)] =
        Embedding::Zero(d);
    truth.emotion_offsets[label_index(EmotionLabel::kHappy)] =
        spec.emotion_magnitude * dirs[0];
    truth.emotion_offsets[label_index(EmotionLabel::kSad)] =
        spec.emotion_magnitude * dirs[1];
    truth.emotion_offsets[label_index(EmotionLabel::kAngry)] =
        spec.emotion_magnitude * dirs[2];
  }

  {
    Rng rng(mix_seed(spec.seed, fnv1a64("speaker-centers")));
    truth.speaker_centers.resize(spec.n_speakers, d);
    for (int s = 0; s < spec.n_speakers; ++s) {
      for (Eigen::Index i = 0; i < d; ++i) {
        truth.speaker_centers(s, i) = spec.speaker_spread * rng.normal();
      }
    }
  }

  World world;
  world.archive.dim = d;
  const std::uint64_t utt_tag = mix_seed(spec.seed, fnv1a64("utterances"));
  for (int s = 0; s < spec.n_speakers; ++s) {
    // per-speaker derived seed keeps generation order-independent
    Rng rng(mix_seed(utt_tag, static_cast<std::uint64_t>(s)));
    const std::string speaker_id = "s" + pad3(s);
    for (EmotionLabel e : kAllEmotions) {
      Embedding offset = truth.emotion_offsets[label_index(e)];
      if (spec.speaker_emotion_jitter > 0.0) {
        offset += spec.speaker_emotion_jitter * draw_normal_vector(rng, d);
      }
      for (int u = 0; u < spec.utts_per_speaker_per_emotion; ++u) {
        Embedding x = truth.speaker_centers.row(s).transpose() + offset +
                      spec.noise * draw_normal_vector(rng, d);
        ManifestRow row;
        row.utt_id =
            speaker_id + "-" + std::string(label_name(e)) + "-" + pad3(u);
        row.speaker_id = speaker_id;
        row.emotion = e;
        row.row_index = world.archive.rows.size();
        world.archive.rows.push_back(std::move(x));
        world.manifest.rows.push_back(std::move(row));
      }
    }
  }
  world.truth = truth;
  return world;
}

double oracle_direction_alignment(const EmotionBoundary& boundary,
                                  const WorldTruth& truth) {
  if (boundary.emotion == EmotionLabel::kNeutral) {
    throw DataError("oracle_direction_alignment: neutral has no direction");
  }
  const Eigen::Index d = truth.spec.dim;
  Embedding mean_other = Embedding::Zero(d);
  for (EmotionLabel e : kAllEmotions) {
    if (e != boundary.emotion) {
      mean_other += truth.emotion_offsets[label_index(e)];
    }
  }
  mean_other /= 3.0;
  Embedding contrast =
      truth.emotion_offsets[label_index(boundary.emotion)] - mean_other;
  const double n = contrast.norm();
  if (n < 1e-12) {
    throw NumericError("oracle_direction_alignment: degenerate contrast");
  }
  require_same_dim(boundary.n.size(), d, "oracle_direction_alignment");
  return boundary.n.dot(contrast / n);
}

void write_truth(const std::filesystem::path& path, const WorldTruth& truth) {
  std::string out;
  out.append(kTruthMagic, 4);
  bytes::put_u32(out, static_cast<std::uint32_t>(truth.spec.dim));
  bytes::put_u32(out, static_cast<std::uint32_t>(truth.spec.n_speakers));
  for (Eigen::Index s = 0; s < truth.speaker_centers.rows(); ++s) {
    for (Eigen::Index i = 0; i < truth.spec.dim; ++i) {
      bytes::put_f32(out, static_cast<float>(truth.speaker_centers(s, i)));
    }
  }
  for (const Embedding& o : truth.emotion_offsets) {
    for (Eigen::Index i = 0; i < truth.spec.dim; ++i) {
      bytes::put_f32(out, static_cast<float>(o[i]));
    }
  }
  atomic_write_bytes(path, out);
}

WorldTruth read_truth(const std::filesystem::path& path) {
  const std::string data = read_bytes(path);
  bytes::Reader r(data, path.string());
  r.magic(kTruthMagic, "world truth");
  WorldTruth truth;
  truth.spec.dim = static_cast<Eigen::Index>(r.u32());
  truth.spec.n_speakers = static_cast<int>(r.u32());
  if (truth.spec.dim < 2 || truth.spec.n_speakers < 1) {
    throw DataError(path.string() + ": bad truth header");
  }
  truth.speaker_centers.resize(truth.spec.n_speakers, truth.spec.dim);
  for (int s = 0; s < truth.spec.n_speakers; ++s) {
    for (Eigen::Index i = 0; i < truth.spec.dim; ++i) {
      truth.speaker_centers(s, i) = static_cast<double>(r.f32());
    }
  }
  for (Embedding& o : truth.emotion_offsets) {
    o.resize(truth.spec.dim);
    for (Eigen::Index i = 0; i < truth.spec.dim; ++i) {
      o[i] = static_cast<double>(r.f32());
    }
  }
  r.expect_end("world truth");
  return truth;
}

}  // namespace emocomp
