#include "emocomp/anonymizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bytes.hpp"
#include "emocomp/archive.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

namespace {
constexpr char kChainMagic[4] = {'O', 'H', 'C', '1'};
}

std::string_view anonymizer_mode_name(AnonymizerMode mode) {
  switch (mode) {
    case AnonymizerMode::kTrainedChain:
      return "trained-chain";
    case AnonymizerMode::kRandomChainSpeakerLevel:
      return "random-chain-speaker-level";
    case AnonymizerMode::kRandomChainUtteranceLevel:
      return "random-chain-utterance-level";
    case AnonymizerMode::kSelectionAverage:
      return "selection-average";
  }
  return "unknown";
}

AnonymizerMode anonymizer_mode_from_name(std::string_view name) {
  if (name == "trained-chain") return AnonymizerMode::kTrainedChain;
  if (name == "random-chain-speaker-level")
    return AnonymizerMode::kRandomChainSpeakerLevel;
  if (name == "random-chain-utterance-level")
    return AnonymizerMode::kRandomChainUtteranceLevel;
  if (name == "selection-average") return AnonymizerMode::kSelectionAverage;
  throw DataError("unknown anonymizer mode '" + std::string(name) + "'");
}

Embedding instance_normalize(const Embedding& x) {
  validate_embedding(x, "instance_normalize");
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double std = std::sqrt(var);
  if (std <= 1e-12) {
    throw NumericError(
        "instance_normalize: degenerate input (per-vector std " +
        std::to_string(std) + ")");
  }
  return (x.array() - mean) / std;
}

Embedding anonymize_ohnn(const Embedding& x, const OrthogonalChain& chain) {
  return chain_apply(chain, x);
}

std::pair<Embedding, std::size_t> anonymize_utterance_level(
    const Embedding& x, const std::vector<OrthogonalChain>& chain_pool,
    std::uint64_t utt_seed) {
  if (chain_pool.empty()) {
    throw DataError("anonymize_utterance_level: empty chain pool");
  }
  const std::size_t index = static_cast<std::size_t>(
      splitmix64(utt_seed) % chain_pool.size());
  return {chain_apply(chain_pool[index], x), index};
}

std::vector<OrthogonalChain> build_chain_pool(Eigen::Index dim, int k,
                                              int pool_size,
                                              std::uint64_t seed) {
  if (pool_size < 1) {
    throw DataError("build_chain_pool: pool_size must be >= 1");
  }
  std::vector<OrthogonalChain> pool;
  pool.reserve(static_cast<std::size_t>(pool_size));
  for (int r = 0; r < pool_size; ++r) {
    pool.push_back(random_chain(
        dim, k, mix_seed(seed, static_cast<std::uint64_t>(r))));
  }
  return pool;
}

Embedding anonymize_selection(const Embedding& x,
                              const std::vector<Embedding>& pool, int select_n,
                              std::uint64_t seed) {
  if (select_n < 1) {
    throw DataError("anonymize_selection: select_n must be >= 1");
  }
  if (pool.size() < static_cast<std::size_t>(select_n)) {
    throw DataError("anonymize_selection: pool of " +
                    std::to_string(pool.size()) +
                    " is smaller than select_n = " + std::to_string(select_n));
  }
  for (const Embedding& p : pool) {
    require_same_dim(p.size(), x.size(), "anonymize_selection");
  }
  Rng rng(seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int i = 0; i < select_n; ++i) {
    const std::size_t j = i + rng.index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  Embedding mean = Embedding::Zero(x.size());
  double mean_norm = 0.0;
  for (int i = 0; i < select_n; ++i) {
    mean += pool[order[i]];
    mean_norm += pool[order[i]].norm();
  }
  mean /= select_n;
  mean_norm /= select_n;
  const double n = mean.norm();
  if (n < 1e-8) {
    throw NumericError(
        "anonymize_selection: averaged pseudo-speaker collapsed to zero");
  }
  return mean * (mean_norm / n);
}

namespace {

void validate_speakers(const std::vector<Embedding>& x,
                       const std::vector<int>& speaker, int n_speakers,
                       const char* what) {
  if (x.size() != speaker.size()) {
    throw DataError(std::string(what) +
                    ": embeddings and speaker labels differ in length");
  }
  if (x.empty()) {
    throw DataError(std::string(what) + ": empty data");
  }
  std::vector<int> counts(static_cast<std::size_t>(n_speakers), 0);
  for (int s : speaker) {
    if (s < 0 || s >= n_speakers) {
      throw DataError(std::string(what) + ": speaker id out of range");
    }
    ++counts[static_cast<std::size_t>(s)];
  }
  for (int c : counts) {
    if (c < 2) {
      throw DataError(std::string(what) +
                      ": every speaker needs at least 2 utterances");
    }
  }
}

EmbeddingMatrix to_matrix(const std::vector<Embedding>& x) {
  EmbeddingMatrix m(static_cast<Eigen::Index>(x.size()), x[0].size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    require_same_dim(x[i].size(), m.cols(), "embedding batch");
    m.row(static_cast<Eigen::Index>(i)) = x[i].transpose();
  }
  return m;
}

}  // namespace

OhnnGradients ohnn_loss_and_gradients(const Eigen::MatrixXd& reflectors,
                                      const Eigen::MatrixXd& class_dirs,
                                      const EmbeddingMatrix& x,
                                      const std::vector<int>& speaker,
                                      int n_speakers,
                                      const TrainConfig& config) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index k = reflectors.rows();
  if (class_dirs.rows() != n_speakers || class_dirs.cols() != d ||
      reflectors.cols() != d) {
    throw DimensionError("ohnn_loss_and_gradients: shape mismatch");
  }

  // forward pass through the reflection chain (projective form keeps the
  // map orthogonal for any reflector scale)
  EmbeddingMatrix z = x;
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::VectorXd v = reflectors.row(r).transpose();
    const double vv = v.squaredNorm();
    z.noalias() -= (2.0 / vv) * (z * v) * v.transpose();
  }

  const Eigen::VectorXd z_norm = z.rowwise().norm();
  const Eigen::VectorXd w_norm = class_dirs.rowwise().norm();
  for (Eigen::Index c = 0; c < n_speakers; ++c) {
    if (w_norm[c] < 1e-12) {
      throw NumericError("ohnn loss: degenerate class direction");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z_norm[i] < 1e-12) {
      throw NumericError("ohnn loss: zero embedding in batch");
    }
  }

  Eigen::MatrixXd cosine = z * class_dirs.transpose();  // n x C
  cosine.array().colwise() /= z_norm.array();
  cosine.array().rowwise() /= w_norm.transpose().array();

  const double cos_m = std::cos(config.aam_margin);
  const double sin_m = std::sin(config.aam_margin);
  const double s = config.aam_scale;
  constexpr double kClamp = 1.0 - 1e-9;

  // additive-angular-margin softmax with jointly trained class directions
  Eigen::MatrixXd logits = s * cosine;
  Eigen::VectorXd dtarget_dcos(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index y = speaker[static_cast<std::size_t>(i)];
    const double cy = std::clamp(cosine(i, y), -kClamp, kClamp);
    const double sy = std::sqrt(1.0 - cy * cy);
    logits(i, y) = s * (cy * cos_m - sy * sin_m);
    dtarget_dcos[i] = s * (cos_m + sin_m * cy / sy);
  }

  Eigen::MatrixXd probs = logits;
  double loss_cls = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = probs.row(i).maxCoeff();
    probs.row(i) = (probs.row(i).array() - mx).exp();
    const double sum = probs.row(i).sum();
    probs.row(i) /= sum;
    loss_cls -= std::log(
        std::max(probs(i, speaker[static_cast<std::size_t>(i)]), 1e-300));
  }
  loss_cls /= static_cast<double>(n);

  // push-away hinge on cos(x, OH(x))
  const Eigen::VectorXd x_norm = x.rowwise().norm();
  Eigen::VectorXd cos_xz(n);
  double loss_push = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cos_xz[i] = x.row(i).dot(z.row(i)) / (x_norm[i] * z_norm[i]);
    loss_push += std::max(0.0, cos_xz[i] - config.cos_margin);
  }
  loss_push /= static_cast<double>(n);

  OhnnGradients out;
  out.loss_cls = loss_cls;
  out.loss_push = loss_push;
  out.loss = config.lambda_cls * loss_cls + config.lambda_push * loss_push;
  if (!std::isfinite(out.loss)) {
    throw NumericError("ohnn loss diverged (non-finite)");
  }

  // dL/dcos, with the margin derivative on each sample's target column
  Eigen::MatrixXd g_cos = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    g_cos(i, speaker[static_cast<std::size_t>(i)]) -= 1.0;
  }
  g_cos *= config.lambda_cls / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index y = speaker[static_cast<std::size_t>(i)];
    g_cos(i, y) *= dtarget_dcos[i];
  }
  for (Eigen::Index c = 0; c < n_speakers; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (c != speaker[static_cast<std::size_t>(i)]) {
        g_cos(i, c) *= s;
      }
    }
  }

  const Eigen::MatrixXd w_hat =
      (class_dirs.array().colwise() / w_norm.array()).matrix();

  // gradient w.r.t. z from the classification term
  const Eigen::VectorXd row_dot =
      (g_cos.array() * cosine.array()).rowwise().sum().matrix();
  EmbeddingMatrix g_z = g_cos * w_hat;
  g_z.array().colwise() /= z_norm.array();
  g_z -= ((row_dot.array() / z_norm.array().square()).matrix())
             .asDiagonal() * z;

  // gradient w.r.t. class directions
  const Eigen::VectorXd col_dot =
      (g_cos.array() * cosine.array()).colwise().sum().transpose().matrix();
  Eigen::MatrixXd z_hat = z;
  z_hat.array().colwise() /= z_norm.array();
  out.class_dirs = g_cos.transpose() * z_hat;
  out.class_dirs.array().colwise() /= w_norm.array();
  out.class_dirs -=
      ((col_dot.array() / w_norm.array().square()).matrix()).asDiagonal() *
      class_dirs;

  // add the push-away gradient w.r.t. z
  const double push_w = config.lambda_push / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cos_xz[i] > config.cos_margin) {
      g_z.row(i) += push_w * (x.row(i) / (x_norm[i] * z_norm[i]) -
                              cos_xz[i] * z.row(i) / (z_norm[i] * z_norm[i]));
    }
  }

  // backpropagate through the chain; each reflection is an involution, so
  // layer inputs are rematerialized by applying the reflection again
  out.reflectors = Eigen::MatrixXd::Zero(k, d);
  for (Eigen::Index r = k - 1; r >= 0; --r) {
    const Eigen::VectorXd v = reflectors.row(r).transpose();
    const double vv = v.squaredNorm();
    EmbeddingMatrix h = z;
    h.noalias() -= (2.0 / vv) * (z * v) * v.transpose();
    const Eigen::VectorXd a = h * v;
    const Eigen::VectorXd b = g_z * v;
    out.reflectors.row(r) =
        (-(2.0 / vv) * (h.transpose() * b + g_z.transpose() * a) +
         (4.0 * a.dot(b) / (vv * vv)) * v)
            .transpose();
    g_z.noalias() -= (2.0 / vv) * b * v.transpose();
    z = std::move(h);
  }
  return out;
}

OhnnTrainResult train_ohnn(const std::vector<Embedding>& train_x,
                           const std::vector<int>& train_speaker,
                           const std::vector<Embedding>& dev_x,
                           const std::vector<int>& dev_speaker, int k,
                           std::uint64_t seed, const TrainConfig& config) {
  if (config.epochs < 1 || config.step_size <= 0.0 ||
      config.cos_margin < 0.0 || config.cos_margin >= 1.0) {
    throw DataError("train_ohnn: invalid training configuration");
  }
  int n_speakers = 0;
  for (int s : train_speaker) n_speakers = std::max(n_speakers, s + 1);
  if (n_speakers < 2) {
    throw DataError("train_ohnn: need at least 2 speakers");
  }
  validate_speakers(train_x, train_speaker, n_speakers, "train_ohnn");

  const Eigen::Index d = train_x[0].size();
  const EmbeddingMatrix x = to_matrix(train_x);

  // init reflectors from the seeded sphere sampler
  const OrthogonalChain init = random_chain(d, k, seed);
  Eigen::MatrixXd reflectors(k, d);
  for (int r = 0; r < k; ++r) {
    reflectors.row(r) = init.reflectors[static_cast<std::size_t>(r)].transpose();
  }

  // init class directions at the normalized class means of the initial
  // rotation's output
  EmbeddingMatrix z0 = x;
  chain_apply_rows(init, z0);
  Eigen::MatrixXd class_dirs = Eigen::MatrixXd::Zero(n_speakers, d);
  for (Eigen::Index i = 0; i < z0.rows(); ++i) {
    class_dirs.row(train_speaker[static_cast<std::size_t>(i)]) += z0.row(i);
  }
  Rng fallback(mix_seed(seed, fnv1a64("class-dirs")));
  for (int c = 0; c < n_speakers; ++c) {
    double norm = class_dirs.row(c).norm();
    if (norm < 1e-8) {
      for (Eigen::Index j = 0; j < d; ++j) {
        class_dirs(c, j) = fallback.normal();
      }
      norm = class_dirs.row(c).norm();
    }
    class_dirs.row(c) /= norm;
  }

  OhnnTrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    OhnnGradients g = ohnn_loss_and_gradients(reflectors, class_dirs, x,
                                              train_speaker, n_speakers,
                                              config);
    result.loss_history.push_back(g.loss);
    reflectors -= config.step_size * g.reflectors;
    class_dirs -= config.step_size * g.class_dirs;
    for (int r = 0; r < k; ++r) {
      const double norm = reflectors.row(r).norm();
      if (norm < 1e-12) {
        throw NumericError("train_ohnn: reflector collapsed to zero");
      }
      reflectors.row(r) /= norm;
    }
  }

  std::vector<Embedding> final_reflectors;
  final_reflectors.reserve(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    final_reflectors.push_back(reflectors.row(r).transpose());
  }
  result.chain = make_chain(d, std::move(final_reflectors), 0);

  result.final_train_loss =
      ohnn_loss_and_gradients(reflectors, class_dirs, x, train_speaker,
                              n_speakers, config)
          .loss;
  if (!dev_x.empty()) {
    if (dev_x.size() != dev_speaker.size()) {
      throw DataError("train_ohnn: dev embeddings/labels length mismatch");
    }
    result.final_dev_loss =
        ohnn_loss_and_gradients(reflectors, class_dirs, to_matrix(dev_x),
                                dev_speaker, n_speakers, config)
            .loss;
  }
  return result;
}

void write_chain(const std::filesystem::path& path,
                 const OrthogonalChain& chain) {
  std::string out;
  out.append(kChainMagic, 4);
  bytes::put_u32(out, static_cast<std::uint32_t>(chain.dim));
  bytes::put_u32(out, static_cast<std::uint32_t>(chain.reflectors.size()));
  for (const Embedding& v : chain.reflectors) {
    for (Eigen::Index i = 0; i < chain.dim; ++i) {
      bytes::put_f32(out, static_cast<float>(v[i]));
    }
  }
  atomic_write_bytes(path, out);
}

OrthogonalChain read_chain(const std::filesystem::path& path) {
  const std::string data = read_bytes(path);
  bytes::Reader r(data, path.string());
  r.magic(kChainMagic, "orthogonal chain");
  const std::uint32_t dim = r.u32();
  const std::uint32_t k = r.u32();
  if (dim < 2) {
    throw DataError(path.string() + ": chain dim must be >= 2");
  }
  std::vector<Embedding> reflectors;
  reflectors.reserve(k);
  for (std::uint32_t j = 0; j < k; ++j) {
    Embedding v(static_cast<Eigen::Index>(dim));
    for (std::uint32_t i = 0; i < dim; ++i) {
      v[static_cast<Eigen::Index>(i)] = static_cast<double>(r.f32());
    }
    reflectors.push_back(std::move(v));
  }
  r.expect_end("orthogonal chain");
  // make_chain re-normalizes in float64, restoring exact orthogonality
  return make_chain(static_cast<Eigen::Index>(dim), std::move(reflectors), 0);
}

}  // namespace emocomp
