#include "emocomp/emotion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bytes.hpp"
#include "emocomp/archive.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

namespace {
constexpr char kSvmMagic[4] = {'S', 'V', 'M', '1'};
constexpr char kIndicatorMagic[4] = {'I', 'N', 'D', '1'};

void check_labeled(const std::vector<Embedding>& x,
                   const std::vector<EmotionLabel>& y, const char* what) {
  if (x.size() != y.size()) {
    throw DataError(std::string(what) +
                    ": embeddings and labels differ in length");
  }
  if (x.empty()) {
    throw DataError(std::string(what) + ": empty data");
  }
  for (const Embedding& e : x) {
    require_same_dim(e.size(), x[0].size(), what);
    if (!e.allFinite()) {
      throw DataError(std::string(what) + ": non-finite features");
    }
  }
}

double accuracy_against(const Embedding& w, double b,
                        const std::vector<Embedding>& x,
                        const std::vector<EmotionLabel>& y,
                        EmotionLabel target) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool predicted_positive = w.dot(x[i]) + b > 0.0;
    const bool is_positive = y[i] == target;
    if (predicted_positive == is_positive) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

}  // namespace

EmotionBoundary train_emotion_svm(const std::vector<Embedding>& train_x,
                                  const std::vector<EmotionLabel>& train_y,
                                  const std::vector<Embedding>& dev_x,
                                  const std::vector<EmotionLabel>& dev_y,
                                  EmotionLabel target,
                                  const SvmTrainConfig& config) {
  check_labeled(train_x, train_y, "train_emotion_svm");
  if (config.reg_c <= 0.0 || config.epochs < 1 || config.eta0 <= 0.0) {
    throw DataError("train_emotion_svm: invalid configuration");
  }
  const std::size_t n = train_x.size();
  const Eigen::Index d = train_x[0].size();

  std::size_t positives = 0;
  for (EmotionLabel label : train_y) {
    if (label == target) ++positives;
  }
  if (positives == 0 || positives == n) {
    throw DataError("train_emotion_svm: need at least one positive and one "
                    "negative example for '" +
                    std::string(label_name(target)) + "'");
  }

  EmbeddingMatrix x(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x.row(static_cast<Eigen::Index>(i)) = train_x[i].transpose();
    y[static_cast<Eigen::Index>(i)] = train_y[i] == target ? 1.0 : -1.0;
  }

  Embedding w = Embedding::Zero(d);
  double b = 0.0;
  const double cn = config.reg_c / static_cast<double>(n);
  for (int t = 0; t < config.epochs; ++t) {
    const double eta = config.eta0 / (1.0 + t);
    const Eigen::VectorXd margins = y.array() * (x * w + Eigen::VectorXd::Constant(x.rows(), b)).array();
    Embedding grad_w = w;
    double grad_b = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (margins[i] < 1.0) {
        grad_w -= cn * y[i] * x.row(i).transpose();
        grad_b -= cn * y[i];
      }
    }
    w -= eta * grad_w;
    b -= eta * grad_b;
  }

  const double w_norm = w.norm();
  if (w_norm <= 1e-10) {
    throw NumericError("train_emotion_svm: degenerate weight vector");
  }

  EmotionBoundary boundary;
  boundary.emotion = target;
  boundary.w = w;
  boundary.b = b;
  boundary.n = w / w_norm;
  if (!dev_x.empty()) {
    check_labeled(dev_x, dev_y, "train_emotion_svm dev");
    boundary.dev_accuracy = accuracy_against(w, b, dev_x, dev_y, target);
  } else {
    boundary.dev_accuracy = accuracy_against(w, b, train_x, train_y, target);
  }
  return boundary;
}

double directional_distance(const Embedding& x,
                            const EmotionBoundary& boundary) {
  require_same_dim(x.size(), boundary.n.size(), "directional_distance");
  return boundary.n.dot(x) + boundary.b / boundary.w.norm();
}

Embedding compensate(const Embedding& z, const EmotionBoundary& boundary,
                     double alpha) {
  require_same_dim(z.size(), boundary.n.size(), "compensate");
  if (!std::isfinite(alpha)) {
    throw DataError("compensate: alpha must be finite");
  }
  if (alpha == 0.0) {
    return z;
  }
  return z + alpha * boundary.n;
}

namespace {

struct IndicatorBatch {
  EmbeddingMatrix x;
  std::vector<int> y;
};

IndicatorBatch make_batch(const std::vector<Embedding>& x,
                          const std::vector<EmotionLabel>& y,
                          const char* what) {
  check_labeled(x, y, what);
  IndicatorBatch batch;
  batch.x.resize(static_cast<Eigen::Index>(x.size()), x[0].size());
  batch.y.reserve(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    batch.x.row(static_cast<Eigen::Index>(i)) = x[i].transpose();
    batch.y.push_back(label_index(y[i]));
  }
  return batch;
}

struct ForwardState {
  Eigen::MatrixXd a1;      // n x hidden, pre-activation
  Eigen::MatrixXd hidden;  // n x hidden, after ramp
  Eigen::MatrixXd probs;   // n x 4
  double loss = 0.0;
};

ForwardState indicator_forward(const EmotionIndicator& ind,
                               const EmbeddingMatrix& x,
                               const std::vector<int>& y) {
  ForwardState state;
  state.a1 = (x * ind.w1.transpose()).rowwise() + ind.b1.transpose();
  state.hidden = state.a1.cwiseMax(0.0);
  Eigen::MatrixXd logits =
      (state.hidden * ind.w2.transpose()).rowwise() + ind.b2.transpose();
  state.probs = logits;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = state.probs.row(i).maxCoeff();
    state.probs.row(i) = (state.probs.row(i).array() - mx).exp();
    state.probs.row(i) /= state.probs.row(i).sum();
    loss -= std::log(std::max(
        state.probs(i, y[static_cast<std::size_t>(i)]), 1e-300));
  }
  state.loss = loss / static_cast<double>(logits.rows());
  return state;
}

}  // namespace

IndicatorGradients indicator_loss_and_gradients(
    const EmotionIndicator& ind, const std::vector<Embedding>& x,
    const std::vector<EmotionLabel>& y) {
  const IndicatorBatch batch = make_batch(x, y, "indicator gradients");
  require_same_dim(batch.x.cols(), ind.dim(), "indicator gradients");
  const ForwardState state = indicator_forward(ind, batch.x, batch.y);
  const Eigen::Index n = batch.x.rows();

  Eigen::MatrixXd dlogits = state.probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    dlogits(i, batch.y[static_cast<std::size_t>(i)]) -= 1.0;
  }
  dlogits /= static_cast<double>(n);

  IndicatorGradients grads;
  grads.loss = state.loss;
  grads.w2 = dlogits.transpose() * state.hidden;
  grads.b2 = dlogits.colwise().sum().transpose();
  Eigen::MatrixXd dhidden = dlogits * ind.w2;
  dhidden = (state.a1.array() > 0.0).select(dhidden, 0.0);
  grads.w1 = dhidden.transpose() * batch.x;
  grads.b1 = dhidden.colwise().sum().transpose();
  return grads;
}

IndicatorTrainResult train_indicator(const std::vector<Embedding>& train_x,
                                     const std::vector<EmotionLabel>& train_y,
                                     const std::vector<Embedding>& dev_x,
                                     const std::vector<EmotionLabel>& dev_y,
                                     std::uint64_t seed,
                                     const IndicatorTrainConfig& config) {
  if (config.hidden < 1 || config.max_epochs < 1 ||
      config.learning_rate <= 0.0 || config.patience < 1) {
    throw DataError("train_indicator: invalid configuration");
  }
  const IndicatorBatch train = make_batch(train_x, train_y, "train_indicator");
  const IndicatorBatch dev = make_batch(dev_x, dev_y, "train_indicator dev");
  require_same_dim(train.x.cols(), dev.x.cols(), "train_indicator");
  for (EmotionLabel e : kAllEmotions) {
    const int idx = label_index(e);
    const auto has = [idx](const std::vector<int>& labels) {
      return std::find(labels.begin(), labels.end(), idx) != labels.end();
    };
    if (!has(train.y) || !has(dev.y)) {
      throw DataError("train_indicator: class '" +
                      std::string(label_name(e)) +
                      "' missing from train or dev split");
    }
  }

  const Eigen::Index d = train.x.cols();
  Rng rng(seed);
  EmotionIndicator ind;
  ind.w1.resize(config.hidden, d);
  ind.b1 = Eigen::VectorXd::Zero(config.hidden);
  ind.w2.resize(kNumEmotions, config.hidden);
  ind.b2 = Eigen::VectorXd::Zero(kNumEmotions);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index r = 0; r < ind.w1.rows(); ++r) {
    for (Eigen::Index c = 0; c < ind.w1.cols(); ++c) {
      ind.w1(r, c) = s1 * rng.normal();
    }
  }
  const double s2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (Eigen::Index r = 0; r < ind.w2.rows(); ++r) {
    for (Eigen::Index c = 0; c < ind.w2.cols(); ++c) {
      ind.w2(r, c) = s2 * rng.normal();
    }
  }

  IndicatorTrainResult result;
  EmotionIndicator best = ind;
  double best_dev = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    const ForwardState train_state =
        indicator_forward(ind, train.x, train.y);
    if (!std::isfinite(train_state.loss) || train_state.loss > 1e6) {
      throw NumericError("train_indicator: loss diverged at epoch " +
                         std::to_string(epoch) + " (" +
                         std::to_string(train_state.loss) + ")");
    }

    Eigen::MatrixXd dlogits = train_state.probs;
    for (Eigen::Index i = 0; i < train.x.rows(); ++i) {
      dlogits(i, train.y[static_cast<std::size_t>(i)]) -= 1.0;
    }
    dlogits /= static_cast<double>(train.x.rows());
    Eigen::MatrixXd gw2 = dlogits.transpose() * train_state.hidden;
    Eigen::VectorXd gb2 = dlogits.colwise().sum().transpose();
    Eigen::MatrixXd dhidden = dlogits * ind.w2;
    dhidden = (train_state.a1.array() > 0.0).select(dhidden, 0.0);
    Eigen::MatrixXd gw1 = dhidden.transpose() * train.x;
    Eigen::VectorXd gb1 = dhidden.colwise().sum().transpose();

    ind.w1 -= config.learning_rate * gw1;
    ind.b1 -= config.learning_rate * gb1;
    ind.w2 -= config.learning_rate * gw2;
    ind.b2 -= config.learning_rate * gb2;

    const double dev_loss = indicator_forward(ind, dev.x, dev.y).loss;
    result.final_train_loss = train_state.loss;
    if (dev_loss < best_dev - config.min_delta) {
      best_dev = dev_loss;
      best = ind;
      stale = 0;
    } else {
      ++stale;
      if (stale >= config.patience) {
        ++epoch;
        break;
      }
    }
  }
  result.indicator = best;
  result.best_dev_loss = best_dev;
  result.epochs_run = epoch;
  return result;
}

Eigen::Vector4d indicator_probs(const EmotionIndicator& ind,
                                const Embedding& x) {
  require_same_dim(x.size(), ind.dim(), "indicator_probs");
  Eigen::VectorXd hidden = (ind.w1 * x + ind.b1).cwiseMax(0.0);
  Eigen::Vector4d logits = ind.w2 * hidden + ind.b2;
  const double mx = logits.maxCoeff();
  Eigen::Vector4d p = (logits.array() - mx).exp();
  return p / p.sum();
}

std::pair<EmotionLabel, Eigen::Vector4d> predict_emotion(
    const Embedding& x, const EmotionIndicator& ind) {
  const Eigen::Vector4d probs = indicator_probs(ind, x);
  int best = 0;
  for (int c = 1; c < kNumEmotions; ++c) {
    if (probs[c] > probs[best]) best = c;  // ties keep the earlier label
  }
  return {static_cast<EmotionLabel>(best), probs};
}

std::pair<Embedding, EmotionLabel> compensate_pipeline(
    const Embedding& x_orig, const Embedding& z_anon,
    const std::array<EmotionBoundary, 4>& boundaries,
    const EmotionIndicator& indicator, const CompensationConfig& config) {
  require_same_dim(x_orig.size(), z_anon.size(), "compensate_pipeline");
  const EmotionLabel predicted = predict_emotion(x_orig, indicator).first;
  if (predicted == EmotionLabel::kNeutral && config.skip_neutral) {
    return {z_anon, predicted};
  }
  const EmotionBoundary& boundary = boundaries[label_index(predicted)];
  if (boundary.n.size() == 0) {
    throw DataError("compensate_pipeline: missing boundary for '" +
                    std::string(label_name(predicted)) + "'");
  }
  if (boundary.emotion != predicted) {
    throw DataError("compensate_pipeline: boundary order mismatch");
  }
  return {compensate(z_anon, boundary, config.alpha_for(predicted)),
          predicted};
}

AlphaSweepTable sweep_alpha(const std::vector<EmotionLabel>& dev_labels,
                            const std::vector<Embedding>& dev_anon,
                            const std::array<EmotionBoundary, 4>& boundaries,
                            const EmotionIndicator& reference,
                            const std::vector<double>& grid) {
  if (grid.empty()) {
    throw DataError("sweep_alpha: empty grid");
  }
  if (dev_labels.size() != dev_anon.size() || dev_anon.empty()) {
    throw DataError("sweep_alpha: labels and embeddings differ in length");
  }

  AlphaSweepTable table;
  table.grid = grid;

  std::array<std::vector<std::size_t>, 4> by_label;
  for (std::size_t i = 0; i < dev_labels.size(); ++i) {
    by_label[label_index(dev_labels[i])].push_back(i);
  }

  // neutral is never compensated; its recall is constant across the grid
  double neutral_recall = std::numeric_limits<double>::quiet_NaN();
  const auto& neutral_idx = by_label[label_index(EmotionLabel::kNeutral)];
  if (!neutral_idx.empty()) {
    std::size_t hit = 0;
    for (std::size_t i : neutral_idx) {
      if (predict_emotion(dev_anon[i], reference).first ==
          EmotionLabel::kNeutral) {
        ++hit;
      }
    }
    neutral_recall = static_cast<double>(hit) /
                     static_cast<double>(neutral_idx.size());
  }

  for (EmotionLabel e : kAllEmotions) {
    const int k = label_index(e);
    table.recall[k].assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    if (e == EmotionLabel::kNeutral) {
      std::fill(table.recall[k].begin(), table.recall[k].end(),
                neutral_recall);
      continue;
    }
    const auto& idx = by_label[k];
    if (idx.empty()) continue;
    const EmotionBoundary& boundary = boundaries[k];
    if (boundary.n.size() == 0 || boundary.emotion != e) {
      throw DataError("sweep_alpha: missing boundary for '" +
                      std::string(label_name(e)) + "'");
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      std::size_t hit = 0;
      for (std::size_t i : idx) {
        const Embedding edited = compensate(dev_anon[i], boundary, grid[g]);
        if (predict_emotion(edited, reference).first == e) ++hit;
      }
      table.recall[k][g] =
          static_cast<double>(hit) / static_cast<double>(idx.size());
    }
  }

  table.uar.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    int classes = 0;
    for (int k = 0; k < kNumEmotions; ++k) {
      if (!std::isnan(table.recall[k][g])) {
        sum += table.recall[k][g];
        ++classes;
      }
    }
    table.uar[g] = classes > 0 ? sum / classes
                               : std::numeric_limits<double>::quiet_NaN();
  }
  return table;
}

CalibrationResult calibrate_alpha(
    const std::vector<EmotionLabel>& dev_labels,
    const std::vector<Embedding>& dev_anon,
    const std::array<EmotionBoundary, 4>& boundaries,
    const EmotionIndicator& reference, const std::vector<double>& grid) {
  if (grid.empty()) {
    throw DataError("calibrate_alpha: empty grid");
  }
  for (EmotionLabel e :
       {EmotionLabel::kHappy, EmotionLabel::kSad, EmotionLabel::kAngry}) {
    if (std::find(dev_labels.begin(), dev_labels.end(), e) ==
        dev_labels.end()) {
      throw DataError("calibrate_alpha: emotion '" +
                      std::string(label_name(e)) + "' absent from dev set");
    }
  }

  CalibrationResult result;
  result.table = sweep_alpha(dev_labels, dev_anon, boundaries, reference, grid);
  result.config.skip_neutral = true;
  result.config.alpha[label_index(EmotionLabel::kNeutral)] = 0.0;

  for (EmotionLabel e :
       {EmotionLabel::kHappy, EmotionLabel::kSad, EmotionLabel::kAngry}) {
    const auto& recalls = result.table.recall[label_index(e)];
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      const double cand = recalls[g];
      const double incumbent = recalls[best];
      if (cand > incumbent) {
        best = g;
      } else if (cand == incumbent) {
        // ties break toward smaller |alpha|, then the positive sign
        const double ca = std::abs(grid[g]);
        const double ia = std::abs(grid[best]);
        if (ca < ia || (ca == ia && grid[g] > grid[best])) {
          best = g;
        }
      }
    }
    result.config.alpha[label_index(e)] = grid[best];
  }
  return result;
}

void write_boundaries(const std::filesystem::path& path,
                      const std::array<EmotionBoundary, 4>& boundaries) {
  std::string out;
  for (EmotionLabel e : kAllEmotions) {
    const EmotionBoundary& boundary = boundaries[label_index(e)];
    if (boundary.emotion != e || boundary.w.size() == 0) {
      throw DataError("write_boundaries: boundary for '" +
                      std::string(label_name(e)) + "' missing or misordered");
    }
    out.append(kSvmMagic, 4);
    bytes::put_u32(out, static_cast<std::uint32_t>(boundary.w.size()));
    out.push_back(static_cast<char>(label_index(e)));
    bytes::put_f32(out, static_cast<float>(boundary.b));
    for (Eigen::Index i = 0; i < boundary.w.size(); ++i) {
      bytes::put_f32(out, static_cast<float>(boundary.w[i]));
    }
  }
  atomic_write_bytes(path, out);
}

std::array<EmotionBoundary, 4> read_boundaries(
    const std::filesystem::path& path) {
  const std::string data = read_bytes(path);
  bytes::Reader r(data, path.string());
  std::array<EmotionBoundary, 4> boundaries;
  for (EmotionLabel e : kAllEmotions) {
    r.magic(kSvmMagic, "emotion boundary");
    const std::uint32_t dim = r.u32();
    const std::uint8_t id = r.u8();
    if (id != static_cast<std::uint8_t>(label_index(e))) {
      throw DataError(path.string() + ": boundary records out of label order");
    }
    EmotionBoundary boundary;
    boundary.emotion = e;
    boundary.b = static_cast<double>(r.f32());
    boundary.w.resize(static_cast<Eigen::Index>(dim));
    for (std::uint32_t i = 0; i < dim; ++i) {
      boundary.w[static_cast<Eigen::Index>(i)] = static_cast<double>(r.f32());
    }
    const double n = boundary.w.norm();
    if (n <= 1e-10) {
      throw DataError(path.string() + ": degenerate boundary weights");
    }
    boundary.n = boundary.w / n;
    boundaries[label_index(e)] = std::move(boundary);
  }
  r.expect_end("emotion boundaries");
  return boundaries;
}

void write_indicator(const std::filesystem::path& path,
                     const EmotionIndicator& ind) {
  std::string out;
  out.append(kIndicatorMagic, 4);
  bytes::put_u32(out, static_cast<std::uint32_t>(ind.dim()));
  bytes::put_u32(out, static_cast<std::uint32_t>(ind.hidden()));
  bytes::put_u32(out, static_cast<std::uint32_t>(kNumEmotions));
  const auto put_matrix = [&out](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        bytes::put_f32(out, static_cast<float>(m(r, c)));
      }
    }
  };
  const auto put_vector = [&out](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      bytes::put_f32(out, static_cast<float>(v[i]));
    }
  };
  put_matrix(ind.w1);
  put_vector(ind.b1);
  put_matrix(ind.w2);
  put_vector(ind.b2);
  atomic_write_bytes(path, out);
}

EmotionIndicator read_indicator(const std::filesystem::path& path) {
  const std::string data = read_bytes(path);
  bytes::Reader r(data, path.string());
  r.magic(kIndicatorMagic, "emotion indicator");
  const std::uint32_t dim = r.u32();
  const std::uint32_t hidden = r.u32();
  const std::uint32_t classes = r.u32();
  if (classes != kNumEmotions || dim < 2 || hidden < 1) {
    throw DataError(path.string() + ": bad indicator header");
  }
  EmotionIndicator ind;
  const auto get_matrix = [&r](Eigen::MatrixXd& m, std::uint32_t rows,
                               std::uint32_t cols) {
    m.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        m(i, j) = static_cast<double>(r.f32());
      }
    }
  };
  const auto get_vector = [&r](Eigen::VectorXd& v, std::uint32_t size) {
    v.resize(size);
    for (std::uint32_t i = 0; i < size; ++i) {
      v[i] = static_cast<double>(r.f32());
    }
  };
  get_matrix(ind.w1, hidden, dim);
  get_vector(ind.b1, hidden);
  get_matrix(ind.w2, kNumEmotions, hidden);
  get_vector(ind.b2, kNumEmotions);
  r.expect_end("emotion indicator");
  return ind;
}

}  // namespace emocomp
