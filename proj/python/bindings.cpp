#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "emocomp/anonymizer.hpp"
#include "emocomp/archive.hpp"
#include "emocomp/config.hpp"
#include "emocomp/emotion.hpp"
#include "emocomp/error.hpp"
#include "emocomp/eval.hpp"
#include "emocomp/pipeline.hpp"
#include "emocomp/synth.hpp"

namespace py = pybind11;
using namespace emocomp;

namespace {

std::vector<Embedding> rows_from_matrix(
    const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<Embedding> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(m.row(i).transpose());
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const std::vector<Embedding>& rows) {
  if (rows.empty()) {
    return Eigen::MatrixXd(0, 0);
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

EmotionLabel label_from_any(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) {
    const auto name = obj.cast<std::string>();
    const auto label = label_from_name(name);
    if (!label) {
      throw DataError("unknown emotion label '" + name + "'");
    }
    return *label;
  }
  return obj.cast<EmotionLabel>();
}

std::vector<EmotionLabel> labels_from_list(const py::sequence& seq) {
  std::vector<EmotionLabel> out;
  out.reserve(seq.size());
  for (const auto& item : seq) {
    out.push_back(label_from_any(py::reinterpret_borrow<py::object>(item)));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Speaker-embedding anonymization and emotion compensation";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  // ------------------------------------------------------------- labels
  py::enum_<EmotionLabel>(m, "EmotionLabel")
      .value("HAPPY", EmotionLabel::kHappy)
      .value("NEUTRAL", EmotionLabel::kNeutral)
      .value("SAD", EmotionLabel::kSad)
      .value("ANGRY", EmotionLabel::kAngry);

  m.def(
      "map_nine_to_four",
      [](const std::string& raw) {
        const auto parsed = raw_emotion_from_name(raw);
        if (!parsed) {
          throw DataError("unknown nine-class emotion '" + raw + "'");
        }
        return map_nine_to_four(*parsed);
      },
      py::arg("raw"),
      "Collapse a nine-class emotion name onto the four categories.");

  // ------------------------------------------------------------- linalg
  py::class_<OrthogonalChain>(m, "OrthogonalChain")
      .def_readonly("dim", &OrthogonalChain::dim)
      .def_readonly("seed", &OrthogonalChain::seed)
      .def_property_readonly("size", &OrthogonalChain::size)
      .def("apply",
           [](const OrthogonalChain& chain, const Embedding& x) {
             return chain_apply(chain, x);
           })
      .def("inverse",
           [](const OrthogonalChain& chain, const Embedding& y) {
             return chain_inverse(chain, y);
           })
      .def("__repr__", [](const OrthogonalChain& chain) {
        return "OrthogonalChain(dim=" + std::to_string(chain.dim) +
               ", reflectors=" + std::to_string(chain.size()) + ")";
      });

  m.def("householder_reflect", &householder_reflect, py::arg("v"),
        py::arg("x"));
  m.def("random_chain", &random_chain, py::arg("dim"), py::arg("k"),
        py::arg("seed"));
  m.def("orthogonality_check", &orthogonality_check, py::arg("chain"));

  // --------------------------------------------------------- anonymizer
  m.def("instance_normalize", &instance_normalize, py::arg("x"));
  m.def("anonymize_ohnn", &anonymize_ohnn, py::arg("x"), py::arg("chain"));
  m.def("build_chain_pool", &build_chain_pool, py::arg("dim"), py::arg("k"),
        py::arg("pool_size"), py::arg("seed"));
  m.def("anonymize_utterance_level", &anonymize_utterance_level,
        py::arg("x"), py::arg("chain_pool"), py::arg("utt_seed"));
  m.def(
      "anonymize_selection",
      [](const Embedding& x, const Eigen::Ref<const Eigen::MatrixXd>& pool,
         int select_n, std::uint64_t seed) {
        return anonymize_selection(x, rows_from_matrix(pool), select_n, seed);
      },
      py::arg("x"), py::arg("pool"), py::arg("select_n"), py::arg("seed"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("step_size", &TrainConfig::step_size)
      .def_readwrite("cos_margin", &TrainConfig::cos_margin)
      .def_readwrite("lambda_cls", &TrainConfig::lambda_cls)
      .def_readwrite("lambda_push", &TrainConfig::lambda_push)
      .def_readwrite("aam_margin", &TrainConfig::aam_margin)
      .def_readwrite("aam_scale", &TrainConfig::aam_scale);

  m.def(
      "train_ohnn",
      [](const Eigen::Ref<const Eigen::MatrixXd>& x,
         const std::vector<int>& speakers, int k, std::uint64_t seed,
         const TrainConfig& config) {
        const OhnnTrainResult result =
            train_ohnn(rows_from_matrix(x), speakers, {}, {}, k, seed,
                       config);
        return py::make_tuple(result.chain, result.final_train_loss);
      },
      py::arg("x"), py::arg("speakers"), py::arg("k"), py::arg("seed"),
      py::arg("config") = TrainConfig{},
      "Train a rotation chain; returns (chain, final_loss).");

  // -------------------------------------------------------------- emotion
  py::class_<EmotionBoundary>(m, "EmotionBoundary")
      .def_readonly("emotion", &EmotionBoundary::emotion)
      .def_readonly("w", &EmotionBoundary::w)
      .def_readonly("b", &EmotionBoundary::b)
      .def_readonly("n", &EmotionBoundary::n)
      .def_readonly("dev_accuracy", &EmotionBoundary::dev_accuracy);

  py::class_<SvmTrainConfig>(m, "SvmTrainConfig")
      .def(py::init<>())
      .def_readwrite("reg_c", &SvmTrainConfig::reg_c)
      .def_readwrite("epochs", &SvmTrainConfig::epochs)
      .def_readwrite("eta0", &SvmTrainConfig::eta0);

  m.def(
      "train_emotion_svm",
      [](const Eigen::Ref<const Eigen::MatrixXd>& x, const py::sequence& y,
         const py::object& target, const SvmTrainConfig& config) {
        const auto labels = labels_from_list(y);
        const auto rows = rows_from_matrix(x);
        return train_emotion_svm(rows, labels, rows, labels,
                                 label_from_any(target), config);
      },
      py::arg("x"), py::arg("y"), py::arg("target"),
      py::arg("config") = SvmTrainConfig{});

  m.def("directional_distance", &directional_distance, py::arg("x"),
        py::arg("boundary"));
  m.def("compensate", &compensate, py::arg("z"), py::arg("boundary"),
        py::arg("alpha"));

  py::class_<EmotionIndicator>(m, "EmotionIndicator")
      .def_property_readonly("dim", &EmotionIndicator::dim)
      .def_property_readonly("hidden", &EmotionIndicator::hidden);

  py::class_<IndicatorTrainConfig>(m, "IndicatorTrainConfig")
      .def(py::init<>())
      .def_readwrite("hidden", &IndicatorTrainConfig::hidden)
      .def_readwrite("max_epochs", &IndicatorTrainConfig::max_epochs)
      .def_readwrite("learning_rate", &IndicatorTrainConfig::learning_rate)
      .def_readwrite("patience", &IndicatorTrainConfig::patience)
      .def_readwrite("min_delta", &IndicatorTrainConfig::min_delta);

  m.def(
      "train_indicator",
      [](const Eigen::Ref<const Eigen::MatrixXd>& train_x,
         const py::sequence& train_y,
         const Eigen::Ref<const Eigen::MatrixXd>& dev_x,
         const py::sequence& dev_y, std::uint64_t seed,
         const IndicatorTrainConfig& config) {
        const IndicatorTrainResult result = train_indicator(
            rows_from_matrix(train_x), labels_from_list(train_y),
            rows_from_matrix(dev_x), labels_from_list(dev_y), seed, config);
        return py::make_tuple(result.indicator, result.best_dev_loss,
                              result.epochs_run);
      },
      py::arg("train_x"), py::arg("train_y"), py::arg("dev_x"),
      py::arg("dev_y"), py::arg("seed"),
      py::arg("config") = IndicatorTrainConfig{},
      "Returns (indicator, best_dev_loss, epochs_run).");

  m.def("predict_emotion", &predict_emotion, py::arg("x"),
        py::arg("indicator"));

  py::class_<CompensationConfig>(m, "CompensationConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &CompensationConfig::alpha)
      .def_readwrite("skip_neutral", &CompensationConfig::skip_neutral);

  m.def(
      "compensate_pipeline",
      [](const Embedding& x_orig, const Embedding& z_anon,
         const std::vector<EmotionBoundary>& boundaries,
         const EmotionIndicator& indicator,
         const CompensationConfig& config) {
        if (boundaries.size() != 4) {
          throw DataError("compensate_pipeline expects 4 boundaries");
        }
        std::array<EmotionBoundary, 4> arr{boundaries[0], boundaries[1],
                                           boundaries[2], boundaries[3]};
        return compensate_pipeline(x_orig, z_anon, arr, indicator, config);
      },
      py::arg("x_orig"), py::arg("z_anon"), py::arg("boundaries"),
      py::arg("indicator"), py::arg("config") = CompensationConfig{});

  m.def(
      "calibrate_alpha",
      [](const py::sequence& dev_labels,
         const Eigen::Ref<const Eigen::MatrixXd>& dev_anon,
         const std::vector<EmotionBoundary>& boundaries,
         const EmotionIndicator& reference, const std::vector<double>& grid) {
        if (boundaries.size() != 4) {
          throw DataError("calibrate_alpha expects 4 boundaries");
        }
        std::array<EmotionBoundary, 4> arr{boundaries[0], boundaries[1],
                                           boundaries[2], boundaries[3]};
        const CalibrationResult result =
            calibrate_alpha(labels_from_list(dev_labels),
                            rows_from_matrix(dev_anon), arr, reference, grid);
        py::dict table;
        table["grid"] = result.table.grid;
        py::dict recall;
        for (EmotionLabel e : kAllEmotions) {
          recall[py::str(std::string(label_name(e)))] =
              result.table.recall[label_index(e)];
        }
        table["recall"] = recall;
        table["uar"] = result.table.uar;
        return py::make_tuple(result.config, table);
      },
      py::arg("dev_labels"), py::arg("dev_anon"), py::arg("boundaries"),
      py::arg("reference"), py::arg("grid"),
      "Returns (CompensationConfig, sweep table dict).");

  // ---------------------------------------------------------------- eval
  py::class_<EerResult>(m, "EerResult")
      .def_readonly("eer", &EerResult::eer)
      .def_readonly("threshold", &EerResult::threshold)
      .def_readonly("p_fa_at_threshold", &EerResult::p_fa_at_threshold)
      .def_readonly("p_miss_at_threshold", &EerResult::p_miss_at_threshold)
      .def_readonly("n_genuine", &EerResult::n_genuine)
      .def_readonly("n_impostor", &EerResult::n_impostor)
      .def("__repr__", [](const EerResult& r) {
        return "EerResult(eer=" + std::to_string(r.eer) + ")";
      });

  m.def("cosine_score", &cosine_score, py::arg("e"), py::arg("t"));
  m.def("compute_eer", &compute_eer, py::arg("genuine"), py::arg("impostor"));

  m.def(
      "compute_uar",
      [](const py::sequence& truths, const py::sequence& predictions) {
        if (py::len(truths) != py::len(predictions)) {
          throw DataError("compute_uar: length mismatch");
        }
        const auto t = labels_from_list(truths);
        const auto p = labels_from_list(predictions);
        std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
        for (std::size_t i = 0; i < t.size(); ++i) {
          pairs.emplace_back(t[i], p[i]);
        }
        const UarResult r = compute_uar(confusion_from_predictions(pairs));
        py::dict recall;
        for (EmotionLabel e : kAllEmotions) {
          const int k = label_index(e);
          recall[py::str(std::string(label_name(e)))] =
              r.included[k] ? py::cast(r.per_class_recall[k]) : py::none();
        }
        return py::make_tuple(r.uar, recall);
      },
      py::arg("truths"), py::arg("predictions"),
      "Returns (uar, per-class recall dict).");

  // ----------------------------------------------------------------- synth
  py::class_<WorldSpec>(m, "WorldSpec")
      .def(py::init<>())
      .def_readwrite("dim", &WorldSpec::dim)
      .def_readwrite("n_speakers", &WorldSpec::n_speakers)
      .def_readwrite("utts_per_speaker_per_emotion",
                     &WorldSpec::utts_per_speaker_per_emotion)
      .def_readwrite("speaker_spread", &WorldSpec::speaker_spread)
      .def_readwrite("emotion_magnitude", &WorldSpec::emotion_magnitude)
      .def_readwrite("noise", &WorldSpec::noise)
      .def_readwrite("speaker_emotion_jitter",
                     &WorldSpec::speaker_emotion_jitter)
      .def_readwrite("seed", &WorldSpec::seed);

  m.def(
      "gen_world",
      [](const WorldSpec& spec) {
        const World world = gen_world(spec);
        py::dict out;
        out["embeddings"] = matrix_from_rows(world.archive.rows);
        py::list utt_ids, speaker_ids, emotions;
        for (const ManifestRow& row : world.manifest.rows) {
          utt_ids.append(row.utt_id);
          speaker_ids.append(row.speaker_id);
          emotions.append(row.emotion ? std::string(label_name(*row.emotion))
                                      : std::string("-"));
        }
        out["utt_ids"] = utt_ids;
        out["speaker_ids"] = speaker_ids;
        out["emotions"] = emotions;
        out["speaker_centers"] = world.truth.speaker_centers;
        out["emotion_offsets"] = matrix_from_rows(
            {world.truth.emotion_offsets[0], world.truth.emotion_offsets[1],
             world.truth.emotion_offsets[2], world.truth.emotion_offsets[3]});
        return out;
      },
      py::arg("spec") = WorldSpec{},
      "Generate the synthetic world; returns a dict of arrays and lists.");

  // -------------------------------------------------------------- file io
  m.def(
      "read_archive",
      [](const std::filesystem::path& path) {
        return matrix_from_rows(read_archive(path).rows);
      },
      py::arg("path"));
  m.def(
      "write_archive",
      [](const std::filesystem::path& path,
         const Eigen::Ref<const Eigen::MatrixXd>& rows) {
        EmbeddingArchive archive;
        archive.dim = rows.cols();
        archive.rows = rows_from_matrix(rows);
        write_archive(path, archive);
      },
      py::arg("path"), py::arg("rows"));

  m.def(
      "run_pipeline",
      [](const std::string& config_json, const std::filesystem::path& out) {
        const RunConfig config = parse_run_config(
            nlohmann::json::parse(config_json), "config");
        return run_pipeline(config, out).dump(2);
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Run the full pipeline from a JSON config string; returns the report "
      "as a JSON string.");

  m.attr("__version__") = "0.1.0";
}
