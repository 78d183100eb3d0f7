// emocomp command-line tool: synthetic worlds, speaker-embedding
// anonymization, emotion compensation, and EER/UAR evaluation.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emocomp/anonymizer.hpp"
#include "emocomp/archive.hpp"
#include "emocomp/config.hpp"
#include "emocomp/emotion.hpp"
#include "emocomp/error.hpp"
#include "emocomp/eval.hpp"
#include "emocomp/pipeline.hpp"
#include "emocomp/rng.hpp"
#include "emocomp/synth.hpp"

namespace fs = std::filesystem;
using namespace emocomp;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string in_path;
  std::string out_path;
  std::string manifest_path;
  std::string mode;
  std::string alpha_grid;
  std::optional<std::int64_t> max_trials;
};

void add_common_flags(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "JSON run configuration");
  cmd->add_option("--seed", args->seed, "master seed override");
  cmd->add_option("--in", args->in_path, "input embedding archive");
  cmd->add_option("--out", args->out_path, "output path");
  cmd->add_option("--manifest", args->manifest_path, "TSV manifest");
  cmd->add_option("--mode", args->mode, "anonymizer mode override");
  cmd->add_option("--alpha-grid", args->alpha_grid,
                  "comma-separated calibration grid override");
  cmd->add_option("--max-trials", args->max_trials,
                  "per-class trial cap override");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig config;
  if (!args.config_path.empty()) {
    config = load_run_config(args.config_path);
  } else {
    resolve_seeds(config);
  }
  if (args.seed) {
    config.seed = *args.seed;
    resolve_seeds(config);
  }
  if (!args.mode.empty()) {
    config.anonymizer.mode = anonymizer_mode_from_name(args.mode);
  }
  if (!args.alpha_grid.empty()) {
    std::vector<double> grid;
    std::size_t start = 0;
    const std::string& text = args.alpha_grid;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || text[i] == ',') {
        const std::string item = text.substr(start, i - start);
        try {
          grid.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw UsageError("--alpha-grid: bad number '" + item + "'");
        }
        start = i + 1;
      }
    }
    if (grid.empty()) {
      throw UsageError("--alpha-grid: empty grid");
    }
    config.calibration.grid = std::move(grid);
  }
  if (args.max_trials) {
    if (*args.max_trials < 1) {
      throw UsageError("--max-trials must be >= 1");
    }
    config.eval.max_trials = static_cast<std::size_t>(*args.max_trials);
  }
  return config;
}

void require_arg(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw UsageError(std::string("missing required ") + flag);
  }
}

struct LoadedData {
  EmbeddingArchive archive;
  Manifest manifest;
};

LoadedData load_data(const CommonArgs& args) {
  require_arg(args.in_path, "--in");
  require_arg(args.manifest_path, "--manifest");
  LoadedData data;
  data.archive = read_archive(args.in_path);
  data.manifest = read_manifest(args.manifest_path);
  data.manifest.validate(data.archive.count());
  return data;
}

std::vector<int> dense_speakers(const Manifest& manifest, int* n_speakers) {
  std::map<std::string, int> ids;
  for (const ManifestRow& row : manifest.rows) {
    ids.emplace(row.speaker_id, 0);
  }
  int next = 0;
  for (auto& [name, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(manifest.size());
  for (const ManifestRow& row : manifest.rows) {
    out.push_back(ids.at(row.speaker_id));
  }
  *n_speakers = next;
  return out;
}

// ------------------------------------------------------------- subcommands

int cmd_synth(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const World world = gen_world(config.world);
  fs::create_directories(args.out_path);
  const fs::path out(args.out_path);
  write_archive(out / "originals.semb", world.archive);
  write_manifest(out / "manifest.tsv", world.manifest);
  write_truth(out / "truth.tru", world.truth);
  std::printf("wrote %zu embeddings (dim %ld) to %s\n", world.archive.count(),
              static_cast<long>(world.archive.dim), args.out_path.c_str());
  return 0;
}

int cmd_train_anon(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const LoadedData data = load_data(args);
  int n_speakers = 0;
  const std::vector<int> speakers = dense_speakers(data.manifest, &n_speakers);
  std::vector<Embedding> xs;
  xs.reserve(data.manifest.size());
  for (const ManifestRow& row : data.manifest.rows) {
    xs.push_back(data.archive.rows[row.row_index]);
  }
  const OhnnTrainResult result = train_ohnn(
      xs, speakers, {}, {}, config.anonymizer.reflectors_per_chain,
      config.anonymizer.seed, config.anonymizer.training);
  write_chain(args.out_path, result.chain);
  std::printf("trained %zu-reflector chain on %d speakers, final loss %.6f\n",
              result.chain.size(), n_speakers, result.final_train_loss);
  return 0;
}

int cmd_anonymize(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const LoadedData data = load_data(args);

  OrthogonalChain chain;
  const OrthogonalChain* chain_ptr = nullptr;
  std::vector<Embedding> pool;
  const std::vector<Embedding>* pool_ptr = nullptr;
  if (config.anonymizer.mode == AnonymizerMode::kTrainedChain) {
    if (config.paths.chain.empty()) {
      throw DataError("trained-chain mode requires paths.chain in the config");
    }
    chain = read_chain(config.paths.chain);
    chain_ptr = &chain;
  } else if (config.anonymizer.mode == AnonymizerMode::kSelectionAverage) {
    if (config.paths.pool.empty()) {
      throw DataError(
          "selection-average mode requires paths.pool in the config");
    }
    EmbeddingArchive pool_archive = read_archive(config.paths.pool);
    require_same_dim(pool_archive.dim, data.archive.dim, "selection pool");
    pool = std::move(pool_archive.rows);
    pool_ptr = &pool;
  }
  const EmbeddingArchive anonymized = anonymize_archive(
      data.archive, data.manifest, config.anonymizer, chain_ptr, pool_ptr);
  write_archive(args.out_path, anonymized);
  std::printf("anonymized %zu embeddings (%s) -> %s\n", anonymized.count(),
              std::string(anonymizer_mode_name(config.anonymizer.mode)).c_str(),
              args.out_path.c_str());
  return 0;
}

int cmd_train_svm(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const LoadedData data = load_data(args);
  const Splits splits =
      make_splits(data.manifest, config.split, config.split_seed);
  const LabeledEmbeddings train =
      gather_labeled(data.archive, data.manifest, splits.train);
  const LabeledEmbeddings dev =
      gather_labeled(data.archive, data.manifest, splits.dev);
  std::array<EmotionBoundary, 4> boundaries;
  for (EmotionLabel e : kAllEmotions) {
    boundaries[label_index(e)] = train_emotion_svm(train.x, train.y, dev.x,
                                                   dev.y, e, config.svm);
    std::printf("%s dev accuracy %.4f\n",
                std::string(label_name(e)).c_str(),
                boundaries[label_index(e)].dev_accuracy);
  }
  write_boundaries(args.out_path, boundaries);
  return 0;
}

int cmd_train_indicator(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const LoadedData data = load_data(args);
  const Splits splits =
      make_splits(data.manifest, config.split, config.split_seed);
  const LabeledEmbeddings train =
      gather_labeled(data.archive, data.manifest, splits.train);
  const LabeledEmbeddings dev =
      gather_labeled(data.archive, data.manifest, splits.dev);
  const IndicatorTrainResult result =
      train_indicator(train.x, train.y, dev.x, dev.y, config.indicator_seed,
                      config.indicator);
  write_indicator(args.out_path, result.indicator);
  std::printf("indicator trained for %d epochs, best dev loss %.6f\n",
              result.epochs_run, result.best_dev_loss);
  return 0;
}

int cmd_calibrate_alpha(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  if (config.paths.boundaries.empty() || config.paths.indicator.empty()) {
    throw DataError(
        "calibrate-alpha requires paths.boundaries and paths.indicator in "
        "the config; --in is the anonymized dev archive");
  }
  const LoadedData data = load_data(args);  // anonymized dev embeddings
  const auto boundaries = read_boundaries(config.paths.boundaries);
  const EmotionIndicator indicator = read_indicator(config.paths.indicator);

  std::vector<EmotionLabel> labels;
  std::vector<Embedding> anon;
  for (const ManifestRow& row : data.manifest.rows) {
    if (!row.emotion) continue;
    labels.push_back(*row.emotion);
    anon.push_back(data.archive.rows[row.row_index]);
  }
  const CalibrationResult result = calibrate_alpha(
      labels, anon, boundaries, indicator, config.calibration.grid);

  ordered_json chosen = ordered_json::object();
  for (EmotionLabel e : kAllEmotions) {
    chosen[std::string(label_name(e))] =
        result.config.alpha[label_index(e)];
  }
  ordered_json recall = ordered_json::object();
  for (EmotionLabel e : kAllEmotions) {
    recall[std::string(label_name(e))] = result.table.recall[label_index(e)];
  }
  ordered_json doc{{"grid", result.table.grid},
                   {"recall", recall},
                   {"uar", result.table.uar},
                   {"chosen_alpha", chosen},
                   {"config", echo_config(config)}};
  atomic_write_bytes(args.out_path, doc.dump(2) + "\n");
  std::printf("chosen alpha: happy %.1f, neutral %.1f, sad %.1f, angry %.1f\n",
              result.config.alpha[0], result.config.alpha[1],
              result.config.alpha[2], result.config.alpha[3]);
  return 0;
}

int cmd_compensate(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  if (config.paths.originals.empty() || config.paths.boundaries.empty() ||
      config.paths.indicator.empty()) {
    throw DataError(
        "compensate requires paths.originals, paths.boundaries and "
        "paths.indicator in the config; --in is the anonymized archive");
  }
  const LoadedData data = load_data(args);  // anonymized embeddings
  const EmbeddingArchive originals = read_archive(config.paths.originals);
  data.manifest.validate(originals.count());
  require_same_dim(originals.dim, data.archive.dim, "compensate");
  const auto boundaries = read_boundaries(config.paths.boundaries);
  const EmotionIndicator indicator = read_indicator(config.paths.indicator);

  EmbeddingArchive out;
  out.dim = data.archive.dim;
  out.rows.resize(data.archive.rows.size());
  std::array<std::size_t, 4> chosen_counts{};
  for (const ManifestRow& row : data.manifest.rows) {
    const auto [edited, chosen] = compensate_pipeline(
        originals.rows[row.row_index], data.archive.rows[row.row_index],
        boundaries, indicator, config.compensation);
    out.rows[row.row_index] = edited;
    ++chosen_counts[label_index(chosen)];
  }
  write_archive(args.out_path, out);
  std::printf(
      "compensated %zu embeddings (picked happy %zu, neutral %zu, sad %zu, "
      "angry %zu)\n",
      out.count(), chosen_counts[0], chosen_counts[1], chosen_counts[2],
      chosen_counts[3]);
  return 0;
}

int cmd_eval_eer(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  const LoadedData data = load_data(args);  // test-side archive

  EmbeddingArchive enroll;
  const EmbeddingArchive* enroll_ptr = &data.archive;
  if (!config.paths.enroll.empty()) {
    enroll = read_archive(config.paths.enroll);
    data.manifest.validate(enroll.count());
    enroll_ptr = &enroll;
  }
  const TrialSet trials =
      build_trials(*enroll_ptr, data.archive, data.manifest,
                   TrialProtocol::kFull, config.eval.max_trials,
                   config.trial_seed);
  const EerResult eer =
      compute_eer(trials.genuine_scores(), trials.impostor_scores());

  const ordered_json report = metrics_report(
      config, &eer, nullptr, trial_protocol_name(TrialProtocol::kFull),
      config.trial_seed);
  atomic_write_bytes(args.out_path, report_to_string(report));

  // per-trial scores for external DET plotting
  fs::path scores_path(args.out_path);
  scores_path.replace_extension(".scores.csv");
  std::string csv = "score,label\n";
  for (const Trial& t : trials.trials) {
    char line[64];
    std::snprintf(line, sizeof(line), "%.17g,%s\n", t.score,
                  t.same_speaker ? "genuine" : "impostor");
    csv += line;
  }
  atomic_write_bytes(scores_path, csv);

  std::printf("eer %.4f at threshold %.4f (%zu genuine, %zu impostor)\n",
              eer.eer, eer.threshold, eer.n_genuine, eer.n_impostor);
  return 0;
}

int cmd_eval_uar(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  RunConfig config = resolve_config(args);
  if (config.paths.indicator.empty()) {
    throw DataError("eval-uar requires paths.indicator in the config");
  }
  const LoadedData data = load_data(args);
  const EmotionIndicator indicator = read_indicator(config.paths.indicator);

  std::vector<std::pair<EmotionLabel, EmotionLabel>> pairs;
  for (const ManifestRow& row : data.manifest.rows) {
    if (!row.emotion) continue;
    pairs.emplace_back(
        *row.emotion,
        predict_emotion(data.archive.rows[row.row_index], indicator).first);
  }
  if (pairs.empty()) {
    throw DataError("eval-uar: manifest has no labeled utterances");
  }
  const UarResult uar = compute_uar(confusion_from_predictions(pairs));
  const ordered_json report =
      metrics_report(config, nullptr, &uar, "labeled-utterances",
                     config.trial_seed);
  atomic_write_bytes(args.out_path, report_to_string(report));
  std::printf("uar %.4f over %zu labeled utterances\n", uar.uar,
              pairs.size());
  return 0;
}

int cmd_pipeline(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  const RunConfig config = resolve_config(args);
  const ordered_json report = run_pipeline(config, args.out_path);
  std::printf("pipeline complete; report at %s\n",
              (fs::path(args.out_path) / "report.json").string().c_str());
  std::printf("eer: orig %.4f anon %.4f comp %.4f | uar: orig %.4f anon "
              "%.4f comp %.4f\n",
              report["eer"]["original"]["eer"].get<double>(),
              report["eer"]["anonymized"]["eer"].get<double>(),
              report["eer"]["compensated"]["eer"].get<double>(),
              report["uar"]["original"]["uar"].get<double>(),
              report["uar"]["anonymized"]["uar"].get<double>(),
              report["uar"]["compensated"]["uar"].get<double>());
  return 0;
}

int cmd_export_proj(const CommonArgs& args) {
  require_arg(args.out_path, "--out");
  const LoadedData data = load_data(args);
  export_projection(data.archive, data.manifest, args.out_path);
  std::printf("projected %zu embeddings to %s\n", data.archive.count(),
              args.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Speaker-embedding anonymization with emotion compensation"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
    CommonArgs args;
  };
  std::vector<Sub> subs = {
      {"synth", "generate a synthetic embedding world", cmd_synth, {}},
      {"train-anon", "train a rotation-chain anonymizer", cmd_train_anon, {}},
      {"anonymize", "anonymize an embedding archive", cmd_anonymize, {}},
      {"train-svm", "train the four emotion boundaries", cmd_train_svm, {}},
      {"train-indicator", "train the emotion indicator", cmd_train_indicator,
       {}},
      {"calibrate-alpha", "sweep compensation strengths on a dev set",
       cmd_calibrate_alpha, {}},
      {"compensate", "apply emotion compensation to anonymized embeddings",
       cmd_compensate, {}},
      {"eval-eer", "score verification trials and compute the EER",
       cmd_eval_eer, {}},
      {"eval-uar", "compute UAR of the indicator on labeled data",
       cmd_eval_uar, {}},
      {"pipeline", "run the full anonymize/compensate/evaluate flow",
       cmd_pipeline, {}},
      {"export-proj", "export a 2-D PCA projection CSV", cmd_export_proj, {}},
  };
  for (Sub& sub : subs) {
    CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
    add_common_flags(cmd, &sub.args);
  }

  try {
    app.parse(argc, argv);
    for (Sub& sub : subs) {
      if (app.get_subcommand(sub.name)->parsed()) {
        return sub.run(sub.args);
      }
    }
    throw UsageError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
