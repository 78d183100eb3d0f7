#include "emocomp/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "emocomp/archive.hpp"
#include "emocomp/error.hpp"
#include "emocomp/rng.hpp"

namespace emocomp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Wraps one JSON object and tracks which keys were consumed, so leftovers
/// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string where)
      : node_(node), where_(std::move(where)) {
    if (!node.is_object()) {
      throw DataError(where_ + ": expected a JSON object");
    }
  }

  const json* get(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  double number(const char* key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) {
      throw DataError(where_ + "." + key + ": expected a number");
    }
    return v->get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      throw DataError(where_ + "." + key + ": expected an integer");
    }
    return v->get<std::int64_t>();
  }

  std::uint64_t u64(const char* key, std::uint64_t fallback,
                    bool* explicit_flag = nullptr) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !v->is_number_integer()) {
      throw DataError(where_ + "." + key + ": expected an unsigned integer");
    }
    if (explicit_flag) *explicit_flag = true;
    return v->get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      throw DataError(where_ + "." + key + ": expected a boolean");
    }
    return v->get<bool>();
  }

  std::string text(const char* key, std::string fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) {
      throw DataError(where_ + "." + key + ": expected a string");
    }
    return v->get<std::string>();
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) {
        throw DataError(where_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const json& node_;
  std::string where_;
  std::set<std::string, std::less<>> seen_;
};

WorldSpec parse_world(const json& node, const std::string& where,
                      bool* seed_explicit) {
  ObjectReader r(node, where);
  WorldSpec spec;
  spec.dim = static_cast<Eigen::Index>(r.integer("dim", spec.dim));
  spec.n_speakers = static_cast<int>(r.integer("n_speakers", spec.n_speakers));
  spec.utts_per_speaker_per_emotion = static_cast<int>(
      r.integer("utts_per_speaker_per_emotion",
                spec.utts_per_speaker_per_emotion));
  spec.speaker_spread = r.number("speaker_spread", spec.speaker_spread);
  spec.emotion_magnitude =
      r.number("emotion_magnitude", spec.emotion_magnitude);
  spec.noise = r.number("noise", spec.noise);
  spec.speaker_emotion_jitter =
      r.number("speaker_emotion_jitter", spec.speaker_emotion_jitter);
  spec.seed = r.u64("seed", spec.seed, seed_explicit);
  r.finish();
  return spec;
}

TrainConfig parse_training(const json& node, const std::string& where) {
  ObjectReader r(node, where);
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(r.integer("epochs", cfg.epochs));
  cfg.step_size = r.number("step_size", cfg.step_size);
  cfg.cos_margin = r.number("cos_margin", cfg.cos_margin);
  cfg.lambda_cls = r.number("lambda_cls", cfg.lambda_cls);
  cfg.lambda_push = r.number("lambda_push", cfg.lambda_push);
  cfg.aam_margin = r.number("aam_margin", cfg.aam_margin);
  cfg.aam_scale = r.number("aam_scale", cfg.aam_scale);
  r.finish();
  return cfg;
}

AnonymizerConfig parse_anonymizer(const json& node, const std::string& where,
                                  bool* seed_explicit) {
  ObjectReader r(node, where);
  AnonymizerConfig cfg;
  cfg.mode = anonymizer_mode_from_name(
      r.text("mode", std::string(anonymizer_mode_name(cfg.mode))));
  cfg.reflectors_per_chain = static_cast<int>(
      r.integer("reflectors_per_chain", cfg.reflectors_per_chain));
  cfg.pool_size = static_cast<int>(r.integer("pool_size", cfg.pool_size));
  cfg.select_n = static_cast<int>(r.integer("select_n", cfg.select_n));
  cfg.seed = r.u64("seed", cfg.seed, seed_explicit);
  if (const json* training = r.get("training")) {
    cfg.training = parse_training(*training, where + ".training");
  }
  r.finish();
  if (cfg.reflectors_per_chain < 1 || cfg.pool_size < 1 || cfg.select_n < 1) {
    throw DataError(where + ": reflectors_per_chain, pool_size and select_n "
                            "must all be >= 1");
  }
  return cfg;
}

SvmTrainConfig parse_svm(const json& node, const std::string& where) {
  ObjectReader r(node, where);
  SvmTrainConfig cfg;
  cfg.reg_c = r.number("reg_c", cfg.reg_c);
  cfg.epochs = static_cast<int>(r.integer("epochs", cfg.epochs));
  cfg.eta0 = r.number("eta0", cfg.eta0);
  r.finish();
  return cfg;
}

IndicatorTrainConfig parse_indicator(const json& node,
                                     const std::string& where,
                                     std::uint64_t* seed,
                                     bool* seed_explicit) {
  ObjectReader r(node, where);
  IndicatorTrainConfig cfg;
  cfg.hidden = static_cast<int>(r.integer("hidden", cfg.hidden));
  cfg.max_epochs = static_cast<int>(r.integer("max_epochs", cfg.max_epochs));
  cfg.learning_rate = r.number("learning_rate", cfg.learning_rate);
  cfg.patience = static_cast<int>(r.integer("patience", cfg.patience));
  cfg.min_delta = r.number("min_delta", cfg.min_delta);
  *seed = r.u64("seed", *seed, seed_explicit);
  r.finish();
  return cfg;
}

CompensationConfig parse_compensation(const json& node,
                                      const std::string& where) {
  ObjectReader r(node, where);
  CompensationConfig cfg;
  if (const json* alpha = r.get("alpha")) {
    ObjectReader a(*alpha, where + ".alpha");
    for (EmotionLabel e : kAllEmotions) {
      const std::string name(label_name(e));
      cfg.alpha[label_index(e)] =
          a.number(name.c_str(), cfg.alpha[label_index(e)]);
    }
    a.finish();
  }
  cfg.skip_neutral = r.boolean("skip_neutral", cfg.skip_neutral);
  r.finish();
  if (cfg.skip_neutral &&
      cfg.alpha[label_index(EmotionLabel::kNeutral)] != 0.0) {
    throw DataError(where + ": alpha.neutral must be 0 when skip_neutral is set");
  }
  return cfg;
}

CalibrationOptions parse_calibration(const json& node,
                                     const std::string& where) {
  ObjectReader r(node, where);
  CalibrationOptions cfg;
  cfg.enabled = r.boolean("enabled", cfg.enabled);
  if (const json* grid = r.get("grid")) {
    if (!grid->is_array() || grid->empty()) {
      throw DataError(where + ".grid: expected a non-empty array of numbers");
    }
    cfg.grid.clear();
    for (const json& v : *grid) {
      if (!v.is_number()) {
        throw DataError(where + ".grid: expected a number");
      }
      cfg.grid.push_back(v.get<double>());
    }
  }
  r.finish();
  return cfg;
}

SplitConfig parse_split(const json& node, const std::string& where,
                        std::uint64_t* seed, bool* seed_explicit) {
  ObjectReader r(node, where);
  SplitConfig cfg;
  cfg.train_frac = r.number("train_frac", cfg.train_frac);
  cfg.dev_frac = r.number("dev_frac", cfg.dev_frac);
  *seed = r.u64("seed", *seed, seed_explicit);
  r.finish();
  if (cfg.train_frac <= 0.0 || cfg.dev_frac < 0.0 ||
      cfg.train_frac + cfg.dev_frac >= 1.0) {
    throw DataError(where + ": need 0 < train_frac, 0 <= dev_frac, "
                            "train_frac + dev_frac < 1");
  }
  return cfg;
}

EvalOptions parse_eval(const json& node, const std::string& where,
                       std::uint64_t* seed, bool* seed_explicit) {
  ObjectReader r(node, where);
  EvalOptions cfg;
  const std::int64_t mt =
      r.integer("max_trials", static_cast<std::int64_t>(cfg.max_trials));
  if (mt < 1) {
    throw DataError(where + ".max_trials: must be >= 1");
  }
  cfg.max_trials = static_cast<std::size_t>(mt);
  *seed = r.u64("seed", *seed, seed_explicit);
  r.finish();
  return cfg;
}

PathsConfig parse_paths(const json& node, const std::string& where) {
  ObjectReader r(node, where);
  PathsConfig cfg;
  cfg.originals = r.text("originals", cfg.originals);
  cfg.manifest = r.text("manifest", cfg.manifest);
  cfg.anonymized = r.text("anonymized", cfg.anonymized);
  cfg.chain = r.text("chain", cfg.chain);
  cfg.pool = r.text("pool", cfg.pool);
  cfg.boundaries = r.text("boundaries", cfg.boundaries);
  cfg.indicator = r.text("indicator", cfg.indicator);
  cfg.enroll = r.text("enroll", cfg.enroll);
  cfg.test = r.text("test", cfg.test);
  r.finish();
  return cfg;
}

}  // namespace

void resolve_seeds(RunConfig& config) {
  if (!config.world_seed_explicit) {
    config.world.seed = mix_seed(config.seed, fnv1a64("world"));
  }
  if (!config.anonymizer_seed_explicit) {
    config.anonymizer.seed = mix_seed(config.seed, fnv1a64("anonymizer"));
  }
  if (!config.indicator_seed_explicit) {
    config.indicator_seed = mix_seed(config.seed, fnv1a64("indicator"));
  }
  if (!config.split_seed_explicit) {
    config.split_seed = mix_seed(config.seed, fnv1a64("split"));
  }
  if (!config.trial_seed_explicit) {
    config.trial_seed = mix_seed(config.seed, fnv1a64("trials"));
  }
}

RunConfig parse_run_config(const json& doc, const std::string& source) {
  ObjectReader r(doc, source);
  RunConfig config;
  config.seed = r.u64("seed", config.seed);
  if (const json* node = r.get("world")) {
    config.world =
        parse_world(*node, source + ".world", &config.world_seed_explicit);
  }
  if (const json* node = r.get("anonymizer")) {
    config.anonymizer = parse_anonymizer(*node, source + ".anonymizer",
                                         &config.anonymizer_seed_explicit);
  }
  if (const json* node = r.get("svm")) {
    config.svm = parse_svm(*node, source + ".svm");
  }
  if (const json* node = r.get("indicator")) {
    config.indicator =
        parse_indicator(*node, source + ".indicator", &config.indicator_seed,
                        &config.indicator_seed_explicit);
  }
  if (const json* node = r.get("compensation")) {
    config.compensation = parse_compensation(*node, source + ".compensation");
  }
  if (const json* node = r.get("calibration")) {
    config.calibration = parse_calibration(*node, source + ".calibration");
  }
  if (const json* node = r.get("split")) {
    config.split = parse_split(*node, source + ".split", &config.split_seed,
                               &config.split_seed_explicit);
  }
  if (const json* node = r.get("eval")) {
    config.eval = parse_eval(*node, source + ".eval", &config.trial_seed,
                             &config.trial_seed_explicit);
  }
  if (const json* node = r.get("paths")) {
    config.paths = parse_paths(*node, source + ".paths");
  }
  r.finish();
  resolve_seeds(config);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_bytes(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.filename().string());
}

ordered_json echo_config(const RunConfig& c) {
  ordered_json doc;
  doc["seed"] = c.seed;
  doc["world"] = {
      {"dim", c.world.dim},
      {"n_speakers", c.world.n_speakers},
      {"utts_per_speaker_per_emotion", c.world.utts_per_speaker_per_emotion},
      {"speaker_spread", c.world.speaker_spread},
      {"emotion_magnitude", c.world.emotion_magnitude},
      {"noise", c.world.noise},
      {"speaker_emotion_jitter", c.world.speaker_emotion_jitter},
      {"seed", c.world.seed},
  };
  doc["anonymizer"] = {
      {"mode", std::string(anonymizer_mode_name(c.anonymizer.mode))},
      {"reflectors_per_chain", c.anonymizer.reflectors_per_chain},
      {"pool_size", c.anonymizer.pool_size},
      {"select_n", c.anonymizer.select_n},
      {"seed", c.anonymizer.seed},
      {"training",
       {
           {"epochs", c.anonymizer.training.epochs},
           {"step_size", c.anonymizer.training.step_size},
           {"cos_margin", c.anonymizer.training.cos_margin},
           {"lambda_cls", c.anonymizer.training.lambda_cls},
           {"lambda_push", c.anonymizer.training.lambda_push},
           {"aam_margin", c.anonymizer.training.aam_margin},
           {"aam_scale", c.anonymizer.training.aam_scale},
       }},
  };
  doc["svm"] = {
      {"reg_c", c.svm.reg_c},
      {"epochs", c.svm.epochs},
      {"eta0", c.svm.eta0},
  };
  doc["indicator"] = {
      {"hidden", c.indicator.hidden},
      {"max_epochs", c.indicator.max_epochs},
      {"learning_rate", c.indicator.learning_rate},
      {"patience", c.indicator.patience},
      {"min_delta", c.indicator.min_delta},
      {"seed", c.indicator_seed},
  };
  ordered_json alpha;
  for (EmotionLabel e : kAllEmotions) {
    alpha[std::string(label_name(e))] = c.compensation.alpha[label_index(e)];
  }
  doc["compensation"] = {
      {"alpha", alpha},
      {"skip_neutral", c.compensation.skip_neutral},
  };
  doc["calibration"] = {
      {"enabled", c.calibration.enabled},
      {"grid", c.calibration.grid},
  };
  doc["split"] = {
      {"train_frac", c.split.train_frac},
      {"dev_frac", c.split.dev_frac},
      {"seed", c.split_seed},
  };
  doc["eval"] = {
      {"max_trials", c.eval.max_trials},
      {"seed", c.trial_seed},
  };
  ordered_json paths = ordered_json::object();
  const auto put_path = [&paths](const char* key, const std::string& value) {
    if (!value.empty()) paths[key] = value;
  };
  put_path("originals", c.paths.originals);
  put_path("manifest", c.paths.manifest);
  put_path("anonymized", c.paths.anonymized);
  put_path("chain", c.paths.chain);
  put_path("pool", c.paths.pool);
  put_path("boundaries", c.paths.boundaries);
  put_path("indicator", c.paths.indicator);
  put_path("enroll", c.paths.enroll);
  put_path("test", c.paths.test);
  doc["paths"] = paths;
  return doc;
}

}  // namespace emocomp
