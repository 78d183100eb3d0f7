#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emocomp/anonymizer.hpp"
#include "emocomp/emotion.hpp"
#include "emocomp/synth.hpp"

namespace emocomp {

struct SplitConfig {
  double train_frac = 0.7;
  double dev_frac = 0.15;
};

struct EvalOptions {
  std::size_t max_trials = 20000;
};

struct CalibrationOptions {
  bool enabled = true;
  std::vector<double> grid = {-50.0, -35.0, -20.0, 0.0, 20.0, 35.0, 50.0};
};

/// Optional external inputs; when set they replace generated artifacts.
struct PathsConfig {
  std::string originals;
  std::string manifest;
  std::string anonymized;
  std::string chain;
  std::string pool;  ///< embedding archive used by selection-average mode
  std::string boundaries;
  std::string indicator;
  std::string enroll;
  std::string test;
};

/// The full run configuration. Every stage seed is explicit after
/// resolve_seeds(); unset seeds are derived from the master seed, so one
/// master seed pins the entire run.
struct RunConfig {
  std::uint64_t seed = 1;
  WorldSpec world;
  AnonymizerConfig anonymizer;
  SvmTrainConfig svm;
  IndicatorTrainConfig indicator;
  std::uint64_t indicator_seed = 0;
  CompensationConfig compensation;
  CalibrationOptions calibration;
  SplitConfig split;
  std::uint64_t split_seed = 0;
  EvalOptions eval;
  std::uint64_t trial_seed = 0;
  PathsConfig paths;

  // which seeds were given explicitly in the config document
  bool world_seed_explicit = false;
  bool anonymizer_seed_explicit = false;
  bool indicator_seed_explicit = false;
  bool split_seed_explicit = false;
  bool trial_seed_explicit = false;
};

/// Fills every non-explicit stage seed from the master seed.
void resolve_seeds(RunConfig& config);

/// Parses a config document, rejecting unknown keys at every level.
/// `source` names the file in error messages.
RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::string& source);

RunConfig load_run_config(const std::filesystem::path& path);

/// Serializes the fully resolved configuration with a fixed key order;
/// embedded in every report.
nlohmann::ordered_json echo_config(const RunConfig& config);

}  // namespace emocomp
