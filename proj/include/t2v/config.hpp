#pragma once

// Run configuration: one JSON document with dotted-key overrides.
// Precedence is flags > file > built-in defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2v/crn.hpp"
#include "t2v/cxloss.hpp"
#include "t2v/dataset.hpp"

namespace t2v {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 1;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  // Swap roles: learn thermal-like images from visible captures.
  bool reverse = false;
  LossConfig loss;
  CrnConfig crn;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

struct PerceptualConfig {
  std::string weights_path;
  std::string sha256;  // empty: digest recorded but not enforced
};

struct DatasetConfig {
  std::string root;
  bool exclude_dark = true;
  double dark_threshold = kDefaultDarkThreshold;
};

struct FoldConfig {
  int k = 10;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetConfig dataset;
  FoldConfig folds;
  TrainConfig train;
  PerceptualConfig perceptual;
  std::string output_dir = "out";
};

nlohmann::json to_json(const CrnConfig& cfg);
nlohmann::json to_json(const LossConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

CrnConfig crn_config_from_json(const nlohmann::json& doc);
LossConfig loss_config_from_json(const nlohmann::json& doc);
TrainConfig train_config_from_json(const nlohmann::json& doc);
RunConfig run_config_from_json(const nlohmann::json& doc);

// SHA-256 of the canonical JSON dump.
std::string config_digest(const CrnConfig& cfg);
std::string config_digest(const TrainConfig& cfg);

// Sets `a.b.c` in a JSON document. The value text is parsed as JSON when it
// parses, otherwise stored as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Defaults, merged with the file (if any), then the overrides in order.
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides);

}  // namespace t2v
