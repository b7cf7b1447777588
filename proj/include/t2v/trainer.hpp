#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2v/config.hpp"
#include "t2v/crn.hpp"
#include "t2v/dataset.hpp"
#include "t2v/params.hpp"
#include "t2v/perceptual.hpp"

namespace t2v {

struct Checkpoint {
  TrainConfig config;
  std::string config_digest;  // of `config`
  int epoch = 0;
  std::vector<double> loss_history;  // per-epoch mean, one entry per completed epoch
  std::vector<Parameter<float>> params;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::vector<float>> adam_first;
  std::vector<std::vector<float>> adam_second;
  std::string perceptual_digest;
};

struct TrainObserver {
  std::function<void(std::size_t step, double loss)> on_step;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Optimises a freshly built generator on `pairs` for cfg.epochs epochs.
// Throws TrainingDivergedError on a non-finite loss.
Checkpoint train_fold(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                      const PerceptualNet<float>& net, const TrainObserver& observer = {});

std::string parameter_digest(const std::vector<Parameter<float>>& params);

// Rebuilds the generator stored in a checkpoint. Throws IncompatibleError if
// the checkpoint was produced for a different generator configuration.
CrnModel<float> restore_generator(const Checkpoint& ckpt, const CrnConfig& expected);

Image generate(const Checkpoint& ckpt, const Image& source, const CrnConfig& expected);

// Single-file container holding meta.json, params.bin and adam.bin.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunManifest {
  int fold_index = 0;
  std::vector<int> train_identities;
  std::vector<int> test_identities;
  std::string checkpoint_path;
  std::map<std::pair<int, int>, std::string> generated;  // (identity, variation) -> png
  double wall_time_seconds = 0.0;
  std::vector<double> loss_history;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& doc);

std::filesystem::path fold_directory(const std::filesystem::path& out_dir, int fold);
std::filesystem::path generated_image_path(const std::filesystem::path& out_dir, int fold, int identity,
                                           int variation);

struct CrossValidationOptions {
  bool exclude_dark = true;
  double dark_threshold = kDefaultDarkThreshold;
  std::vector<int> only_folds;  // empty: every fold
};

struct FoldEvent {
  int fold;
  bool resumed;
};

struct CrossValidationObserver {
  TrainObserver train;
  std::function<void(const FoldEvent&)> on_fold_start;
};

// Trains one model per fold and generates every test pair of that fold.
// Folds that already carry a completion marker are loaded, not retrained.
std::vector<RunManifest> run_cross_validation(const std::vector<CaptureRecord>& records,
                                              const FoldPlan& plan, const TrainConfig& cfg,
                                              const PerceptualNet<float>& net,
                                              const std::filesystem::path& out_dir,
                                              const CrossValidationOptions& options = {},
                                              const CrossValidationObserver& observer = {});

// Throws if any generated identity was part of its fold's training set.
void assert_no_leakage(const RunManifest& manifest);

}  // namespace t2v
