#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "t2v/errors.hpp"
#include "t2v/fs.hpp"
#include "t2v/trainer.hpp"

namespace t2v {
namespace {

using testing::TempDir;

TrainConfig toy_config(int resolution = 32, int epochs = 1) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.crn.base_resolution = 4;
  cfg.crn.target_resolution = resolution;
  cfg.crn.channel_schedule.clear();
  for (int r = 4; r <= resolution; r *= 2) cfg.crn.channel_schedule.push_back(8);
  cfg.crn.seed = 5;
  return cfg;
}

const PerceptualNet<float>& shared_net() {
  static const PerceptualNet<float> net(random_vgg19_parameters(1), "");
  return net;
}

ImagePair probe_pair(int size) {
  return {testing::probe_image('s', size), testing::probe_image('t', size), 1, 1};
}

std::vector<CaptureRecord> toy_records(const TempDir& dir, int identities, int variations) {
  testing::CorpusSpec spec;
  spec.identities = identities;
  spec.variations = variations;
  spec.visible_size = 16;
  spec.thermal_width = 16;
  spec.thermal_height = 12;
  testing::write_corpus(dir / "corpus", spec);
  return load_dataset(dir / "corpus");
}

TEST(TrainFold, ZeroEpochsIsFreshInitialisation) {
  const TrainConfig cfg = toy_config(16, 0);
  const Checkpoint ckpt = train_fold({}, cfg, shared_net());
  EXPECT_EQ(ckpt.epoch, 0);
  EXPECT_TRUE(ckpt.loss_history.empty());
  EXPECT_EQ(ckpt.optimizer_steps, 0u);
  const auto fresh = build_crn<float>(cfg.crn);
  EXPECT_EQ(parameter_digest(ckpt.params), parameter_digest(fresh.params()));
  const Image probe = testing::probe_image('n', 16);
  EXPECT_EQ(generate(ckpt, probe, cfg.crn), fresh.forward(probe));
}

TEST(TrainFold, EmptyPairsWithEpochsIsContractError) {
  EXPECT_THROW(train_fold({}, toy_config(16, 1), shared_net()), ContractError);
}

TEST(TrainFold, SinglePairLossDecreases) {
  const TrainConfig cfg = toy_config(32, 60);
  std::vector<double> losses;
  TrainObserver obs;
  obs.on_step = [&](std::size_t, double loss) { losses.push_back(loss); };
  const Checkpoint ckpt = train_fold({probe_pair(32)}, cfg, shared_net(), obs);
  ASSERT_EQ(losses.size(), 60u);
  EXPECT_EQ(ckpt.loss_history.size(), 60u);
  EXPECT_EQ(ckpt.optimizer_steps, 60u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += losses[static_cast<std::size_t>(i)];
    tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, head);
}

TEST(TrainFold, DeterministicPerSeed) {
  const TrainConfig cfg = toy_config(16, 2);
  const std::vector<ImagePair> pairs{probe_pair(16), {testing::probe_image('g', 16), testing::probe_image('n', 16), 2, 1}};
  const auto a = train_fold(pairs, cfg, shared_net());
  const auto b = train_fold(pairs, cfg, shared_net());
  EXPECT_EQ(parameter_digest(a.params), parameter_digest(b.params));
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(TrainFold, PerceptualNetStaysFrozen) {
  const std::string before = shared_net().weight_digest();
  train_fold({probe_pair(16)}, toy_config(16, 3), shared_net());
  EXPECT_EQ(shared_net().weight_digest(), before);
}

TEST(TrainFold, BatchesAccumulate) {
  TrainConfig cfg = toy_config(16, 1);
  cfg.batch_size = 2;
  const std::vector<ImagePair> pairs{probe_pair(16), {testing::probe_image('g', 16), testing::probe_image('n', 16), 2, 1},
                                     {testing::probe_image('n', 16), testing::probe_image('s', 16), 3, 1}};
  std::size_t steps = 0;
  TrainObserver obs;
  obs.on_step = [&](std::size_t, double) { ++steps; };
  const auto ckpt = train_fold(pairs, cfg, shared_net(), obs);
  EXPECT_EQ(steps, 2u);
  EXPECT_EQ(ckpt.optimizer_steps, 2u);
}

TEST(TrainFold, DivergenceIsReported) {
  TrainConfig cfg = toy_config(16, 5);
  cfg.learning_rate = 1e38;
  EXPECT_THROW(train_fold({probe_pair(16)}, cfg, shared_net()), TrainingDivergedError);
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  const TrainConfig cfg = toy_config(16, 2);
  const Checkpoint ckpt = train_fold({probe_pair(16)}, cfg, shared_net());
  save_checkpoint(dir / "c.t2v", ckpt);
  const Checkpoint back = load_checkpoint(dir / "c.t2v");
  EXPECT_EQ(back.config, ckpt.config);
  EXPECT_EQ(back.epoch, 2);
  EXPECT_EQ(back.loss_history, ckpt.loss_history);
  EXPECT_EQ(parameter_digest(back.params), parameter_digest(ckpt.params));
  EXPECT_EQ(back.optimizer_steps, ckpt.optimizer_steps);
  EXPECT_EQ(back.adam_first, ckpt.adam_first);
  EXPECT_EQ(back.adam_second, ckpt.adam_second);
  const Image probe = testing::probe_image('n', 16);
  EXPECT_EQ(generate(back, probe, cfg.crn), generate(ckpt, probe, cfg.crn));
}

TEST(Checkpoint, CorruptionIsDetected) {
  TempDir dir;
  const Checkpoint ckpt = train_fold({}, toy_config(16, 0), shared_net());
  save_checkpoint(dir / "c.t2v", ckpt);
  std::string bytes = read_file(dir / "c.t2v");

  std::ofstream(dir / "short.t2v", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir / "short.t2v"), LoadError);

  std::string flipped = bytes;
  flipped[flipped.size() - 1] ^= 0x55;  // inside adam.bin (empty) -> last param byte
  std::ofstream(dir / "flip.t2v", std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(dir / "flip.t2v"), LoadError);

  std::ofstream(dir / "junk.t2v", std::ios::binary) << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.t2v"), LoadError);
}

TEST(Checkpoint, IncompatibleGenerator) {
  const TrainConfig cfg = toy_config(16, 0);
  const Checkpoint ckpt = train_fold({}, cfg, shared_net());
  CrnConfig other = cfg.crn;
  other.channel_schedule[0] = 4;
  EXPECT_THROW(restore_generator(ckpt, other), IncompatibleError);
}

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.fold_index = 3;
  m.train_identities = {1, 2};
  m.test_identities = {3};
  m.checkpoint_path = "out/fold3/checkpoint.t2v";
  m.generated[{3, 7}] = "out/fold3/3_7_gen.png";
  m.loss_history = {1.5, 1.25};
  const RunManifest back = manifest_from_json(to_json(m));
  EXPECT_EQ(to_json(back), to_json(m));
}

TEST(Manifest, LeakageAssert) {
  RunManifest m;
  m.train_identities = {1, 2};
  m.test_identities = {3};
  m.generated[{3, 1}] = "a.png";
  EXPECT_NO_THROW(assert_no_leakage(m));
  m.generated[{2, 1}] = "b.png";
  EXPECT_THROW(assert_no_leakage(m), Error);
}

TEST(CrossValidation, TwoFoldsOverFourIdentities) {
  TempDir dir;
  const auto records = toy_records(dir, 4, 2);
  const FoldPlan plan = make_folds(identities_of(records), 2, 0);
  const auto manifests = run_cross_validation(records, plan, toy_config(8, 1), shared_net(), dir / "out");
  ASSERT_EQ(manifests.size(), 2u);
  std::set<int> tested;
  for (const auto& m : manifests) {
    EXPECT_EQ(m.test_identities.size(), 2u);
    EXPECT_EQ(m.generated.size(), 4u);
    for (const auto& [key, path] : m.generated) {
      EXPECT_TRUE(std::filesystem::exists(path));
      EXPECT_EQ(read_png(path).height(), 8);
      tested.insert(key.first);
    }
    EXPECT_NO_THROW(assert_no_leakage(m));
    EXPECT_TRUE(std::filesystem::exists(fold_directory(dir / "out", m.fold_index) / "COMPLETE"));
    EXPECT_EQ(m.loss_history.size(), 1u);
  }
  EXPECT_EQ(tested, (std::set<int>{1, 2, 3, 4}));
}

TEST(CrossValidation, ResumeSkipsCompletedFolds) {
  TempDir dir;
  const auto records = toy_records(dir, 8, 1);
  const FoldPlan plan = make_folds(identities_of(records), 4, 1);
  const TrainConfig cfg = toy_config(8, 1);
  const auto out = dir / "out";
  const auto first = run_cross_validation(records, plan, cfg, shared_net(), out);
  std::map<std::string, std::string> images;
  for (const auto& m : first)
    for (const auto& [key, path] : m.generated) images[path] = read_file(path);

  // Interrupted during fold 2: its marker was never written, fold 3 never started.
  std::filesystem::remove(fold_directory(out, 2) / "COMPLETE");
  std::filesystem::remove_all(fold_directory(out, 3));

  std::vector<FoldEvent> events;
  CrossValidationObserver obs;
  obs.on_fold_start = [&](const FoldEvent& e) { events.push_back(e); };
  const auto second = run_cross_validation(records, plan, cfg, shared_net(), out, {}, obs);
  ASSERT_EQ(events.size(), 4u);
  EXPECT_TRUE(events[0].resumed);
  EXPECT_TRUE(events[1].resumed);
  EXPECT_FALSE(events[2].resumed);
  EXPECT_FALSE(events[3].resumed);
  ASSERT_EQ(second.size(), first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    auto a = to_json(first[i]);
    auto b = to_json(second[i]);
    a.erase("wall_time_seconds");
    b.erase("wall_time_seconds");
    EXPECT_EQ(a, b);
  }
  for (const auto& [path, bytes] : images) EXPECT_EQ(read_file(path), bytes) << path;
}

TEST(CrossValidation, OnlySelectedFolds) {
  TempDir dir;
  const auto records = toy_records(dir, 4, 1);
  const FoldPlan plan = make_folds(identities_of(records), 2, 0);
  CrossValidationOptions options;
  options.only_folds = {1};
  const auto manifests = run_cross_validation(records, plan, toy_config(8, 0), shared_net(), dir / "out", options);
  ASSERT_EQ(manifests.size(), 1u);
  EXPECT_EQ(manifests[0].fold_index, 1);
  EXPECT_FALSE(std::filesystem::exists(fold_directory(dir / "out", 0)));
}

TEST(CrossValidation, RejectsPlanThatLeaks) {
  TempDir dir;
  const auto records = toy_records(dir, 4, 1);
  FoldPlan plan = make_folds(identities_of(records), 2, 0);
  plan.folds[0].train.push_back(plan.folds[0].test[0]);
  EXPECT_THROW(run_cross_validation(records, plan, toy_config(8, 0), shared_net(), dir / "out"), ConfigError);
}

TEST(TrainFold, ReverseDirectionUsesVisibleAsSource) {
  TrainConfig cfg = toy_config(16, 0);
  cfg.reverse = true;
  EXPECT_NO_THROW(train_fold({probe_pair(16)}, cfg, shared_net()));
  cfg.epochs = 1;
  EXPECT_EQ(train_fold({probe_pair(16)}, cfg, shared_net()).loss_history.size(), 1u);
}

}  // namespace
}  // namespace t2v
