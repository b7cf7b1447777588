#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "support.hpp"
#include "t2v/dataset.hpp"
#include "t2v/errors.hpp"

namespace t2v {
namespace {

using testing::TempDir;

CaptureRecord make_record(int id, int var, Spectrum s, float value, int h = 8, int w = 8) {
  CaptureRecord r;
  r.identity_id = id;
  r.variation_id = var;
  r.spectrum = s;
  r.pixels = Image(s == Spectrum::visible ? 3 : 1, h, w, value);
  return r;
}

// 50 identities x 21 variations; variation 5 of every identity is dark.
std::vector<CaptureRecord> synthetic_records(int identities = 50, int dark_variation = 5) {
  std::vector<CaptureRecord> records;
  for (int id = 1; id <= identities; ++id) {
    for (int var = kMinVariation; var <= kMaxVariation; ++var) {
      records.push_back(make_record(id, var, Spectrum::visible, var == dark_variation ? 0.01f : 0.6f));
      records.push_back(make_record(id, var, Spectrum::thermal, 0.4f));
    }
  }
  return records;
}

std::vector<int> range_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  return ids;
}

TEST(LoadDataset, FullCorpusYieldsAllRecords) {
  TempDir dir;
  testing::CorpusSpec spec;
  spec.identities = 50;
  spec.variations = 21;
  spec.visible_size = 8;
  spec.thermal_width = 8;
  spec.thermal_height = 6;
  testing::write_corpus(dir.path(), spec);
  const auto records = load_dataset(dir.path());
  EXPECT_EQ(records.size(), 2100u);
  EXPECT_EQ(identities_of(records).size(), 50u);
  EXPECT_TRUE(std::is_sorted(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.identity_id, a.variation_id) < std::tie(b.identity_id, b.variation_id);
  }));
  for (const auto& r : records) {
    EXPECT_EQ(r.pixels.channels(), r.spectrum == Spectrum::visible ? 3 : 1);
  }
}

TEST(LoadDataset, EmptyDirectoryIsEmpty) {
  TempDir dir;
  EXPECT_TRUE(load_dataset(dir.path()).empty());
}

TEST(LoadDataset, MissingRootIsIngestionError) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir / "absent"), IngestionError);
}

TEST(LoadDataset, MissingThermalNamesTheCapture) {
  TempDir dir;
  testing::CorpusSpec spec;
  spec.identities = 3;
  spec.variations = 7;
  testing::write_corpus(dir.path(), spec);
  std::filesystem::remove(dir / "3_7_thm.png");
  try {
    load_dataset(dir.path());
    FAIL() << "expected a pairing error";
  } catch (const PairingError& e) {
    EXPECT_EQ(e.identity(), 3);
    EXPECT_EQ(e.variation(), 7);
    EXPECT_NE(std::string(e.what()).find("identity 3 variation 7"), std::string::npos);
  }
}

TEST(LoadDataset, CorruptFileIsIngestionErrorWithPath) {
  TempDir dir;
  testing::write_corpus(dir.path(), {});
  std::ofstream(dir / "2_2_vis.png") << "not a png";
  try {
    load_dataset(dir.path());
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("2_2_vis.png"), std::string::npos);
  }
}

TEST(ScanDataset, ReportsOrphansAndBadNamesWithoutThrowing) {
  TempDir dir;
  testing::write_corpus(dir.path(), {});
  std::filesystem::remove(dir / "1_1_vis.png");
  std::filesystem::copy_file(dir / "1_2_vis.png", dir / "face.png");
  const auto scan = scan_dataset(dir.path());
  EXPECT_EQ(scan.records.size(), 4u * 3u * 2u - 1u);
  int orphans = 0;
  int bad = 0;
  for (const auto& i : scan.issues) {
    orphans += i.kind == DatasetIssue::Kind::orphan;
    bad += i.kind == DatasetIssue::Kind::bad_name;
  }
  EXPECT_EQ(orphans, 1);
  EXPECT_EQ(bad, 1);
}

TEST(PreprocessPair, ThermalBecomesThreeEqualChannelsAt128) {
  CaptureRecord thm = make_record(1, 1, Spectrum::thermal, 0.0f, 120, 160);
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 160; ++x) thm.pixels(0, y, x) = static_cast<float>((x * 7 + y * 3) % 255) / 255.0f;
  const CaptureRecord vis = make_record(1, 1, Spectrum::visible, 0.5f, 120, 120);
  const ImagePair pair = preprocess_pair(thm, vis);
  ASSERT_EQ(pair.thermal.channels(), 3);
  EXPECT_EQ(pair.thermal.height(), 128);
  EXPECT_EQ(pair.thermal.width(), 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      EXPECT_EQ(pair.thermal(0, y, x), pair.thermal(1, y, x));
      EXPECT_EQ(pair.thermal(0, y, x), pair.thermal(2, y, x));
    }
  EXPECT_EQ(pair.visible.height(), 128);
}

TEST(PreprocessPair, NativeResolutionIsUnchanged) {
  const Image vis_pixels = testing::random_image(3, 128, 128, 3);
  CaptureRecord vis = make_record(2, 4, Spectrum::visible, 0.0f, 128, 128);
  vis.pixels = vis_pixels;
  CaptureRecord thm = make_record(2, 4, Spectrum::thermal, 0.0f, 128, 128);
  thm.pixels = testing::random_image(1, 128, 128, 4);
  const ImagePair pair = preprocess_pair(thm, vis);
  EXPECT_EQ(pair.visible, vis_pixels);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) EXPECT_EQ(pair.thermal(1, y, x), thm.pixels(0, y, x));
}

TEST(PreprocessPair, ConstantStaysConstant) {
  const float c = 0.3137f;
  const ImagePair pair = preprocess_pair(make_record(1, 1, Spectrum::thermal, c, 120, 160),
                                         make_record(1, 1, Spectrum::visible, c, 97, 131));
  for (float v : pair.thermal.values()) EXPECT_EQ(v, c);
  for (float v : pair.visible.values()) EXPECT_EQ(v, c);
}

TEST(PreprocessPair, RejectsMismatchedCaptures) {
  EXPECT_THROW(preprocess_pair(make_record(1, 1, Spectrum::thermal, 0.2f), make_record(1, 2, Spectrum::visible, 0.2f)),
               PairingError);
}

TEST(IsDark, Thresholds) {
  EXPECT_TRUE(is_dark(make_record(1, 1, Spectrum::visible, 0.0f)));
  EXPECT_FALSE(is_dark(make_record(1, 1, Spectrum::visible, 1.0f)));
  EXPECT_TRUE(is_dark(make_record(1, 1, Spectrum::visible, 0.049f)));
  EXPECT_FALSE(is_dark(make_record(1, 1, Spectrum::visible, 0.051f)));
}

TEST(MakeFolds, TenFoldsOfFiftyIdentities) {
  const auto plan = make_folds(range_ids(50), 10, 42);
  ASSERT_EQ(plan.folds.size(), 10u);
  std::multiset<int> tested;
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.train.size(), 45u);
    EXPECT_EQ(f.test.size(), 5u);
    tested.insert(f.test.begin(), f.test.end());
  }
  for (int id = 1; id <= 50; ++id) EXPECT_EQ(tested.count(id), 1u);
  EXPECT_NO_THROW(validate_fold_plan(plan, range_ids(50)));
}

TEST(MakeFolds, LeaveOneIdentityOut) {
  const auto plan = make_folds(range_ids(50), 50, 1);
  ASSERT_EQ(plan.folds.size(), 50u);
  for (const auto& f : plan.folds) EXPECT_EQ(f.test.size(), 1u);
}

TEST(MakeFolds, DeterministicPerSeed) {
  const auto a = make_folds(range_ids(50), 10, 9);
  const auto b = make_folds(range_ids(50), 10, 9);
  EXPECT_EQ(to_json(a), to_json(b));
  const auto c = make_folds(range_ids(50), 10, 10);
  EXPECT_NE(to_json(a), to_json(c));
}

TEST(MakeFolds, InputOrderDoesNotMatter) {
  auto ids = range_ids(20);
  std::reverse(ids.begin(), ids.end());
  EXPECT_EQ(to_json(make_folds(ids, 4, 3)), to_json(make_folds(range_ids(20), 4, 3)));
}

TEST(MakeFolds, RejectsUnevenAndDegenerateSplits) {
  EXPECT_THROW(make_folds(range_ids(7), 2, 0), ConfigError);
  EXPECT_THROW(make_folds(range_ids(10), 1, 0), ConfigError);
  EXPECT_THROW(make_folds({}, 2, 0), ConfigError);
}

TEST(MakeFolds, JsonRoundTrip) {
  const auto plan = make_folds(range_ids(10), 5, 77);
  const auto back = fold_plan_from_json(to_json(plan));
  EXPECT_EQ(to_json(back), to_json(plan));
  EXPECT_THROW(fold_plan_from_json(nlohmann::json::object()), ConfigError);
}

TEST(ValidateFoldPlan, DetectsLeakage) {
  auto plan = make_folds(range_ids(10), 5, 1);
  plan.folds[0].train.push_back(plan.folds[0].test.front());
  EXPECT_THROW(validate_fold_plan(plan, range_ids(10)), ConfigError);
}

TEST(TrainingPairs, DarkExclusionCounts) {
  const auto records = synthetic_records();
  const auto plan = make_folds(range_ids(50), 10, 0);
  const Fold& fold = plan.folds[0];
  EXPECT_EQ(training_pairs(records, fold, true, kDefaultDarkThreshold, 8).size(), 900u);
  EXPECT_EQ(training_pairs(records, fold, false, kDefaultDarkThreshold, 8).size(), 945u);
  for (const auto& p : training_pairs(records, fold, true, kDefaultDarkThreshold, 8)) {
    EXPECT_TRUE(std::binary_search(fold.train.begin(), fold.train.end(), p.identity_id));
  }
}

TEST(TrainingPairs, EmptyTrainSetIsEmpty) {
  const auto records = synthetic_records(4);
  Fold fold;
  fold.test = {1, 2, 3, 4};
  EXPECT_TRUE(training_pairs(records, fold, true, kDefaultDarkThreshold, 8).empty());
}

TEST(TestPairs, KeepDarkImagesAndOnlyTestIdentities) {
  const auto records = synthetic_records(10);
  const auto plan = make_folds(range_ids(10), 5, 0);
  const auto pairs = test_pairs(records, plan.folds[1], 8);
  EXPECT_EQ(pairs.size(), 2u * 21u);
  for (const auto& p : pairs) {
    EXPECT_TRUE(std::binary_search(plan.folds[1].test.begin(), plan.folds[1].test.end(), p.identity_id));
  }
}

}  // namespace
}  // namespace t2v
