#pragma once

// Paired visible/thermal face corpus.
//
// Layout: <root>/<any identity dir>/<identity>_<variation>_<vis|thm>.png,
// visible stored as 8-bit RGB, thermal as 8-bit single-channel grayscale.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2v/tensor.hpp"

namespace t2v {

enum class Spectrum { visible, thermal };

const char* to_string(Spectrum s);

inline constexpr int kMinVariation = 1;
inline constexpr int kMaxVariation = 21;
inline constexpr int kNetworkResolution = 128;
inline constexpr double kDefaultDarkThreshold = 0.05;

struct CaptureRecord {
  int identity_id = 0;
  int variation_id = 1;
  Spectrum spectrum = Spectrum::visible;
  Image pixels;  // C = 3 visible, C = 1 thermal, values in [0,1]
  std::string source_path;
};

struct ImagePair {
  Image thermal;  // 3 identical channels
  Image visible;
  int identity_id = 0;
  int variation_id = 0;
};

struct Fold {
  std::vector<int> train;  // sorted
  std::vector<int> test;   // sorted
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

struct DatasetIssue {
  enum class Kind { orphan, unreadable, bad_name };
  Kind kind;
  int identity_id = -1;
  int variation_id = -1;
  std::string path;
  std::string message;
};

struct DatasetScan {
  std::vector<CaptureRecord> records;  // sorted (identity, variation, spectrum)
  std::vector<DatasetIssue> issues;
};

// Collects every readable record and reports problems instead of throwing.
// Throws IngestionError only when the root itself cannot be read.
DatasetScan scan_dataset(const std::filesystem::path& root);

// Strict loader: the first orphan becomes a PairingError, the first
// unreadable file an IngestionError.
std::vector<CaptureRecord> load_dataset(const std::filesystem::path& root);

ImagePair preprocess_pair(const CaptureRecord& thermal, const CaptureRecord& visible,
                          int resolution = kNetworkResolution);

double mean_luminance(const Image& image);

bool is_dark(const CaptureRecord& visible, double threshold = kDefaultDarkThreshold);

FoldPlan make_folds(std::vector<int> identities, int k, std::uint64_t seed);

// Checks the plan's coverage/disjointness invariants against an identity set.
void validate_fold_plan(const FoldPlan& plan, const std::vector<int>& identities);

std::vector<int> identities_of(const std::vector<CaptureRecord>& records);

// Preprocessed pairs for the fold's training identities. Records without a
// counterpart are skipped.
std::vector<ImagePair> training_pairs(const std::vector<CaptureRecord>& records, const Fold& fold,
                                      bool exclude_dark,
                                      double dark_threshold = kDefaultDarkThreshold,
                                      int resolution = kNetworkResolution);

// Every pair of the fold's test identities, dark captures included.
std::vector<ImagePair> test_pairs(const std::vector<CaptureRecord>& records, const Fold& fold,
                                  int resolution = kNetworkResolution);

// All complete pairs in the record set.
std::vector<ImagePair> all_pairs(const std::vector<CaptureRecord>& records,
                                 int resolution = kNetworkResolution);

const CaptureRecord* find_record(const std::vector<CaptureRecord>& records, int identity,
                                 int variation, Spectrum spectrum);

nlohmann::json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& doc);

}  // namespace t2v
