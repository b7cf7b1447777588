#include "t2v/dataset.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <tuple>

#include "t2v/errors.hpp"
#include "t2v/image.hpp"
#include "t2v/ops.hpp"

namespace fs = std::filesystem;

namespace t2v {

const char* to_string(Spectrum s) { return s == Spectrum::visible ? "visible" : "thermal"; }

namespace {

const std::regex& filename_pattern() {
  static const std::regex re(R"(^(\d+)_(\d+)_(vis|thm)\.png$)");
  return re;
}

auto record_key(const CaptureRecord& r) {
  return std::make_tuple(r.identity_id, r.variation_id, static_cast<int>(r.spectrum));
}

Image to_record_channels(Image img, Spectrum spectrum) {
  if (spectrum == Spectrum::visible && img.channels() == 1) return replicate_channels(img);
  if (spectrum == Spectrum::thermal && img.channels() == 3) {
    const Luminance lum = to_luminance(img);
    Image gray(1, img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) gray(0, y, x) = static_cast<float>(lum(y, x));
    return gray;
  }
  return img;
}

Image to_network(const Image& img, int resolution) {
  Image square = center_crop_square(img);
  return ops::resize_bilinear(std::move(square), resolution, resolution);
}

}  // namespace

DatasetScan scan_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw IngestionError("dataset root is not a readable directory", root.string());
  }
  DatasetScan scan;
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file() && it->path().extension() == ".png") files.push_back(it->path());
  }
  if (ec) throw IngestionError("cannot list dataset root", root.string());
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, filename_pattern())) {
      scan.issues.push_back({DatasetIssue::Kind::bad_name, -1, -1, path.string(),
                             "file name does not follow <identity>_<variation>_<vis|thm>.png"});
      continue;
    }
    CaptureRecord rec;
    rec.identity_id = std::stoi(m[1].str());
    rec.variation_id = std::stoi(m[2].str());
    rec.spectrum = m[3].str() == "vis" ? Spectrum::visible : Spectrum::thermal;
    rec.source_path = path.string();
    if (rec.variation_id < kMinVariation || rec.variation_id > kMaxVariation) {
      scan.issues.push_back({DatasetIssue::Kind::bad_name, rec.identity_id, rec.variation_id,
                             path.string(), "variation outside [1, 21]"});
      continue;
    }
    try {
      rec.pixels = to_record_channels(read_png(path), rec.spectrum);
    } catch (const IngestionError& e) {
      scan.issues.push_back({DatasetIssue::Kind::unreadable, rec.identity_id, rec.variation_id,
                             path.string(), e.what()});
      continue;
    }
    scan.records.push_back(std::move(rec));
  }
  std::sort(scan.records.begin(), scan.records.end(),
            [](const CaptureRecord& a, const CaptureRecord& b) { return record_key(a) < record_key(b); });

  // Pairing: every (identity, variation) needs both spectra.
  std::map<std::pair<int, int>, std::vector<const CaptureRecord*>> groups;
  for (const auto& r : scan.records) groups[{r.identity_id, r.variation_id}].push_back(&r);
  for (const auto& [key, members] : groups) {
    if (members.size() == 2) continue;
    const CaptureRecord* r = members.front();
    const char* missing = r->spectrum == Spectrum::visible ? "thermal" : "visible";
    scan.issues.push_back({DatasetIssue::Kind::orphan, key.first, key.second, r->source_path,
                           "identity " + std::to_string(key.first) + " variation " +
                               std::to_string(key.second) + " has no " + missing + " counterpart"});
  }
  return scan;
}

std::vector<CaptureRecord> load_dataset(const fs::path& root) {
  DatasetScan scan = scan_dataset(root);
  for (const auto& issue : scan.issues) {
    if (issue.kind == DatasetIssue::Kind::unreadable) throw IngestionError(issue.message, issue.path);
  }
  for (const auto& issue : scan.issues) {
    if (issue.kind == DatasetIssue::Kind::orphan) {
      throw PairingError("pairing error: " + issue.message, issue.identity_id, issue.variation_id);
    }
  }
  return std::move(scan.records);
}

ImagePair preprocess_pair(const CaptureRecord& thermal, const CaptureRecord& visible, int resolution) {
  if (thermal.spectrum != Spectrum::thermal || visible.spectrum != Spectrum::visible) {
    throw PairingError("pairing error: expected a thermal and a visible record", thermal.identity_id,
                       thermal.variation_id);
  }
  if (thermal.identity_id != visible.identity_id || thermal.variation_id != visible.variation_id) {
    throw PairingError("pairing error: records belong to different captures", thermal.identity_id,
                       thermal.variation_id);
  }
  if (thermal.pixels.channels() != 1 || visible.pixels.channels() != 3) {
    throw ContractError("preprocess: thermal must have 1 channel and visible 3");
  }
  ImagePair pair;
  pair.identity_id = thermal.identity_id;
  pair.variation_id = thermal.variation_id;
  pair.thermal = replicate_channels(to_network(thermal.pixels, resolution));
  pair.visible = to_network(visible.pixels, resolution);
  return pair;
}

double mean_luminance(const Image& image) { return to_luminance(image).mean(); }

bool is_dark(const CaptureRecord& visible, double threshold) {
  if (visible.spectrum != Spectrum::visible) throw ContractError("is_dark: expected a visible record");
  return mean_luminance(visible.pixels) < threshold;
}

FoldPlan make_folds(std::vector<int> identities, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("folds: k must be at least 2");
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
  const int n = static_cast<int>(identities.size());
  if (n == 0) throw ConfigError("folds: no identities to split");
  if (n % k != 0) {
    throw ConfigError("folds: " + std::to_string(n) + " identities cannot be split into " +
                      std::to_string(k) + " equal folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> order = identities;
  std::shuffle(order.begin(), order.end(), rng);
  const int block = n / k;
  FoldPlan plan;
  plan.seed = seed;
  for (int f = 0; f < k; ++f) {
    Fold fold;
    fold.test.assign(order.begin() + f * block, order.begin() + (f + 1) * block);
    std::sort(fold.test.begin(), fold.test.end());
    std::set_difference(identities.begin(), identities.end(), fold.test.begin(), fold.test.end(),
                        std::back_inserter(fold.train));
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

void validate_fold_plan(const FoldPlan& plan, const std::vector<int>& identities) {
  std::set<int> all(identities.begin(), identities.end());
  std::map<int, int> test_count;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    std::set<int> train(fold.train.begin(), fold.train.end());
    std::set<int> test(fold.test.begin(), fold.test.end());
    std::set<int> joined = train;
    for (int id : test) {
      if (train.contains(id)) {
        throw ConfigError("folds: identity " + std::to_string(id) + " in both train and test of fold " +
                          std::to_string(f));
      }
      joined.insert(id);
      ++test_count[id];
    }
    if (joined != all) throw ConfigError("folds: fold " + std::to_string(f) + " does not cover the identity set");
  }
  for (int id : all) {
    if (test_count[id] != 1) {
      throw ConfigError("folds: identity " + std::to_string(id) + " is tested " +
                        std::to_string(test_count[id]) + " times");
    }
  }
}

std::vector<int> identities_of(const std::vector<CaptureRecord>& records) {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.identity_id);
  return {ids.begin(), ids.end()};
}

const CaptureRecord* find_record(const std::vector<CaptureRecord>& records, int identity, int variation,
                                 Spectrum spectrum) {
  for (const auto& r : records) {
    if (r.identity_id == identity && r.variation_id == variation && r.spectrum == spectrum) return &r;
  }
  return nullptr;
}

namespace {

template <typename Keep>
std::vector<ImagePair> collect_pairs(const std::vector<CaptureRecord>& records, int resolution, Keep keep) {
  std::map<std::pair<int, int>, std::pair<const CaptureRecord*, const CaptureRecord*>> groups;
  for (const auto& r : records) {
    auto& slot = groups[{r.identity_id, r.variation_id}];
    (r.spectrum == Spectrum::thermal ? slot.first : slot.second) = &r;
  }
  std::vector<ImagePair> pairs;
  for (const auto& [key, slot] : groups) {
    const auto [thermal, visible] = slot;
    if (thermal == nullptr || visible == nullptr) continue;
    if (!keep(*visible)) continue;
    pairs.push_back(preprocess_pair(*thermal, *visible, resolution));
  }
  return pairs;
}

}  // namespace

std::vector<ImagePair> training_pairs(const std::vector<CaptureRecord>& records, const Fold& fold,
                                      bool exclude_dark, double dark_threshold, int resolution) {
  const std::set<int> train(fold.train.begin(), fold.train.end());
  return collect_pairs(records, resolution, [&](const CaptureRecord& visible) {
    if (!train.contains(visible.identity_id)) return false;
    return !(exclude_dark && is_dark(visible, dark_threshold));
  });
}

std::vector<ImagePair> test_pairs(const std::vector<CaptureRecord>& records, const Fold& fold, int resolution) {
  const std::set<int> test(fold.test.begin(), fold.test.end());
  return collect_pairs(records, resolution,
                       [&](const CaptureRecord& visible) { return test.contains(visible.identity_id); });
}

std::vector<ImagePair> all_pairs(const std::vector<CaptureRecord>& records, int resolution) {
  return collect_pairs(records, resolution, [](const CaptureRecord&) { return true; });
}

nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json doc;
  doc["seed"] = plan.seed;
  doc["folds"] = nlohmann::json::array();
  for (const auto& f : plan.folds) doc["folds"].push_back({{"train", f.train}, {"test", f.test}});
  return doc;
}

FoldPlan fold_plan_from_json(const nlohmann::json& doc) {
  try {
    FoldPlan plan;
    plan.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& f : doc.at("folds")) {
      plan.folds.push_back({f.at("train").get<std::vector<int>>(), f.at("test").get<std::vector<int>>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("folds: malformed fold plan document: ") + e.what());
  }
}

}  // namespace t2v
