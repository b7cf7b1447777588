#include "t2v/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "t2v/cxloss.hpp"
#include "t2v/digest.hpp"
#include "t2v/errors.hpp"
#include "t2v/fs.hpp"
#include "t2v/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace t2v {

namespace {

// Reference features are cached only for small training sets.
constexpr std::size_t kReferenceCachePairs = 16;

Checkpoint make_checkpoint(const TrainConfig& cfg, const CrnModel<float>& model, const Adam<float>& adam,
                           int epoch, std::vector<double> history, const PerceptualNet<float>& net) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.config_digest = config_digest(cfg);
  ckpt.epoch = epoch;
  ckpt.loss_history = std::move(history);
  ckpt.params = model.params();
  for (auto& p : ckpt.params) p.grad.clear();
  ckpt.optimizer_steps = adam.steps();
  ckpt.adam_first = adam.first_moments();
  ckpt.adam_second = adam.second_moments();
  ckpt.perceptual_digest = net.source_digest();
  return ckpt;
}

}  // namespace

Checkpoint train_fold(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                      const PerceptualNet<float>& net, const TrainObserver& observer) {
  validate(cfg);
  CrnModel<float> model(cfg.crn);
  Adam<float> adam(AdamOptions{.learning_rate = cfg.learning_rate});
  if (cfg.epochs == 0) return make_checkpoint(cfg, model, adam, 0, {}, net);
  if (pairs.empty()) throw ContractError("train: no training pairs");

  const bool cache_refs = pairs.size() <= kReferenceCachePairs;
  std::vector<std::optional<ReferenceFeatures<float>>> ref_cache(cache_refs ? pairs.size() : 0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  std::size_t step = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const float scale = 1.0f / static_cast<float>(end - start);
      ++step;
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const ImagePair& pair = pairs[idx];
        const Image& source = cfg.reverse ? pair.visible : pair.thermal;
        const Image& target = cfg.reverse ? pair.thermal : pair.visible;

        ReferenceFeatures<float> local;
        const ReferenceFeatures<float>* refs = &local;
        if (cache_refs) {
          if (!ref_cache[idx]) ref_cache[idx] = reference_features(source, target, net, cfg.loss);
          refs = &*ref_cache[idx];
        } else {
          local = reference_features(source, target, net, cfg.loss);
        }

        CrnModel<float>::Trace trace;
        const Image generated = model.forward(source, &trace);
        for (float v : generated.values())
          if (!std::isfinite(v)) throw TrainingDivergedError(step);
        Image grad;
        const LossBreakdown loss = total_loss(*refs, generated, net, cfg.loss, &grad);
        if (!std::isfinite(loss.total)) throw TrainingDivergedError(step);
        for (float& g : grad.values()) g *= scale;
        model.backward(trace, grad);
        batch_loss += loss.total;
      }
      adam.step(model.params());
      epoch_sum += batch_loss;
      if (observer.on_step) observer.on_step(step, batch_loss / static_cast<double>(end - start));
    }
    history.push_back(epoch_sum / static_cast<double>(pairs.size()));
    if (observer.on_epoch) observer.on_epoch(epoch + 1, history.back());
  }
  return make_checkpoint(cfg, model, adam, cfg.epochs, std::move(history), net);
}

std::string parameter_digest(const std::vector<Parameter<float>>& params) {
  Sha256 h;
  for (const auto& p : params) {
    h.update(p.name);
    h.update_values(std::span<const float>(p.value));
  }
  return h.hex_digest();
}

CrnModel<float> restore_generator(const Checkpoint& ckpt, const CrnConfig& expected) {
  if (config_digest(ckpt.config.crn) != config_digest(expected)) {
    throw IncompatibleError("checkpoint was trained for a different generator configuration");
  }
  CrnModel<float> model(ckpt.config.crn, false);
  auto& params = model.params();
  if (params.size() != ckpt.params.size()) {
    throw IncompatibleError("checkpoint parameter list does not match the generator");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.params[i].name || params[i].shape != ckpt.params[i].shape) {
      throw IncompatibleError("checkpoint parameter " + ckpt.params[i].name + " does not match");
    }
    params[i].value = ckpt.params[i].value;
  }
  return model;
}

Image generate(const Checkpoint& ckpt, const Image& source, const CrnConfig& expected) {
  return restore_generator(ckpt, expected).forward(source);
}

// ---------------------------------------------------------------------------
// Checkpoint container: "T2VCKPT1", u32 entry count, then per entry
// u32 name length, name, u64 size, bytes.

namespace {

constexpr char kCheckpointMagic[8] = {'T', '2', 'V', 'C', 'K', 'P', 'T', '1'};
constexpr int kCheckpointFormat = 1;

template <typename V>
void append_raw(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void append_floats(std::string& out, const std::vector<float>& values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw LoadError(what_ + ": truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename V>
  V get() {
    V v{};
    read(&v, sizeof v);
    return v;
  }
  std::vector<float> floats(std::size_t n) {
    std::vector<float> v(n);
    read(v.data(), n * sizeof(float));
    return v;
  }
  std::string take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw LoadError(what_ + ": truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json meta;
  meta["format"] = kCheckpointFormat;
  meta["config"] = to_json(ckpt.config);
  meta["config_digest"] = ckpt.config_digest;
  meta["crn_digest"] = config_digest(ckpt.config.crn);
  meta["seed"] = ckpt.config.seed;
  meta["epoch"] = ckpt.epoch;
  meta["loss_history"] = ckpt.loss_history;
  meta["parameter_digest"] = parameter_digest(ckpt.params);
  meta["perceptual_digest"] = ckpt.perceptual_digest;
  meta["optimizer_steps"] = ckpt.optimizer_steps;
  meta["has_optimizer_state"] = !ckpt.adam_first.empty();
  json params = json::array();
  for (const auto& p : ckpt.params) params.push_back({{"name", p.name}, {"shape", p.shape}});
  meta["params"] = params;

  std::string param_blob;
  for (const auto& p : ckpt.params) append_floats(param_blob, p.value);
  std::string adam_blob;
  for (std::size_t i = 0; i < ckpt.adam_first.size(); ++i) {
    append_floats(adam_blob, ckpt.adam_first[i]);
    append_floats(adam_blob, ckpt.adam_second[i]);
  }

  const std::vector<std::pair<std::string, std::string>> entries{
      {"meta.json", meta.dump(2)}, {"params.bin", param_blob}, {"adam.bin", adam_blob}};
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  append_raw(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, bytes] : entries) {
    append_raw(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append_raw(out, static_cast<std::uint64_t>(bytes.size()));
    out += bytes;
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  Cursor cur(bytes, "checkpoint " + path.string());
  char magic[8];
  cur.read(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw LoadError(path.string() + " is not a checkpoint");
  }
  std::map<std::string, std::string> entries;
  const auto count = cur.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = cur.get<std::uint32_t>();
    std::string name = cur.take(name_len);
    const auto size = cur.get<std::uint64_t>();
    entries[name] = cur.take(size);
  }
  for (const char* required : {"meta.json", "params.bin", "adam.bin"}) {
    if (!entries.contains(required)) throw LoadError("checkpoint is missing " + std::string(required));
  }
  const json meta = json::parse(entries["meta.json"], nullptr, false);
  if (meta.is_discarded()) throw LoadError("checkpoint meta.json is not valid JSON");
  if (meta.value("format", 0) != kCheckpointFormat) throw LoadError("unsupported checkpoint format");

  Checkpoint ckpt;
  try {
    ckpt.config = train_config_from_json(meta.at("config"));
    ckpt.config_digest = meta.at("config_digest").get<std::string>();
    ckpt.epoch = meta.at("epoch").get<int>();
    ckpt.loss_history = meta.at("loss_history").get<std::vector<double>>();
    ckpt.optimizer_steps = meta.at("optimizer_steps").get<std::uint64_t>();
    ckpt.perceptual_digest = meta.value("perceptual_digest", "");
    Cursor pc(entries["params.bin"], "checkpoint params");
    for (const auto& p : meta.at("params")) {
      Parameter<float> param(p.at("name").get<std::string>(), p.at("shape").get<std::vector<int>>());
      param.grad.clear();
      param.value = pc.floats(param.size());
      ckpt.params.push_back(std::move(param));
    }
    if (!pc.done()) throw LoadError("checkpoint params.bin has trailing bytes");
    if (meta.value("has_optimizer_state", false)) {
      Cursor ac(entries["adam.bin"], "checkpoint optimizer state");
      for (const auto& p : ckpt.params) {
        ckpt.adam_first.push_back(ac.floats(p.size()));
        ckpt.adam_second.push_back(ac.floats(p.size()));
      }
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint meta.json: ") + e.what());
  }
  if (config_digest(ckpt.config) != ckpt.config_digest) {
    throw LoadError("checkpoint config digest does not match its config echo");
  }
  if (static_cast<int>(ckpt.loss_history.size()) != ckpt.epoch) {
    throw LoadError("checkpoint loss history length differs from its epoch index");
  }
  if (parameter_digest(ckpt.params) != meta.value("parameter_digest", "")) {
    throw LoadError("checkpoint parameter digest mismatch");
  }
  return ckpt;
}

// ---------------------------------------------------------------------------

json to_json(const RunManifest& m) {
  json generated = json::array();
  for (const auto& [key, path] : m.generated) {
    generated.push_back({{"identity", key.first}, {"variation", key.second}, {"path", path}});
  }
  return {{"fold", m.fold_index},
          {"train_identities", m.train_identities},
          {"test_identities", m.test_identities},
          {"checkpoint", m.checkpoint_path},
          {"generated", generated},
          {"wall_time_seconds", m.wall_time_seconds},
          {"loss_history", m.loss_history}};
}

RunManifest manifest_from_json(const json& doc) {
  try {
    RunManifest m;
    m.fold_index = doc.at("fold").get<int>();
    m.train_identities = doc.at("train_identities").get<std::vector<int>>();
    m.test_identities = doc.at("test_identities").get<std::vector<int>>();
    m.checkpoint_path = doc.at("checkpoint").get<std::string>();
    for (const auto& g : doc.at("generated")) {
      m.generated[{g.at("identity").get<int>(), g.at("variation").get<int>()}] = g.at("path").get<std::string>();
    }
    m.wall_time_seconds = doc.value("wall_time_seconds", 0.0);
    m.loss_history = doc.value("loss_history", std::vector<double>{});
    return m;
  } catch (const json::exception& e) {
    throw LoadError(std::string("manifest: ") + e.what());
  }
}

fs::path fold_directory(const fs::path& out_dir, int fold) { return out_dir / ("fold" + std::to_string(fold)); }

fs::path generated_image_path(const fs::path& out_dir, int fold, int identity, int variation) {
  return fold_directory(out_dir, fold) /
         (std::to_string(identity) + "_" + std::to_string(variation) + "_gen.png");
}

void assert_no_leakage(const RunManifest& manifest) {
  const std::set<int> train(manifest.train_identities.begin(), manifest.train_identities.end());
  for (const auto& [key, path] : manifest.generated) {
    if (train.contains(key.first)) {
      throw Error("leakage: fold " + std::to_string(manifest.fold_index) + " generated identity " +
                  std::to_string(key.first) + " it was trained on");
    }
  }
}

namespace {

constexpr const char* kCompleteMarker = "COMPLETE";

}  // namespace

std::vector<RunManifest> run_cross_validation(const std::vector<CaptureRecord>& records, const FoldPlan& plan,
                                              const TrainConfig& cfg, const PerceptualNet<float>& net,
                                              const fs::path& out_dir, const CrossValidationOptions& options,
                                              const CrossValidationObserver& observer) {
  validate(cfg);
  validate_fold_plan(plan, identities_of(records));
  const int resolution = cfg.crn.target_resolution;
  std::vector<RunManifest> manifests;
  for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
    if (!options.only_folds.empty() &&
        std::find(options.only_folds.begin(), options.only_folds.end(), f) == options.only_folds.end()) {
      continue;
    }
    const Fold& fold = plan.folds[static_cast<std::size_t>(f)];
    const fs::path dir = fold_directory(out_dir, f);
    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(dir / kCompleteMarker) && fs::exists(manifest_path)) {
      if (observer.on_fold_start) observer.on_fold_start({f, true});
      RunManifest m = manifest_from_json(json::parse(read_file(manifest_path)));
      assert_no_leakage(m);
      manifests.push_back(std::move(m));
      continue;
    }
    if (observer.on_fold_start) observer.on_fold_start({f, false});
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);

    const auto train = training_pairs(records, fold, options.exclude_dark, options.dark_threshold, resolution);
    const Checkpoint ckpt = train_fold(train, cfg, net, observer.train);
    const fs::path ckpt_path = dir / "checkpoint.t2v";
    save_checkpoint(ckpt_path, ckpt);

    RunManifest m;
    m.fold_index = f;
    m.train_identities = fold.train;
    m.test_identities = fold.test;
    m.checkpoint_path = ckpt_path.string();
    m.loss_history = ckpt.loss_history;
    const CrnModel<float> model = restore_generator(ckpt, cfg.crn);
    for (const auto& pair : test_pairs(records, fold, resolution)) {
      const Image& source = cfg.reverse ? pair.visible : pair.thermal;
      const fs::path out = generated_image_path(out_dir, f, pair.identity_id, pair.variation_id);
      write_png(out, model.forward(source));
      m.generated[{pair.identity_id, pair.variation_id}] = out.string();
    }
    assert_no_leakage(m);
    m.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file_atomic(manifest_path, to_json(m).dump(2));
    write_file_atomic(dir / kCompleteMarker, "");
    manifests.push_back(std::move(m));
  }
  return manifests;
}

}  // namespace t2v
