#include "t2v/config.hpp"

#include "t2v/digest.hpp"
#include "t2v/errors.hpp"
#include "t2v/fs.hpp"

namespace t2v {

using nlohmann::json;

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("train: batch size must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  validate(cfg.loss);
  validate(cfg.crn);
}

json to_json(const CrnConfig& cfg) {
  return {{"base_resolution", cfg.base_resolution},
          {"target_resolution", cfg.target_resolution},
          {"channel_schedule", cfg.channel_schedule},
          {"leaky_slope", cfg.leaky_slope},
          {"seed", cfg.seed}};
}

json to_json(const LossConfig& cfg) {
  return {{"lambda1", cfg.lambda1},
          {"lambda2", cfg.lambda2},
          {"source_layers", cfg.source_layers},
          {"target_layers", cfg.target_layers},
          {"h", cfg.bandwidth},
          {"epsilon", cfg.epsilon},
          {"feature_cap", cfg.feature_cap},
          {"subsample_seed", cfg.subsample_seed}};
}

json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},           {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate}, {"seed", cfg.seed},
          {"reverse", cfg.reverse},         {"loss", to_json(cfg.loss)},
          {"crn", to_json(cfg.crn)}};
}

json to_json(const RunConfig& cfg) {
  json train = to_json(cfg.train);
  json doc;
  doc["dataset"] = {{"root", cfg.dataset.root},
                    {"exclude_dark", cfg.dataset.exclude_dark},
                    {"dark_threshold", cfg.dataset.dark_threshold}};
  doc["folds"] = {{"k", cfg.folds.k}, {"seed", cfg.folds.seed}};
  doc["loss"] = train["loss"];
  doc["crn"] = train["crn"];
  train.erase("loss");
  train.erase("crn");
  doc["train"] = train;
  doc["perceptual"] = {{"weights_path", cfg.perceptual.weights_path}, {"sha256", cfg.perceptual.sha256}};
  doc["output"] = {{"dir", cfg.output_dir}};
  return doc;
}

namespace {

template <typename V>
void read_if(const json& doc, const char* key, V& out) {
  if (auto it = doc.find(key); it != doc.end() && !it->is_null()) out = it->get<V>();
}

template <typename F>
auto guarded(const char* section, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

}  // namespace

CrnConfig crn_config_from_json(const json& doc) {
  return guarded("crn", [&] {
    CrnConfig cfg;
    read_if(doc, "base_resolution", cfg.base_resolution);
    read_if(doc, "target_resolution", cfg.target_resolution);
    read_if(doc, "channel_schedule", cfg.channel_schedule);
    read_if(doc, "leaky_slope", cfg.leaky_slope);
    read_if(doc, "seed", cfg.seed);
    return cfg;
  });
}

LossConfig loss_config_from_json(const json& doc) {
  return guarded("loss", [&] {
    LossConfig cfg;
    read_if(doc, "lambda1", cfg.lambda1);
    read_if(doc, "lambda2", cfg.lambda2);
    read_if(doc, "source_layers", cfg.source_layers);
    read_if(doc, "target_layers", cfg.target_layers);
    read_if(doc, "h", cfg.bandwidth);
    read_if(doc, "epsilon", cfg.epsilon);
    read_if(doc, "feature_cap", cfg.feature_cap);
    read_if(doc, "subsample_seed", cfg.subsample_seed);
    return cfg;
  });
}

TrainConfig train_config_from_json(const json& doc) {
  return guarded("train", [&] {
    TrainConfig cfg;
    read_if(doc, "epochs", cfg.epochs);
    read_if(doc, "batch_size", cfg.batch_size);
    read_if(doc, "learning_rate", cfg.learning_rate);
    read_if(doc, "seed", cfg.seed);
    read_if(doc, "reverse", cfg.reverse);
    if (doc.contains("loss")) cfg.loss = loss_config_from_json(doc.at("loss"));
    if (doc.contains("crn")) cfg.crn = crn_config_from_json(doc.at("crn"));
    return cfg;
  });
}

RunConfig run_config_from_json(const json& doc) {
  return guarded("config", [&] {
    RunConfig cfg;
    if (doc.contains("dataset")) {
      const auto& d = doc.at("dataset");
      read_if(d, "root", cfg.dataset.root);
      read_if(d, "exclude_dark", cfg.dataset.exclude_dark);
      read_if(d, "dark_threshold", cfg.dataset.dark_threshold);
    }
    if (doc.contains("folds")) {
      read_if(doc.at("folds"), "k", cfg.folds.k);
      read_if(doc.at("folds"), "seed", cfg.folds.seed);
    }
    json train = doc.value("train", json::object());
    if (doc.contains("loss")) train["loss"] = doc.at("loss");
    if (doc.contains("crn")) train["crn"] = doc.at("crn");
    cfg.train = train_config_from_json(train);
    if (doc.contains("perceptual")) {
      read_if(doc.at("perceptual"), "weights_path", cfg.perceptual.weights_path);
      read_if(doc.at("perceptual"), "sha256", cfg.perceptual.sha256);
    }
    if (doc.contains("output")) read_if(doc.at("output"), "dir", cfg.output_dir);
    validate(cfg.train);
    if (cfg.folds.k < 2) throw ConfigError("folds: k must be at least 2");
    return cfg;
  });
}

std::string config_digest(const CrnConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }
std::string config_digest(const TrainConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json doc = to_json(RunConfig{});
  if (!file.empty()) {
    json user = json::parse(read_file(file), nullptr, false);
    if (user.is_discarded() || !user.is_object()) {
      throw ConfigError("config file " + file.string() + " is not a JSON object");
    }
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace t2v
