#include "t2v/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "t2v/config.hpp"
#include "t2v/dataset.hpp"
#include "t2v/errors.hpp"
#include "t2v/fs.hpp"
#include "t2v/image.hpp"
#include "t2v/ops.hpp"
#include "t2v/perceptual.hpp"
#include "t2v/quality.hpp"
#include "t2v/report.hpp"
#include "t2v/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace t2v::cli {

namespace {

class EvaluationInputError : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const CommonOptions& common) {
  std::vector<std::string> overrides = common.overrides;
  if (!common.out_dir.empty()) overrides.push_back("output.dir=" + json(common.out_dir).dump());
  if (common.seed) {
    for (const char* key : {"train.seed", "folds.seed", "crn.seed"}) {
      overrides.push_back(fmt::format("{}={}", key, *common.seed));
    }
  }
  if (!common.config_path.empty() && !fs::exists(common.config_path)) {
    throw ConfigError("config file " + common.config_path + " does not exist");
  }
  return load_run_config(common.config_path, overrides);
}

DatasetScan scan_or_throw(const RunConfig& cfg) {
  if (cfg.dataset.root.empty()) throw ConfigError("dataset.root is not set");
  return scan_dataset(cfg.dataset.root);
}

void print_issues(const DatasetScan& scan, std::ostream& err) {
  for (const auto& issue : scan.issues) err << "warning: " << issue.message << " (" << issue.path << ")\n";
}

PerceptualNet<float> load_net(const RunConfig& cfg) {
  if (cfg.perceptual.weights_path.empty()) throw ConfigError("perceptual.weights_path is not set");
  if (!fs::exists(cfg.perceptual.weights_path)) {
    throw ConfigError("perceptual weights " + cfg.perceptual.weights_path + " do not exist");
  }
  return load_pretrained(cfg.perceptual.weights_path, cfg.perceptual.sha256);
}

FoldPlan read_plan(const RunConfig& cfg) {
  const fs::path path = fs::path(cfg.output_dir) / "folds.json";
  if (!fs::exists(path)) throw ConfigError("fold plan " + path.string() + " not found; run `prepare` first");
  const json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("fold plan " + path.string() + " is not valid JSON");
  return fold_plan_from_json(doc);
}

std::vector<int> parse_folds(const std::string& spec, const FoldPlan& plan) {
  if (spec == "all") return {};
  int fold = -1;
  try {
    fold = std::stoi(spec);
  } catch (const std::exception&) {
    throw ConfigError("--fold expects an index or 'all', got " + spec);
  }
  if (fold < 0 || fold >= static_cast<int>(plan.folds.size())) {
    throw ConfigError("fold index " + spec + " is outside the plan");
  }
  return {fold};
}

// ---------------------------------------------------------------------------

int cmd_prepare(const CommonOptions& common, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(common);
  const DatasetScan scan = scan_or_throw(cfg);
  print_issues(scan, err);

  // Identities without a single complete pair cannot be trained or tested.
  std::set<int> paired;
  int pairs = 0;
  int dark = 0;
  for (const auto& r : scan.records) {
    if (r.spectrum != Spectrum::visible) continue;
    if (!find_record(scan.records, r.identity_id, r.variation_id, Spectrum::thermal)) continue;
    ++pairs;
    paired.insert(r.identity_id);
    if (is_dark(r, cfg.dataset.dark_threshold)) ++dark;
  }
  const std::vector<int> ids(paired.begin(), paired.end());
  const FoldPlan plan = make_folds(ids, cfg.folds.k, cfg.folds.seed);
  const fs::path out_dir(cfg.output_dir);
  write_file_atomic(out_dir / "folds.json", to_json(plan).dump(2));
  json report;
  report["records"] = scan.records.size();
  report["identities"] = ids.size();
  report["pairs"] = pairs;
  report["dark_visible"] = dark;
  report["folds"] = plan.folds.size();
  report["issues"] = json::array();
  for (const auto& issue : scan.issues) {
    report["issues"].push_back({{"path", issue.path}, {"message", issue.message}});
  }
  write_file_atomic(out_dir / "validation.json", report.dump(2));

  out << fmt::format("records {}\nidentities {}\npairs {}\ndark visible {}\nfolds {}\nwarnings {}\n",
                     scan.records.size(), ids.size(), pairs, dark, plan.folds.size(), scan.issues.size());
  out << "wrote " << (out_dir / "folds.json").string() << "\n";
  return kExitOk;
}

int cmd_train(const CommonOptions& common, const std::string& fold_spec, std::optional<int> epochs,
              std::ostream& out, std::ostream& err) {
  CommonOptions adjusted = common;
  if (epochs) adjusted.overrides.push_back(fmt::format("train.epochs={}", *epochs));
  const RunConfig cfg = resolve_config(adjusted);
  const FoldPlan plan = read_plan(cfg);
  const DatasetScan scan = scan_or_throw(cfg);
  print_issues(scan, err);
  const PerceptualNet<float> net = load_net(cfg);

  CrossValidationOptions options;
  options.exclude_dark = cfg.dataset.exclude_dark;
  options.dark_threshold = cfg.dataset.dark_threshold;
  options.only_folds = parse_folds(fold_spec, plan);

  CrossValidationObserver observer;
  observer.on_fold_start = [&](const FoldEvent& e) {
    out << "fold " << e.fold << (e.resumed ? " already complete, skipping" : " training") << "\n";
  };
  observer.train.on_epoch = [&](int epoch, double loss) {
    out << "epoch " << epoch << " loss " << fmt::format("{:.6f}", loss) << "\n" << std::flush;
  };
  const auto manifests = run_cross_validation(scan.records, plan, cfg.train, net, cfg.output_dir, options, observer);
  for (const auto& m : manifests) {
    out << "fold " << m.fold_index << " manifest "
        << (fold_directory(cfg.output_dir, m.fold_index) / "manifest.json").string() << " ("
        << m.generated.size() << " generated)\n";
  }
  return kExitOk;
}

Image to_network_input(const Image& image, int resolution) {
  Image square = center_crop_square(image);
  Image resized = ops::resize_bilinear(std::move(square), resolution, resolution);
  return resized.channels() == 1 ? replicate_channels(resized) : resized;
}

int cmd_generate(const CommonOptions& common, std::optional<int> fold, const std::string& checkpoint,
                 const std::string& input, const std::string& output, std::ostream& out) {
  const RunConfig cfg = resolve_config(common);
  const int resolution = cfg.train.crn.target_resolution;
  if (!checkpoint.empty() || !input.empty()) {
    if (checkpoint.empty() || input.empty() || output.empty()) {
      throw ConfigError("generate: --checkpoint, --input and --output go together");
    }
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Image result = generate(ckpt, to_network_input(read_png(input), resolution), cfg.train.crn);
    write_png(output, result);
    out << "wrote " << output << "\n";
    return kExitOk;
  }
  if (!fold) throw ConfigError("generate: pass --fold or --checkpoint/--input/--output");
  const FoldPlan plan = read_plan(cfg);
  if (*fold < 0 || *fold >= static_cast<int>(plan.folds.size())) throw ConfigError("fold index outside the plan");
  const fs::path ckpt_path = fold_directory(cfg.output_dir, *fold) / "checkpoint.t2v";
  if (!fs::exists(ckpt_path)) throw ConfigError("no checkpoint for fold " + std::to_string(*fold));
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const CrnModel<float> model = restore_generator(ckpt, cfg.train.crn);
  const DatasetScan scan = scan_or_throw(cfg);
  int written = 0;
  for (const auto& pair : test_pairs(scan.records, plan.folds[static_cast<std::size_t>(*fold)], resolution)) {
    const Image& source = cfg.train.reverse ? pair.visible : pair.thermal;
    write_png(generated_image_path(cfg.output_dir, *fold, pair.identity_id, pair.variation_id), model.forward(source));
    ++written;
  }
  out << "fold " << *fold << ": wrote " << written << " images\n";
  return kExitOk;
}

std::vector<RunManifest> read_manifests(const RunConfig& cfg, const std::string& fold_spec) {
  std::vector<int> folds;
  if (fold_spec == "all") {
    const FoldPlan plan = read_plan(cfg);
    for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) folds.push_back(f);
  } else {
    folds = parse_folds(fold_spec, read_plan(cfg));
  }
  std::vector<RunManifest> manifests;
  for (int f : folds) {
    const fs::path path = fold_directory(cfg.output_dir, f) / "manifest.json";
    if (!fs::exists(path)) throw EvaluationInputError("no generated images for fold " + std::to_string(f));
    manifests.push_back(manifest_from_json(json::parse(read_file(path))));
  }
  return manifests;
}

int cmd_evaluate(const CommonOptions& common, const std::string& fold_spec, bool ground_truth_only,
                 std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(common);
  const int resolution = cfg.train.crn.target_resolution;
  const DatasetScan scan = scan_or_throw(cfg);
  print_issues(scan, err);

  std::vector<ImageQualityRow> rows;
  std::vector<quality::QualityVector> ovis, othm, gvis;
  for (const auto& pair : all_pairs(scan.records, resolution)) {
    const auto* vis = find_record(scan.records, pair.identity_id, pair.variation_id, Spectrum::visible);
    const auto* thm = find_record(scan.records, pair.identity_id, pair.variation_id, Spectrum::thermal);
    rows.push_back({vis->source_path, "O-VIS", quality::compute_quality(pair.visible).metrics});
    ovis.push_back(rows.back().metrics);
    rows.push_back({thm->source_path, "O-THM", quality::compute_quality(pair.thermal).metrics});
    othm.push_back(rows.back().metrics);
  }
  if (!ground_truth_only) {
    for (const auto& m : read_manifests(cfg, fold_spec)) {
      for (const auto& [key, path] : m.generated) {
        if (!fs::exists(path)) throw EvaluationInputError("generated image " + path + " is missing");
        rows.push_back({path, "G-VIS", quality::compute_quality(read_png(path)).metrics});
        gvis.push_back(rows.back().metrics);
      }
    }
  }
  if (ovis.empty()) throw EvaluationInputError("no ground-truth pairs to evaluate");
  if (!ground_truth_only && gvis.empty()) throw EvaluationInputError("no generated images to evaluate");

  AggregateReport report;
  report.sets.push_back(summarize("O-VIS", ovis));
  report.sets.push_back(summarize("O-THM", othm));
  if (!gvis.empty()) report.sets.push_back(summarize("G-VIS", gvis));

  const fs::path out_dir(cfg.output_dir);
  std::string per_image = per_image_csv_header() + "\n";
  for (const auto& r : rows) per_image += per_image_csv_row(r) + "\n";
  write_file_atomic(out_dir / "quality_per_image.csv", per_image);
  write_file_atomic(out_dir / "quality_summary.csv", aggregate_csv(report));
  const std::string table = format_table(report);
  write_file_atomic(out_dir / "quality_table.txt", table);
  out << table;
  return kExitOk;
}

int cmd_triptych(const CommonOptions& common, int identity, int variation, std::optional<int> fold,
                 const std::string& output, std::ostream& out) {
  const RunConfig cfg = resolve_config(common);
  const int resolution = cfg.train.crn.target_resolution;
  const DatasetScan scan = scan_or_throw(cfg);
  const auto* thm = find_record(scan.records, identity, variation, Spectrum::thermal);
  const auto* vis = find_record(scan.records, identity, variation, Spectrum::visible);
  if (!thm || !vis) {
    throw EvaluationInputError(fmt::format("ground truth for identity {} variation {} is missing", identity, variation));
  }
  fs::path generated;
  if (fold) {
    generated = generated_image_path(cfg.output_dir, *fold, identity, variation);
  } else {
    for (const auto& m : read_manifests(cfg, "all")) {
      if (auto it = m.generated.find({identity, variation}); it != m.generated.end()) generated = it->second;
    }
  }
  if (generated.empty() || !fs::exists(generated)) {
    throw EvaluationInputError(fmt::format("no generated image for identity {} variation {}", identity, variation));
  }
  const ImagePair pair = preprocess_pair(*thm, *vis, resolution);
  Image gen = read_png(generated);
  if (gen.channels() == 1) gen = replicate_channels(gen);
  if (gen.height() != resolution || gen.width() != resolution) {
    throw EvaluationInputError("generated image " + generated.string() + " has the wrong size");
  }
  Image composite(3, resolution, 3 * resolution);
  const Image* panels[3] = {&pair.thermal, &gen, &pair.visible};
  for (int p = 0; p < 3; ++p)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) composite(c, y, p * resolution + x) = (*panels[p])(c, y, x);
  const fs::path target = output.empty()
                              ? fs::path(cfg.output_dir) / "triptych" / fmt::format("{}_{}_triptych.png", identity, variation)
                              : fs::path(output);
  write_png(target, composite);
  out << "wrote " << target.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermal-to-visible face synthesis: data preparation, training, generation and evaluation", "t2v"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON configuration file");
    sub->add_option("--out", common.out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", common.seed, "seed for folds, initialisation and shuffling");
    sub->add_option("--set", common.overrides, "dotted-key override, e.g. loss.lambda1=0.01");
  };

  auto* prepare = app.add_subcommand("prepare", "validate the corpus and write the fold plan");
  add_common(prepare);

  auto* train = app.add_subcommand("train", "train fold models and generate their test images");
  add_common(train);
  std::string train_fold_spec = "all";
  std::optional<int> epochs;
  train->add_option("--fold", train_fold_spec, "fold index or 'all'");
  train->add_option("--epochs", epochs, "override train.epochs");

  auto* gen = app.add_subcommand("generate", "regenerate a fold's test images or translate one image");
  add_common(gen);
  std::optional<int> gen_fold;
  std::string checkpoint, input, output;
  gen->add_option("--fold", gen_fold, "fold whose checkpoint to use");
  gen->add_option("--checkpoint", checkpoint, "checkpoint archive");
  gen->add_option("--input", input, "source PNG");
  gen->add_option("--output", output, "generated PNG");

  auto* evaluate = app.add_subcommand("evaluate", "quality metrics per image and per set");
  add_common(evaluate);
  std::string eval_fold_spec = "all";
  bool ground_truth_only = false;
  evaluate->add_option("--fold", eval_fold_spec, "fold index or 'all'");
  evaluate->add_flag("--ground-truth-only", ground_truth_only, "only evaluate O-VIS and O-THM");

  auto* trip = app.add_subcommand("triptych", "O-THM | G-VIS | O-VIS composite for one capture");
  add_common(trip);
  int identity = -1;
  int variation = -1;
  std::optional<int> trip_fold;
  std::string trip_output;
  trip->add_option("--identity", identity, "identity id")->required();
  trip->add_option("--variation", variation, "variation id")->required();
  trip->add_option("--fold", trip_fold, "fold that generated the image");
  trip->add_option("--output", trip_output, "composite PNG path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(common, out, err);
    if (train->parsed()) return cmd_train(common, train_fold_spec, epochs, out, err);
    if (gen->parsed()) return cmd_generate(common, gen_fold, checkpoint, input, output, out);
    if (evaluate->parsed()) return cmd_evaluate(common, eval_fold_spec, ground_truth_only, out, err);
    if (trip->parsed()) return cmd_triptych(common, identity, variation, trip_fold, trip_output, out);
  } catch (const TrainingDivergedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitTrainingFailure;
  } catch (const EvaluationInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitEvaluationInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const PairingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace t2v::cli
