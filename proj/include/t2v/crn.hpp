#pragma once

// Cascaded refinement generator. A ladder of refinement modules runs from a
// coarse base resolution up to the target resolution, doubling each time.
// Module i sees the source image resampled to its resolution, concatenated
// with the upsampled output of module i-1, and applies three
// conv3x3 -> layer norm -> leaky ReLU layers. A 1x1 projection and a logistic
// squashing map the last module's features to a bounded RGB image.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "t2v/errors.hpp"
#include "t2v/ops.hpp"
#include "t2v/params.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

struct CrnConfig {
  int base_resolution = 4;
  int target_resolution = 128;
  std::vector<int> channel_schedule{512, 512, 512, 256, 128, 64};
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  friend bool operator==(const CrnConfig&, const CrnConfig&) = default;
};

inline int crn_module_count(const CrnConfig& cfg) {
  if (cfg.base_resolution <= 0 || cfg.target_resolution < cfg.base_resolution ||
      cfg.target_resolution % cfg.base_resolution != 0) {
    throw ConfigError("crn: target resolution must be a power-of-two multiple of the base");
  }
  const int ratio = cfg.target_resolution / cfg.base_resolution;
  if ((ratio & (ratio - 1)) != 0) {
    throw ConfigError("crn: target/base ratio " + std::to_string(ratio) + " is not a power of two");
  }
  int levels = 1;
  for (int r = ratio; r > 1; r /= 2) ++levels;
  return levels;
}

inline void validate(const CrnConfig& cfg) {
  const int modules = crn_module_count(cfg);
  if (static_cast<int>(cfg.channel_schedule.size()) != modules) {
    throw ConfigError("crn: channel schedule has " + std::to_string(cfg.channel_schedule.size()) +
                      " entries, expected " + std::to_string(modules));
  }
  for (int c : cfg.channel_schedule) {
    if (c <= 0) throw ConfigError("crn: channel counts must be positive");
  }
  if (!(cfg.leaky_slope >= 0.0 && cfg.leaky_slope < 1.0)) {
    throw ConfigError("crn: leaky slope must lie in [0, 1)");
  }
}

inline constexpr int kImageChannels = 3;
inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename T>
class CrnModel {
 public:
  // One conv -> norm -> activation layer; indices point into params().
  struct Layer {
    int in_channels;
    int out_channels;
    std::size_t weight;
    std::size_t gain;
    std::size_t offset;
  };

  struct RefinementModule {
    int resolution;
    int channels;
    Layer layers[3];  // input, intermediate, output
  };

  // Activations kept by a training forward pass.
  struct LayerTrace {
    Tensor<T> input;
    Tensor<T> conv;
    Tensor<T> norm;
  };
  struct ModuleTrace {
    LayerTrace layers[3];
  };
  struct Trace {
    std::vector<ModuleTrace> modules;
    Tensor<T> last_features;
    Tensor<T> output;
  };

  // With randomize = false parameters keep their neutral values (zero
  // weights, unit gains), e.g. before being overwritten from a checkpoint.
  explicit CrnModel(CrnConfig cfg, bool randomize = true) : cfg_(std::move(cfg)) {
    validate(cfg_);
    const int count = crn_module_count(cfg_);
    int resolution = cfg_.base_resolution;
    int prev_channels = 0;
    for (int i = 0; i < count; ++i) {
      RefinementModule m{};
      m.resolution = resolution;
      m.channels = cfg_.channel_schedule[static_cast<std::size_t>(i)];
      const std::string prefix = "module" + std::to_string(i) + ".";
      const char* names[3] = {"input", "intermediate", "output"};
      int in_channels = kImageChannels + prev_channels;
      for (int l = 0; l < 3; ++l) {
        m.layers[l] = add_layer(prefix + names[l], in_channels, m.channels);
        in_channels = m.channels;
      }
      modules_.push_back(m);
      prev_channels = m.channels;
      resolution *= 2;
    }
    projection_weight_ = params_.size();
    params_.emplace_back("projection.weight", std::vector<int>{kImageChannels, prev_channels, 1, 1});
    projection_bias_ = params_.size();
    params_.emplace_back("projection.bias", std::vector<int>{kImageChannels});
    if (randomize) initialize();
  }

  const CrnConfig& config() const { return cfg_; }
  const std::vector<RefinementModule>& modules() const { return modules_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  std::size_t count_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Source resampled to every module resolution, coarse to fine.
  std::vector<Tensor<T>> source_pyramid(const Tensor<T>& source) const {
    check_source(source);
    std::vector<Tensor<T>> levels(modules_.size());
    Tensor<T> current = source;
    for (std::size_t i = modules_.size(); i-- > 0;) {
      const int r = modules_[i].resolution;
      current = ops::resize_bilinear(std::move(current), r, r);
      levels[i] = current;
    }
    return levels;
  }

  // Runs module `index` on the already-resampled source and the previous
  // module's output (absent for the first module).
  Tensor<T> refine_step(std::size_t index, const std::optional<Tensor<T>>& previous,
                        const Tensor<T>& scaled_source, ModuleTrace* trace = nullptr) const {
    const auto& m = modules_.at(index);
    if (previous.has_value() != (index > 0)) {
      throw ContractError("refine_step: previous features required iff module is not the first");
    }
    if (scaled_source.channels() != kImageChannels || scaled_source.height() != m.resolution ||
        scaled_source.width() != m.resolution) {
      throw ContractError("refine_step: source not at module resolution");
    }
    Tensor<T> x = scaled_source;
    if (previous) {
      const auto& prev = modules_[index - 1];
      if (previous->height() * 2 != m.resolution || previous->width() * 2 != m.resolution ||
          previous->channels() != prev.channels) {
        throw ContractError("refine_step: previous features do not match the preceding module");
      }
      x = ops::concat_channels(x, ops::resize_bilinear_step(*previous, m.resolution, m.resolution));
    }
    for (int l = 0; l < 3; ++l) {
      const Layer& layer = m.layers[l];
      Tensor<T> conv = ops::conv2d<T>(x, params_[layer.weight].value, {}, layer.out_channels, 3);
      Tensor<T> norm = ops::layer_norm<T>(conv, params_[layer.gain].value,
                                          params_[layer.offset].value, T(kLayerNormEpsilon));
      Tensor<T> act = ops::leaky_relu(norm, slope());
      if (trace) trace->layers[l] = {std::move(x), std::move(conv), std::move(norm)};
      x = std::move(act);
    }
    return x;
  }

  Tensor<T> forward(const Tensor<T>& source, Trace* trace = nullptr) const {
    const auto pyramid = source_pyramid(source);
    if (trace) trace->modules.assign(modules_.size(), ModuleTrace{});
    std::optional<Tensor<T>> features;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      features = refine_step(i, features, pyramid[i], trace ? &trace->modules[i] : nullptr);
    }
    Tensor<T> projected = ops::conv2d<T>(*features, params_[projection_weight_].value,
                                         params_[projection_bias_].value, kImageChannels, 1);
    Tensor<T> out = ops::sigmoid(std::move(projected));
    if (trace) {
      trace->last_features = std::move(*features);
      trace->output = out;
    }
    return out;
  }

  // Accumulates parameter gradients for dLoss/dOutput = grad_output.
  void backward(const Trace& trace, const Tensor<T>& grad_output) {
    Tensor<T> g = ops::sigmoid_backward(trace.output, grad_output);
    g = ops::conv2d_backward<T>(trace.last_features, g, params_[projection_weight_].value, 1,
                                params_[projection_weight_].grad,
                                params_[projection_bias_].grad, true);
    for (std::size_t i = modules_.size(); i-- > 0;) {
      const auto& m = modules_[i];
      const auto& mt = trace.modules[i];
      for (int l = 2; l >= 0; --l) {
        const Layer& layer = m.layers[l];
        const LayerTrace& lt = mt.layers[l];
        g = ops::leaky_relu_backward(lt.norm, std::move(g), slope());
        g = ops::layer_norm_backward<T>(lt.conv, g, params_[layer.gain].value, T(kLayerNormEpsilon),
                                        params_[layer.gain].grad, params_[layer.offset].grad);
        const bool need_input = l > 0 || i > 0;
        g = ops::conv2d_backward<T>(lt.input, g, params_[layer.weight].value, 3,
                                    params_[layer.weight].grad, {}, need_input);
      }
      if (i == 0) break;
      const auto& prev = modules_[i - 1];
      g = ops::resize_bilinear_step_backward(ops::tail_channels(g, prev.channels),
                                             prev.resolution, prev.resolution);
    }
  }

 private:
  Layer add_layer(const std::string& prefix, int in_channels, int out_channels) {
    Layer layer{in_channels, out_channels, 0, 0, 0};
    layer.weight = params_.size();
    params_.emplace_back(prefix + ".weight", std::vector<int>{out_channels, in_channels, 3, 3});
    layer.gain = params_.size();
    params_.emplace_back(prefix + ".gain", std::vector<int>{out_channels}, T(1));
    layer.offset = params_.size();
    params_.emplace_back(prefix + ".offset", std::vector<int>{out_channels});
    return layer;
  }

  // Fan-in scaled normal weights; unit gains, zero offsets and bias.
  void initialize() {
    std::mt19937_64 rng(cfg_.seed);
    for (auto& p : params_) {
      if (p.shape.size() != 4) continue;
      const int fan_in = p.shape[1] * p.shape[2] * p.shape[3];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (T& v : p.value) v = static_cast<T>(dist(rng));
    }
  }

  void check_source(const Tensor<T>& source) const {
    const int r = cfg_.target_resolution;
    if (source.channels() != kImageChannels || source.height() != r || source.width() != r) {
      throw ContractError("crn: source must be 3x" + std::to_string(r) + "x" + std::to_string(r));
    }
  }

  T slope() const { return static_cast<T>(cfg_.leaky_slope); }

  CrnConfig cfg_;
  std::vector<RefinementModule> modules_;
  std::vector<Parameter<T>> params_;
  std::size_t projection_weight_ = 0;
  std::size_t projection_bias_ = 0;
};

template <typename T>
CrnModel<T> build_crn(const CrnConfig& cfg) {
  return CrnModel<T>(cfg);
}

}  // namespace t2v
