#pragma once

// Frozen VGG19 feature extractor used as the perceptual embedding for the
// contextual loss. Only the convolutional trunk is represented; a weights
// file may stop after any layer as long as conv3_2 and conv4_2 are present.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "t2v/digest.hpp"
#include "t2v/errors.hpp"
#include "t2v/ops.hpp"
#include "t2v/params.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

struct VggStage {
  const char* name;  // nullptr for a 2x2 max pool
  int in_channels;
  int out_channels;
};

inline const std::vector<VggStage>& vgg19_stages() {
  static const std::vector<VggStage> stages{
      {"conv1_1", 3, 64},    {"conv1_2", 64, 64},   {nullptr, 0, 0},
      {"conv2_1", 64, 128},  {"conv2_2", 128, 128}, {nullptr, 0, 0},
      {"conv3_1", 128, 256}, {"conv3_2", 256, 256}, {"conv3_3", 256, 256},
      {"conv3_4", 256, 256}, {nullptr, 0, 0},       {"conv4_1", 256, 512},
      {"conv4_2", 512, 512}, {"conv4_3", 512, 512}, {"conv4_4", 512, 512},
      {nullptr, 0, 0},       {"conv5_1", 512, 512}, {"conv5_2", 512, 512},
      {"conv5_3", 512, 512}, {"conv5_4", 512, 512},
  };
  return stages;
}

// Parameter names and shapes of the full trunk, in file order.
inline std::vector<std::pair<std::string, std::vector<int>>> vgg19_parameter_layout() {
  std::vector<std::pair<std::string, std::vector<int>>> layout;
  for (const auto& s : vgg19_stages()) {
    if (s.name == nullptr) continue;
    layout.emplace_back(std::string(s.name) + ".weight",
                        std::vector<int>{s.out_channels, s.in_channels, 3, 3});
    layout.emplace_back(std::string(s.name) + ".bias", std::vector<int>{s.out_channels});
  }
  return layout;
}

inline const std::vector<std::string>& required_perceptual_layers() {
  static const std::vector<std::string> layers{"conv3_2", "conv4_2"};
  return layers;
}

// ImageNet statistics for inputs in [0,1] (torchvision convention).
inline constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImagenetStd{0.229, 0.224, 0.225};

template <typename T>
using FeatureStack = std::map<std::string, Tensor<T>>;

template <typename T>
class PerceptualNet {
 public:
  struct Trace {
    std::vector<Tensor<T>> inputs;  // input of every executed stage
    std::vector<Tensor<T>> outputs;
    std::size_t depth = 0;          // number of executed stages
  };

  // `params` must be a prefix of vgg19_parameter_layout() in order.
  PerceptualNet(std::vector<Parameter<T>> params, std::string source_digest)
      : params_(std::move(params)), source_digest_(std::move(source_digest)) {
    const auto layout = vgg19_parameter_layout();
    if (params_.size() > layout.size() || params_.size() % 2 != 0) {
      throw LoadError("perceptual: parameter list does not match the VGG19 layout");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != layout[i].first || params_[i].shape != layout[i].second) {
        throw LoadError("perceptual: parameter mismatch at " + layout[i].first);
      }
    }
    std::size_t conv = 0;
    for (std::size_t s = 0; s < vgg19_stages().size(); ++s) {
      const auto& stage = vgg19_stages()[s];
      if (stage.name == nullptr) continue;
      if (2 * conv >= params_.size()) break;
      layer_names_.emplace_back(stage.name);
      stage_of_layer_[stage.name] = s;
      ++conv;
    }
    for (const auto& name : required_perceptual_layers()) {
      if (!has_layer(name)) throw LoadError("perceptual: weights stop before " + name);
    }
  }

  const std::vector<std::string>& layer_names() const { return layer_names_; }
  bool has_layer(const std::string& name) const { return stage_of_layer_.contains(name); }
  const std::vector<Parameter<T>>& params() const { return params_; }

  // Digest of the file the weights were loaded from (empty if built in memory).
  const std::string& source_digest() const { return source_digest_; }

  // Digest of the current in-memory weights.
  std::string weight_digest() const {
    Sha256 h;
    for (const auto& p : params_) h.update_values(std::span<const T>(p.value));
    return h.hex_digest();
  }

  template <typename U>
  PerceptualNet<U> cast() const {
    std::vector<Parameter<U>> out;
    for (const auto& p : params_) {
      Parameter<U> q(p.name, p.shape);
      std::transform(p.value.begin(), p.value.end(), q.value.begin(),
                     [](T v) { return static_cast<U>(v); });
      out.push_back(std::move(q));
    }
    return PerceptualNet<U>(std::move(out), source_digest_);
  }

  static Tensor<T> normalize(const Tensor<T>& image) {
    if (image.channels() != 3) throw ContractError("perceptual: expected a 3-channel image");
    Tensor<T> out(3, image.height(), image.width());
    for (int c = 0; c < 3; ++c) {
      const T mean = static_cast<T>(kImagenetMean[c]);
      const T inv = static_cast<T>(1.0 / kImagenetStd[c]);
      const T* src = image.plane(c);
      T* dst = out.plane(c);
      for (std::size_t i = 0; i < image.plane_size(); ++i) {
        if (!(src[i] >= T(0) && src[i] <= T(1))) {
          throw ContractError("perceptual: input values must lie in [0,1]");
        }
        dst[i] = (src[i] - mean) * inv;
      }
    }
    return out;
  }

  // Post-activation feature grids for `layers`. Pass a trace to allow
  // backward() afterwards.
  FeatureStack<T> extract(const Tensor<T>& image, const std::vector<std::string>& layers,
                          Trace* trace = nullptr) const {
    std::size_t depth = 0;
    for (const auto& name : layers) {
      auto it = stage_of_layer_.find(name);
      if (it == stage_of_layer_.end()) throw LookupError("perceptual: unknown layer " + name);
      depth = std::max(depth, it->second + 1);
    }
    FeatureStack<T> out;
    Tensor<T> x = normalize(image);
    if (trace) {
      trace->inputs.clear();
      trace->outputs.clear();
      trace->depth = depth;
    }
    std::size_t conv = 0;
    for (std::size_t s = 0; s < depth; ++s) {
      const auto& stage = vgg19_stages()[s];
      Tensor<T> y;
      if (stage.name == nullptr) {
        y = ops::max_pool2(x);
      } else {
        y = ops::relu(ops::conv2d<T>(x, params_[2 * conv].value, params_[2 * conv + 1].value,
                                     stage.out_channels, 3));
        ++conv;
        if (std::find(layers.begin(), layers.end(), stage.name) != layers.end()) {
          out[stage.name] = y;
        }
      }
      if (trace) {
        trace->inputs.push_back(std::move(x));
        trace->outputs.push_back(y);
      }
      x = std::move(y);
    }
    return out;
  }

  // Gradient with respect to the [0,1] input image, given gradients for some
  // of the traced layers. Weights receive no gradient.
  Tensor<T> backward(const Trace& trace, const FeatureStack<T>& grads) const {
    if (trace.depth == 0) throw ContractError("perceptual: empty trace");
    std::size_t conv = 0;
    for (std::size_t s = 0; s < trace.depth; ++s) {
      if (vgg19_stages()[s].name != nullptr) ++conv;
    }
    const auto& last = trace.outputs[trace.depth - 1];
    Tensor<T> g(last.channels(), last.height(), last.width());
    for (std::size_t s = trace.depth; s-- > 0;) {
      const auto& stage = vgg19_stages()[s];
      if (stage.name == nullptr) {
        g = ops::max_pool2_backward(trace.inputs[s], g);
        continue;
      }
      --conv;
      if (auto it = grads.find(stage.name); it != grads.end()) g += it->second;
      g = ops::relu_backward(trace.outputs[s], std::move(g));
      g = ops::conv2d_backward<T>(trace.inputs[s], g, params_[2 * conv].value, 3, {}, {}, true);
    }
    for (int c = 0; c < 3; ++c) {
      const T inv = static_cast<T>(1.0 / kImagenetStd[c]);
      T* p = g.plane(c);
      for (std::size_t i = 0; i < g.plane_size(); ++i) p[i] *= inv;
    }
    return g;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::string source_digest_;
  std::vector<std::string> layer_names_;
  std::map<std::string, std::size_t> stage_of_layer_;
};

// Weights file: "T2VW", u32 version, u32 count, then per tensor
// u32 name length, name, u32 rank, i32 dims[rank], float32 data (all
// little-endian).
PerceptualNet<float> load_pretrained(const std::filesystem::path& path,
                                     const std::string& expected_sha256 = {});

void save_weights(const std::filesystem::path& path, const std::vector<Parameter<float>>& params);

// Fan-in scaled random trunk through `last_layer`; for tests and smoke runs
// when the published weights are unavailable.
std::vector<Parameter<float>> random_vgg19_parameters(std::uint64_t seed,
                                                      const std::string& last_layer = "conv4_2");

}  // namespace t2v
