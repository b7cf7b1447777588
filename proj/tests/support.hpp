#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "t2v/dataset.hpp"
#include "t2v/image.hpp"
#include "t2v/perceptual.hpp"
#include "t2v/tensor.hpp"

namespace t2v::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t2v") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("{}_{}_{}", tag, ::getpid(), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

// Same weights as formula_weights() in tests/oracles/make_oracles.py.
inline std::vector<Parameter<float>> formula_vgg_parameters(const std::string& last = "conv4_2") {
  std::vector<Parameter<float>> params;
  int t = 0;
  for (const auto& [name, shape] : vgg19_parameter_layout()) {
    Parameter<float> p(name, shape);
    if (shape.size() == 4) {
      const double fan_in = shape[1] * 9.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double v = std::sqrt(2.0 / fan_in) * std::sqrt(2.0) *
                         std::sin(0.61 * static_cast<double>(i) + 1.3 * t + 0.2);
        p.value[i] = static_cast<float>(v);
      }
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) {
        p.value[j] = static_cast<float>(0.01 * std::cos(0.37 * static_cast<double>(j) + t));
      }
    }
    ++t;
    params.push_back(std::move(p));
    if (name == last + ".bias") break;
  }
  return params;
}

// Same images as probe() in tests/oracles/make_oracles.py.
inline Image probe_image(char kind, int size = 128) {
  Image img(3, size, size);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.0;
        switch (kind) {
          case 's': v = 0.5 + 0.4 * std::sin(0.11 * x + 0.07 * y + 0.9 * c); break;
          case 't':
            v = 0.5 + 0.4 * std::sin(0.05 * x - 0.13 * y + 0.5 * c + 0.3) * std::cos(0.02 * (x + y));
            break;
          case 'g': v = 0.5 + 0.35 * std::cos(0.09 * x + 0.04 * y * y / 128.0 + 1.1 * c); break;
          default: {
            const std::uint64_t i = static_cast<std::uint64_t>(c) * 16384 + static_cast<std::uint64_t>(y) * 128 +
                                    static_cast<std::uint64_t>(x);
            const std::uint64_t h = (i * 2654435761ULL + 12345ULL) % 4294967296ULL;
            v = 0.1 + 0.8 * static_cast<double>(h) / 4294967296.0;
          }
        }
        img(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return img;
}

inline Image random_image(int channels, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(channels, h, w);
  for (float& v : img.values()) v = u(rng);
  return img;
}

inline Image constant_image(int channels, int h, int w, float value) { return Image(channels, h, w, value); }

struct CorpusSpec {
  int identities = 4;
  int variations = 3;
  int dark_variation = 0;  // variation index rendered dark (0: none)
  int visible_size = 32;
  int thermal_width = 40;  // thermal sensor aspect 4:3
  int thermal_height = 30;
};

// Writes <root>/<id>_<var>_{vis,thm}.png with per-identity content, so
// different identities are distinguishable.
inline void write_corpus(const std::filesystem::path& root, const CorpusSpec& spec) {
  std::filesystem::create_directories(root);
  for (int id = 1; id <= spec.identities; ++id) {
    for (int var = 1; var <= spec.variations; ++var) {
      Image vis(3, spec.visible_size, spec.visible_size);
      const bool dark = var == spec.dark_variation;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < vis.height(); ++y)
          for (int x = 0; x < vis.width(); ++x) {
            const double v = 0.5 + 0.3 * std::sin(0.3 * x * (1 + id % 5) + 0.2 * y + c + var);
            vis(c, y, x) = dark ? 0.01f : static_cast<float>(v);
          }
      Image thm(1, spec.thermal_height, spec.thermal_width);
      for (int y = 0; y < thm.height(); ++y)
        for (int x = 0; x < thm.width(); ++x)
          thm(0, y, x) = static_cast<float>(0.4 + 0.3 * std::cos(0.25 * y * (1 + id % 3) + 0.1 * x + var));
      write_png(root / fmt::format("{}_{}_vis.png", id, var), vis);
      write_png(root / fmt::format("{}_{}_thm.png", id, var), thm);
    }
  }
}

}  // namespace t2v::testing
