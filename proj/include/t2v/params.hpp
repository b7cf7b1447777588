#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace t2v {

// A named trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s, T fill = T(0)) : name(std::move(n)), shape(std::move(s)) {
    const auto count = static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>()));
    value.assign(count, fill);
    grad.assign(count, T(0));
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Adaptive moment estimation. Moments are kept per parameter in the same
// order as the parameter list handed to step().
struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  void step(std::vector<Parameter<T>>& params) {
    if (first_.size() != params.size()) {
      first_.clear();
      second_.clear();
      for (const auto& p : params) {
        first_.emplace_back(p.size(), T(0));
        second_.emplace_back(p.size(), T(0));
      }
    }
    ++steps_;
    const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const T lr = static_cast<T>(options_.learning_rate * std::sqrt(bias2) / bias1);
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T eps = static_cast<T>(options_.epsilon * std::sqrt(bias2));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& param = params[p];
      auto& m = first_[p];
      auto& v = second_[p];
      for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = param.grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        param.value[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<std::vector<T>>& first_moments() const { return first_; }
  const std::vector<std::vector<T>>& second_moments() const { return second_; }

  void restore(std::uint64_t steps, std::vector<std::vector<T>> first,
               std::vector<std::vector<T>> second) {
    steps_ = steps;
    first_ = std::move(first);
    second_ = std::move(second);
  }

 private:
  AdamOptions options_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
};

}  // namespace t2v
