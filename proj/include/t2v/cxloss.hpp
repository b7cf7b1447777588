#pragma once

// Contextual similarity between two sets of deep features, and the two-term
// training objective built from it:
//
//   L = lambda1 * sum_{l in source_layers} -log CX(phi_l(g), phi_l(s))
//     + lambda2 * sum_{l in target_layers} -log CX(phi_l(g), phi_l(t))
//
// Rows of every distance/affinity matrix index the generated set, columns
// index the reference set. CX takes, for each reference feature, the best
// affinity any generated feature achieves, and averages over references.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "t2v/errors.hpp"
#include "t2v/ops.hpp"
#include "t2v/perceptual.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

struct LossConfig {
  double lambda1 = 0.01;
  double lambda2 = 0.99;
  std::vector<std::string> source_layers{"conv4_2"};
  std::vector<std::string> target_layers{"conv3_2", "conv4_2"};
  double bandwidth = 0.5;
  double epsilon = 1e-5;
  int feature_cap = 1024;
  std::uint64_t subsample_seed = 0;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline void validate(const LossConfig& cfg) {
  if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0) || !(cfg.lambda1 + cfg.lambda2 > 0.0)) {
    throw ConfigError("loss: weights must be non-negative with a positive sum");
  }
  if (!(cfg.bandwidth > 0.0)) throw ConfigError("loss: bandwidth must be positive");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("loss: epsilon must be positive");
  if (cfg.feature_cap < 1) throw ConfigError("loss: feature cap must be at least 1");
}

// N feature vectors of dimension C, one per row.
template <typename T>
using FeatureSet = ops::RowMatrix<T>;

// Grid positions (y * W + x) selected from a C x H x W feature grid.
inline std::vector<int> sample_positions(int height, int width, int cap, std::uint64_t seed) {
  const int n = height * width;
  std::vector<int> positions(static_cast<std::size_t>(n));
  std::iota(positions.begin(), positions.end(), 0);
  if (n <= cap) return positions;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < cap; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(positions[static_cast<std::size_t>(i)],
              positions[static_cast<std::size_t>(pick(rng))]);
  }
  positions.resize(static_cast<std::size_t>(cap));
  std::sort(positions.begin(), positions.end());
  return positions;
}

template <typename T>
FeatureSet<T> gather_features(const Tensor<T>& grid, const std::vector<int>& positions) {
  FeatureSet<T> out(static_cast<Eigen::Index>(positions.size()), grid.channels());
  for (int c = 0; c < grid.channels(); ++c) {
    const T* plane = grid.plane(c);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      out(static_cast<Eigen::Index>(i), c) = plane[positions[i]];
    }
  }
  return out;
}

template <typename T>
void scatter_add_features(const FeatureSet<T>& rows, const std::vector<int>& positions,
                          Tensor<T>& grid) {
  for (int c = 0; c < grid.channels(); ++c) {
    T* plane = grid.plane(c);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      plane[positions[i]] += rows(static_cast<Eigen::Index>(i), c);
    }
  }
}

template <typename T>
FeatureSet<T> flatten_and_subsample(const FeatureStack<T>& stack, const std::string& layer,
                                    int cap, std::uint64_t seed) {
  auto it = stack.find(layer);
  if (it == stack.end()) throw LookupError("cx: layer " + layer + " missing from feature stack");
  const auto positions = sample_positions(it->second.height(), it->second.width(), cap, seed);
  return gather_features(it->second, positions);
}

namespace detail {

inline constexpr double kNormFloorSquared = 1e-12;

// Row-wise L2 normalisation with a floored denominator.
template <typename T>
FeatureSet<T> normalize_rows(const FeatureSet<T>& x, Eigen::Matrix<T, Eigen::Dynamic, 1>* norms) {
  FeatureSet<T> out(x.rows(), x.cols());
  if (norms) norms->resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T n = std::sqrt(std::max(x.row(i).squaredNorm(), static_cast<T>(kNormFloorSquared)));
    out.row(i) = x.row(i) / n;
    if (norms) (*norms)(i) = n;
  }
  return out;
}

}  // namespace detail

// Cosine distances after centring both sets on the mean of the reference set.
template <typename T>
ops::RowMatrix<T> distance_matrix(const FeatureSet<T>& x, const FeatureSet<T>& y) {
  if (x.cols() != y.cols()) throw ContractError("cx: feature dimensions differ");
  if (y.rows() == 0 || x.rows() == 0) throw ContractError("cx: empty feature set");
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mu = y.colwise().mean();
  const FeatureSet<T> xn = detail::normalize_rows<T>(x.rowwise() - mu, nullptr);
  const FeatureSet<T> yn = detail::normalize_rows<T>(y.rowwise() - mu, nullptr);
  const ops::RowMatrix<T> d = ((-(xn * yn.transpose())).array() + T(1)).matrix();
  return d.cwiseMax(T(0)).cwiseMin(T(2));
}

template <typename T>
struct ContextualDetail {
  T similarity = T(0);
  ops::RowMatrix<T> affinity;              // row-normalised A
  std::vector<Eigen::Index> row_argmin;    // nearest reference per generated feature
  std::vector<Eigen::Index> column_argmax; // best generated feature per reference
};

template <typename T>
ContextualDetail<T> contextual_detail(const ops::RowMatrix<T>& d, double bandwidth,
                                      double epsilon) {
  const Eigen::Index n = d.rows();
  const Eigen::Index m = d.cols();
  if (n == 0 || m == 0) throw ContractError("cx: empty distance matrix");
  ContextualDetail<T> out;
  out.affinity.resize(n, m);
  out.row_argmin.resize(static_cast<std::size_t>(n));
  const T h = static_cast<T>(bandwidth);
  const T eps = static_cast<T>(epsilon);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index kmin = 0;
    const T dmin = d.row(i).minCoeff(&kmin);
    out.row_argmin[static_cast<std::size_t>(i)] = kmin;
    const T scale = T(1) / (dmin + eps);
    // Largest exponent belongs to the row minimum; shift by it for stability.
    const T top = (T(1) - dmin * scale) / h;
    T sum = T(0);
    for (Eigen::Index j = 0; j < m; ++j) {
      const T w = std::exp((T(1) - d(i, j) * scale) / h - top);
      out.affinity(i, j) = w;
      sum += w;
    }
    out.affinity.row(i) /= sum;
  }
  out.column_argmax.resize(static_cast<std::size_t>(m));
  T total = T(0);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index imax = 0;
    total += out.affinity.col(j).maxCoeff(&imax);
    out.column_argmax[static_cast<std::size_t>(j)] = imax;
  }
  out.similarity = total / static_cast<T>(m);
  return out;
}

template <typename T>
T contextual_similarity(const ops::RowMatrix<T>& d, double bandwidth, double epsilon) {
  return contextual_detail(d, bandwidth, epsilon).similarity;
}

template <typename T>
T cx_loss(const FeatureSet<T>& generated, const FeatureSet<T>& reference, double bandwidth,
          double epsilon) {
  return -std::log(contextual_similarity(distance_matrix(generated, reference), bandwidth, epsilon));
}

template <typename T>
T cx_loss(const FeatureSet<T>& generated, const FeatureSet<T>& reference, const LossConfig& cfg) {
  return cx_loss(generated, reference, cfg.bandwidth, cfg.epsilon);
}

template <typename T>
struct CxGradient {
  T loss = T(0);
  FeatureSet<T> grad;  // d loss / d generated
};

// Loss and its gradient with respect to the generated features. The argmin
// and argmax selections are treated as fixed (their gradients are zero almost
// everywhere).
template <typename T>
CxGradient<T> cx_loss_with_grad(const FeatureSet<T>& generated, const FeatureSet<T>& reference,
                                double bandwidth, double epsilon) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  if (generated.cols() != reference.cols()) throw ContractError("cx: feature dimensions differ");
  if (generated.rows() == 0 || reference.rows() == 0) throw ContractError("cx: empty feature set");
  const Eigen::Index n = generated.rows();
  const Eigen::Index m = reference.rows();
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mu = reference.colwise().mean();
  Vec norms;
  const FeatureSet<T> xn = detail::normalize_rows<T>(generated.rowwise() - mu, &norms);
  const FeatureSet<T> yn = detail::normalize_rows<T>(reference.rowwise() - mu, nullptr);
  const ops::RowMatrix<T> d =
      ((-(xn * yn.transpose())).array() + T(1)).matrix().cwiseMax(T(0)).cwiseMin(T(2));
  const auto cx = contextual_detail(d, bandwidth, epsilon);

  CxGradient<T> out;
  out.loss = -std::log(cx.similarity);

  // d loss / d A: only the selected column maxima contribute.
  ops::RowMatrix<T> ga = ops::RowMatrix<T>::Zero(n, m);
  const T g_sel = T(-1) / (cx.similarity * static_cast<T>(m));
  for (Eigen::Index j = 0; j < m; ++j) ga(cx.column_argmax[static_cast<std::size_t>(j)], j) = g_sel;

  const T h = static_cast<T>(bandwidth);
  const T eps = static_cast<T>(epsilon);
  ops::RowMatrix<T> gd(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    // softmax backward, then through z = (1 - d~)/h and d~ = d / (min + eps)
    const T dot = cx.affinity.row(i).dot(ga.row(i));
    const T denom = d.row(i).minCoeff() + eps;
    T min_acc = T(0);
    for (Eigen::Index j = 0; j < m; ++j) {
      const T gz = cx.affinity(i, j) * (ga(i, j) - dot);
      const T g_rel = -gz / h;
      gd(i, j) = g_rel / denom;
      min_acc += g_rel * d(i, j) / (denom * denom);
    }
    gd(i, cx.row_argmin[static_cast<std::size_t>(i)]) -= min_acc;
  }

  // d = 1 - xn . yn
  const FeatureSet<T> gxn = -(gd * yn);
  out.grad.resize(n, generated.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const T proj = xn.row(i).dot(gxn.row(i));
    out.grad.row(i) = (gxn.row(i) - proj * xn.row(i)) / norms(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-term objective over perceptual features.

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> source_terms;  // unweighted -log CX per layer
  std::map<std::string, double> target_terms;
};

namespace detail {

inline std::vector<std::string> union_layers(const LossConfig& cfg) {
  std::vector<std::string> layers = cfg.source_layers;
  for (const auto& l : cfg.target_layers) {
    if (std::find(layers.begin(), layers.end(), l) == layers.end()) layers.push_back(l);
  }
  return layers;
}

}  // namespace detail

// Reference features of the source and target images, reusable across
// repeated loss evaluations for the same pair.
template <typename T>
struct ReferenceFeatures {
  FeatureStack<T> source;
  FeatureStack<T> target;
};

template <typename T>
ReferenceFeatures<T> reference_features(const Tensor<T>& source, const Tensor<T>& target,
                                        const PerceptualNet<T>& net, const LossConfig& cfg) {
  ReferenceFeatures<T> refs;
  if (cfg.lambda1 > 0.0 && !cfg.source_layers.empty()) {
    refs.source = net.extract(source, cfg.source_layers);
  }
  if (cfg.lambda2 > 0.0 && !cfg.target_layers.empty()) {
    refs.target = net.extract(target, cfg.target_layers);
  }
  return refs;
}

// Evaluates the objective; when `grad_generated` is non-null it receives
// d total / d generated image. The -log CX terms are computed in double.
template <typename T>
LossBreakdown total_loss(const ReferenceFeatures<T>& refs, const Tensor<T>& generated,
                         const PerceptualNet<T>& net, const LossConfig& cfg,
                         Tensor<T>* grad_generated = nullptr) {
  validate(cfg);
  const std::vector<std::string> layers = detail::union_layers(cfg);
  typename PerceptualNet<T>::Trace trace;
  const FeatureStack<T> gen = net.extract(generated, layers, grad_generated ? &trace : nullptr);
  FeatureStack<T> feature_grads;
  LossBreakdown out;

  auto add_terms = [&](const std::vector<std::string>& term_layers, const FeatureStack<T>& ref,
                       double weight, std::map<std::string, double>& terms) {
    if (weight == 0.0) {
      // Exact zero contribution; still report the term for diagnostics.
      for (const auto& l : term_layers) {
        if (ref.contains(l)) {
          const auto pos = sample_positions(gen.at(l).height(), gen.at(l).width(),
                                            cfg.feature_cap, cfg.subsample_seed);
          terms[l] = cx_loss<double>(gather_features(gen.at(l), pos).template cast<double>(),
                                     gather_features(ref.at(l), pos).template cast<double>(), cfg);
        }
      }
      return;
    }
    for (const auto& l : term_layers) {
      const Tensor<T>& g = gen.at(l);
      const Tensor<T>& r = ref.at(l);
      const auto pos_g = sample_positions(g.height(), g.width(), cfg.feature_cap, cfg.subsample_seed);
      const auto pos_r = sample_positions(r.height(), r.width(), cfg.feature_cap, cfg.subsample_seed);
      const FeatureSet<double> x = gather_features(g, pos_g).template cast<double>();
      const FeatureSet<double> y = gather_features(r, pos_r).template cast<double>();
      if (grad_generated) {
        const auto cg = cx_loss_with_grad<double>(x, y, cfg.bandwidth, cfg.epsilon);
        terms[l] = cg.loss;
        out.total += weight * cg.loss;
        auto [it, inserted] = feature_grads.try_emplace(l, g.channels(), g.height(), g.width());
        const FeatureSet<T> scaled = (cg.grad * weight).template cast<T>();
        scatter_add_features(scaled, pos_g, it->second);
      } else {
        const double loss = cx_loss<double>(x, y, cfg);
        terms[l] = loss;
        out.total += weight * loss;
      }
    }
  };

  add_terms(cfg.source_layers, refs.source, cfg.lambda1, out.source_terms);
  add_terms(cfg.target_layers, refs.target, cfg.lambda2, out.target_terms);

  if (grad_generated) {
    if (feature_grads.empty()) {
      *grad_generated = Tensor<T>(generated.channels(), generated.height(), generated.width());
    } else {
      *grad_generated = net.backward(trace, feature_grads);
    }
  }
  return out;
}

template <typename T>
LossBreakdown total_loss(const Tensor<T>& source, const Tensor<T>& target,
                         const Tensor<T>& generated, const PerceptualNet<T>& net,
                         const LossConfig& cfg, Tensor<T>* grad_generated = nullptr) {
  for (const Tensor<T>* img : {&source, &target, &generated}) {
    if (img->channels() != 3 || !img->same_shape(generated)) {
      throw ContractError("loss: source, target and generated images must share a 3-channel shape");
    }
  }
  return total_loss(reference_features(source, target, net, cfg), generated, net, cfg,
                    grad_generated);
}

}  // namespace t2v
