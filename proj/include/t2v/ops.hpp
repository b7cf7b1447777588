#pragma once

// Differentiable building blocks shared by the generator and the perceptual
// network. Every layer is a pair of free functions: a forward pass and a
// backward pass that recomputes what it needs from the forward input, so
// callers only keep layer inputs alive between the two passes.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "t2v/tensor.hpp"

namespace t2v::ops {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// ---------------------------------------------------------------------------
// Convolution (stride 1, "same" zero padding, odd square kernels).
// Weights are laid out (out, in, k, k), the usual framework convention.

template <typename T>
RowMatrix<T> im2col(const Tensor<T>& x, int k) {
  const int pad = k / 2;
  const int h = x.height();
  const int w = x.width();
  RowMatrix<T> cols(static_cast<Eigen::Index>(x.channels()) * k * k,
                    static_cast<Eigen::Index>(h) * w);
  cols.setZero();
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * h * w;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h || x_lo >= x_hi) continue;
          std::copy(src + sy * w + x_lo + dx, src + sy * w + x_hi + dx, row + y * w + x_lo);
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im_add(const RowMatrix<T>& cols, int k, Tensor<T>& gx) {
  const int pad = k / 2;
  const int h = gx.height();
  const int w = gx.width();
  for (int c = 0; c < gx.channels(); ++c) {
    T* dst = gx.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * h * w;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = x_lo; x < x_hi; ++x) dst[sy * w + x + dx] += row[y * w + x];
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                 int out_channels, int k) {
  const auto in_span = static_cast<std::size_t>(x.channels()) * k * k;
  if (weight.size() != in_span * out_channels) {
    throw ContractError("conv2d: weight size does not match input channels");
  }
  Tensor<T> y(out_channels, x.height(), x.width());
  MatrixMap<T> ym(y.data(), out_channels, static_cast<Eigen::Index>(y.plane_size()));
  ConstMatrixMap<T> wm(weight.data(), out_channels, static_cast<Eigen::Index>(in_span));
  if (k == 1) {
    ConstMatrixMap<T> xm(x.data(), x.channels(), static_cast<Eigen::Index>(x.plane_size()));
    ym.noalias() = wm * xm;
  } else {
    ym.noalias() = wm * im2col(x, k);
  }
  if (!bias.empty()) {
    for (int c = 0; c < out_channels; ++c) ym.row(c).array() += bias[c];
  }
  return y;
}

// Accumulates into grad_weight / grad_bias when they are non-empty; returns
// the input gradient only when want_input_grad is set (frozen networks still
// need it, generator inputs do not).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& gy, std::span<const T> weight,
                          int k, std::span<T> grad_weight, std::span<T> grad_bias,
                          bool want_input_grad) {
  const int out_channels = gy.channels();
  const auto in_span = static_cast<Eigen::Index>(x.channels()) * k * k;
  const auto pixels = static_cast<Eigen::Index>(x.plane_size());
  ConstMatrixMap<T> gym(gy.data(), out_channels, pixels);
  ConstMatrixMap<T> wm(weight.data(), out_channels, in_span);

  if (!grad_bias.empty()) {
    // Plain loop: Eigen's vectorised sum depends on buffer alignment.
    for (int c = 0; c < out_channels; ++c) {
      const T* row = gy.plane(c);
      T s = T(0);
      for (Eigen::Index i = 0; i < pixels; ++i) s += row[i];
      grad_bias[c] += s;
    }
  }

  Tensor<T> gx;
  if (k == 1) {
    ConstMatrixMap<T> xm(x.data(), x.channels(), pixels);
    if (!grad_weight.empty()) {
      MatrixMap<T> gw(grad_weight.data(), out_channels, in_span);
      gw.noalias() += gym * xm.transpose();
    }
    if (want_input_grad) {
      gx = Tensor<T>(x.channels(), x.height(), x.width());
      MatrixMap<T> gxm(gx.data(), x.channels(), pixels);
      gxm.noalias() = wm.transpose() * gym;
    }
    return gx;
  }

  if (!grad_weight.empty()) {
    MatrixMap<T> gw(grad_weight.data(), out_channels, in_span);
    gw.noalias() += gym * im2col(x, k).transpose();
  }
  if (want_input_grad) {
    gx = Tensor<T>(x.channels(), x.height(), x.width());
    RowMatrix<T> gcols = wm.transpose() * gym;
    col2im_add(gcols, k, gx);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities. Backward passes take the forward input.

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (T& v : x.values()) v = v > T(0) ? v : T(0);
  return x;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, Tensor<T> gy) {
  auto xs = x.values();
  auto gs = gy.values();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!(xs[i] > T(0))) gs[i] = T(0);
  }
  return gy;
}

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x, T slope) {
  for (T& v : x.values()) v = v > T(0) ? v : v * slope;
  return x;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, Tensor<T> gy, T slope) {
  auto xs = x.values();
  auto gs = gy.values();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!(xs[i] > T(0))) gs[i] *= slope;
  }
  return gy;
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  for (T& v : x.values()) v = stable_sigmoid(v);
  return x;
}

// Takes the sigmoid *output*.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& out, Tensor<T> gy) {
  auto os = out.values();
  auto gs = gy.values();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= os[i] * (T(1) - os[i]);
  return gy;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  const int oh = x.height() / 2;
  const int ow = x.width() / 2;
  Tensor<T> y(x.channels(), oh, ow);
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < oh; ++yy) {
      for (int xx = 0; xx < ow; ++xx) {
        y(c, yy, xx) = std::max({x(c, 2 * yy, 2 * xx), x(c, 2 * yy, 2 * xx + 1),
                                 x(c, 2 * yy + 1, 2 * xx), x(c, 2 * yy + 1, 2 * xx + 1)});
      }
    }
  }
  return y;
}

// Routes each output gradient to the first maximal input of its window.
template <typename T>
Tensor<T> max_pool2_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  Tensor<T> gx(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < gy.height(); ++yy) {
      for (int xx = 0; xx < gy.width(); ++xx) {
        int by = 2 * yy;
        int bx = 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            if (x(c, 2 * yy + dy, 2 * xx + dx) > x(c, by, bx)) {
              by = 2 * yy + dy;
              bx = 2 * xx + dx;
            }
          }
        }
        gx(c, by, bx) += gy(c, yy, xx);
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Layer normalization over the whole C x H x W sample with a per-channel
// gain and offset.

template <typename T>
struct LayerNormStats {
  T mean = T(0);
  T inv_std = T(0);
};

template <typename T>
LayerNormStats<T> layer_norm_stats(const Tensor<T>& x, T eps) {
  const auto n = static_cast<T>(x.size());
  T mean = T(0);
  for (T v : x.values()) mean += v;
  mean /= n;
  T var = T(0);
  for (T v : x.values()) var += (v - mean) * (v - mean);
  var /= n;
  return {mean, T(1) / std::sqrt(var + eps)};
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, std::span<const T> gain, std::span<const T> offset,
                     T eps) {
  const auto stats = layer_norm_stats(x, eps);
  Tensor<T> y(x.channels(), x.height(), x.width());
  const auto plane = x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.plane(c);
    T* dst = y.plane(c);
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = gain[c] * (src[i] - stats.mean) * stats.inv_std + offset[c];
    }
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gy, std::span<const T> gain,
                              T eps, std::span<T> grad_gain, std::span<T> grad_offset) {
  const auto stats = layer_norm_stats(x, eps);
  const auto plane = x.plane_size();
  const auto n = static_cast<T>(x.size());
  // g_hat = dL/d(normalized); need its mean and its correlation with x_hat.
  T sum_g = T(0);
  T sum_gx = T(0);
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.plane(c);
    const T* g = gy.plane(c);
    T gain_sum = T(0);
    T offset_sum = T(0);
    for (std::size_t i = 0; i < plane; ++i) {
      const T xhat = (src[i] - stats.mean) * stats.inv_std;
      gain_sum += g[i] * xhat;
      offset_sum += g[i];
    }
    if (!grad_gain.empty()) grad_gain[c] += gain_sum;
    if (!grad_offset.empty()) grad_offset[c] += offset_sum;
    sum_g += gain[c] * offset_sum;
    sum_gx += gain[c] * gain_sum;
  }
  const T mean_g = sum_g / n;
  const T mean_gx = sum_gx / n;
  Tensor<T> gx(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.plane(c);
    const T* g = gy.plane(c);
    T* dst = gx.plane(c);
    for (std::size_t i = 0; i < plane; ++i) {
      const T xhat = (src[i] - stats.mean) * stats.inv_std;
      dst[i] = stats.inv_std * (gain[c] * g[i] - mean_g - xhat * mean_gx);
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Bilinear resampling with half-pixel centres and edge clamping.

namespace detail {

struct Tap {
  int lo;
  int hi;
  double frac;
};

inline std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace detail

// Single bilinear pass; differentiable via resize_bilinear_step_backward.
template <typename T>
Tensor<T> resize_bilinear_step(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || x.height() <= 0 || x.width() <= 0) {
    throw ContractError("resize: empty source or target");
  }
  if (out_h == x.height() && out_w == x.width()) return x;
  const auto ty = detail::bilinear_taps(x.height(), out_h);
  const auto tx = detail::bilinear_taps(x.width(), out_w);
  Tensor<T> y(x.channels(), out_h, out_w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = x(c, a.lo, b.lo) + fx * (x(c, a.lo, b.hi) - x(c, a.lo, b.lo));
        const T bottom = x(c, a.hi, b.lo) + fx * (x(c, a.hi, b.hi) - x(c, a.hi, b.lo));
        y(c, oy, ox) = top + fy * (bottom - top);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> resize_bilinear_step_backward(const Tensor<T>& gy, int in_h, int in_w) {
  if (gy.height() == in_h && gy.width() == in_w) return gy;
  const auto ty = detail::bilinear_taps(in_h, gy.height());
  const auto tx = detail::bilinear_taps(in_w, gy.width());
  Tensor<T> gx(gy.channels(), in_h, in_w);
  for (int c = 0; c < gy.channels(); ++c) {
    for (int oy = 0; oy < gy.height(); ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (int ox = 0; ox < gy.width(); ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T g = gy(c, oy, ox);
        gx(c, a.lo, b.lo) += g * (T(1) - fy) * (T(1) - fx);
        gx(c, a.lo, b.hi) += g * (T(1) - fy) * fx;
        gx(c, a.hi, b.lo) += g * fy * (T(1) - fx);
        gx(c, a.hi, b.hi) += g * fy * fx;
      }
    }
  }
  return gx;
}

// Bilinear resize. Large reductions are done as a chain of halving passes
// (each an exact 2x2 average for even sizes) before the final pass, so
// downsampled sources do not alias.
template <typename T>
Tensor<T> resize_bilinear(Tensor<T> x, int out_h, int out_w) {
  while (x.height() >= 2 * out_h && x.width() >= 2 * out_w &&
         (x.height() > out_h || x.width() > out_w)) {
    x = resize_bilinear_step(x, x.height() / 2, x.width() / 2);
  }
  return resize_bilinear_step(x, out_h, out_w);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ContractError("concat: spatial sizes differ");
  }
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

// Returns the trailing `channels` planes of a concatenated tensor.
template <typename T>
Tensor<T> tail_channels(const Tensor<T>& x, int channels) {
  Tensor<T> out(channels, x.height(), x.width());
  const auto offset = static_cast<std::size_t>(x.channels() - channels) * x.plane_size();
  std::copy(x.data() + offset, x.data() + x.size(), out.data());
  return out;
}

}  // namespace t2v::ops
