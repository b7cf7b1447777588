#include "t2v/quality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "t2v/errors.hpp"

namespace t2v::quality {

std::array<double, kMetricCount> as_array(const QualityVector& q) {
  return {q.sharpness, q.blur, q.exposure, q.gcf, q.contrast, q.light_symmetry, q.brightness};
}

namespace {

void require_nonempty(const Luminance& lum) {
  if (lum.rows() == 0 || lum.cols() == 0) throw ContractError("quality: empty image");
}

double at_clamped(const Luminance& lum, Eigen::Index y, Eigen::Index x) {
  y = std::clamp<Eigen::Index>(y, 0, lum.rows() - 1);
  x = std::clamp<Eigen::Index>(x, 0, lum.cols() - 1);
  return lum(y, x);
}

}  // namespace

SobelResponse sobel(const Luminance& lum) {
  require_nonempty(lum);
  const Eigen::Index h = lum.rows();
  const Eigen::Index w = lum.cols();
  SobelResponse r{Luminance(h, w), Luminance(h, w)};
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double tl = at_clamped(lum, y - 1, x - 1), t = at_clamped(lum, y - 1, x),
                   tr = at_clamped(lum, y - 1, x + 1);
      const double l = at_clamped(lum, y, x - 1), rr = at_clamped(lum, y, x + 1);
      const double bl = at_clamped(lum, y + 1, x - 1), b = at_clamped(lum, y + 1, x),
                   br = at_clamped(lum, y + 1, x + 1);
      r.gx(y, x) = (tr + 2 * rr + br) - (tl + 2 * l + bl);
      r.gy(y, x) = (bl + 2 * b + br) - (tl + 2 * t + tr);
    }
  }
  return r;
}

double brightness(const Luminance& lum) {
  require_nonempty(lum);
  return std::clamp(lum.mean(), 0.0, 1.0);
}

double percentile(const Luminance& lum, double p) {
  require_nonempty(lum);
  std::vector<double> v(lum.data(), lum.data() + lum.size());
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double contrast(const Luminance& lum) {
  return std::clamp(percentile(lum, 99.0) - percentile(lum, 1.0), 0.0, 1.0);
}

double sharpness(const Luminance& lum) {
  const auto s = sobel(lum);
  const double mean_mag = (s.gx.square() + s.gy.square()).sqrt().mean();
  return std::clamp(mean_mag / kMaxSobelMagnitude, 0.0, 1.0);
}

double blur_probability(double width, double jnb_width) {
  return 1.0 - std::exp(-std::pow(std::abs(width / jnb_width), kCpbdBeta));
}

namespace {

// Distance between the local minimum and maximum that enclose (y, x) along
// one axis, walking uphill in the direction of increasing intensity.
int edge_width(const Luminance& lum, Eigen::Index y, Eigen::Index x, bool horizontal, int sign) {
  const Eigen::Index n = horizontal ? lum.cols() : lum.rows();
  auto value = [&](Eigen::Index i) { return horizontal ? lum(y, i) : lum(i, x); };
  const Eigen::Index start = horizontal ? x : y;
  Eigen::Index up = start;
  while (up + sign >= 0 && up + sign < n && value(up + sign) > value(up)) up += sign;
  Eigen::Index down = start;
  while (down - sign >= 0 && down - sign < n && value(down - sign) < value(down)) down -= sign;
  return static_cast<int>(std::abs(up - down));
}

}  // namespace

double blur_cpbd(const Luminance& lum, Diagnostics* diagnostics) {
  const auto s = sobel(lum);
  const Eigen::Index h = lum.rows();
  const Eigen::Index w = lum.cols();
  const Luminance mag = (s.gx.square() + s.gy.square()).sqrt() / kMaxSobelMagnitude;

  int edges = 0;
  int sharp = 0;
  for (Eigen::Index by = 0; by < h; by += kCpbdBlockSize) {
    for (Eigen::Index bx = 0; bx < w; bx += kCpbdBlockSize) {
      const Eigen::Index bh = std::min<Eigen::Index>(kCpbdBlockSize, h - by);
      const Eigen::Index bw = std::min<Eigen::Index>(kCpbdBlockSize, w - bx);
      const auto block = lum.block(by, bx, bh, bw);
      const double block_contrast = (block.maxCoeff() - block.minCoeff()) * 255.0;
      const double jnb = block_contrast > kCpbdContrastThreshold ? 3.0 : 5.0;
      for (Eigen::Index y = by; y < by + bh; ++y) {
        for (Eigen::Index x = bx; x < bx + bw; ++x) {
          const double m = mag(y, x);
          if (m < kCpbdEdgeThreshold) continue;
          const bool horizontal = std::abs(s.gx(y, x)) >= std::abs(s.gy(y, x));
          // Non-maximum suppression along the dominant axis.
          const double before = horizontal ? (x > 0 ? mag(y, x - 1) : 0.0) : (y > 0 ? mag(y - 1, x) : 0.0);
          const double after = horizontal ? (x + 1 < w ? mag(y, x + 1) : 0.0) : (y + 1 < h ? mag(y + 1, x) : 0.0);
          if (m < before || m < after) continue;
          const double g = horizontal ? s.gx(y, x) : s.gy(y, x);
          const int width = edge_width(lum, y, x, horizontal, g > 0 ? 1 : -1);
          if (width == 0) continue;
          ++edges;
          if (blur_probability(width, jnb) <= kCpbdProbabilityThreshold) ++sharp;
        }
      }
    }
  }
  if (diagnostics) {
    diagnostics->edge_pixels = edges;
    diagnostics->no_edge = edges == 0;
  }
  return edges == 0 ? 0.0 : static_cast<double>(sharp) / edges;
}

double exposure(const Luminance& lum) {
  require_nonempty(lum);
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  for (Eigen::Index i = 0; i < lum.size(); ++i) {
    const int b = std::clamp(static_cast<int>(lum.data()[i] * kBins), 0, kBins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  // Penalty per bin: twice the distance from the bin interval to mid-gray,
  // so the two bins touching 0.5 are free.
  double penalty = 0.0;
  for (int b = 0; b < kBins; ++b) {
    const double lo = static_cast<double>(b) / kBins;
    const double hi = static_cast<double>(b + 1) / kBins;
    const double dist = std::max({0.0, lo - 0.5, 0.5 - hi});
    penalty += hist[static_cast<std::size_t>(b)] / static_cast<double>(lum.size()) * 2.0 * dist;
  }
  return std::clamp(1.0 - penalty, 0.0, 1.0);
}

double gcf_weight(int level) {
  const double t = level / 9.0;
  return (-0.406385 * t + 0.334573) * t + 0.0877526;
}

namespace {

constexpr std::array<int, 9> kGcfFactors{1, 2, 4, 8, 16, 25, 50, 100, 200};

// Mean over pixels of the mean absolute difference to the 4-neighbours.
double mean_local_contrast(const Luminance& perceptual) {
  const Eigen::Index h = perceptual.rows();
  const Eigen::Index w = perceptual.cols();
  double total = 0.0;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double sum = 0.0;
      int n = 0;
      const double c = perceptual(y, x);
      if (y > 0) sum += std::abs(c - perceptual(y - 1, x)), ++n;
      if (y + 1 < h) sum += std::abs(c - perceptual(y + 1, x)), ++n;
      if (x > 0) sum += std::abs(c - perceptual(y, x - 1)), ++n;
      if (x + 1 < w) sum += std::abs(c - perceptual(y, x + 1)), ++n;
      if (n > 0) total += sum / n;
    }
  }
  return total / static_cast<double>(h * w);
}

}  // namespace

double gcf(const Luminance& lum) {
  require_nonempty(lum);
  const Luminance linear = lum.pow(2.2);
  double result = 0.0;
  for (std::size_t i = 0; i < kGcfFactors.size(); ++i) {
    const int f = kGcfFactors[i];
    const Eigen::Index h = lum.rows() / f;
    const Eigen::Index w = lum.cols() / f;
    if (h < 2 || w < 2) continue;
    Luminance perceptual(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        const double l = linear.block(y * f, x * f, f, f).mean();
        perceptual(y, x) = 100.0 * std::sqrt(l);
      }
    }
    result += gcf_weight(static_cast<int>(i) + 1) * mean_local_contrast(perceptual);
  }
  return result;
}

double light_symmetry(const Luminance& lum) {
  require_nonempty(lum);
  constexpr int kBins = 64;
  const Eigen::Index half = lum.cols() / 2;
  if (half == 0) return 0.0;
  std::array<double, kBins> left{};
  std::array<double, kBins> right{};
  auto bin = [](double v) { return std::clamp(static_cast<int>(v * kBins), 0, kBins - 1); };
  for (Eigen::Index y = 0; y < lum.rows(); ++y) {
    for (Eigen::Index x = 0; x < half; ++x) {
      left[static_cast<std::size_t>(bin(lum(y, x)))] += 1.0;
      // mirrored right half: column x pairs with column W-1-x
      right[static_cast<std::size_t>(bin(lum(y, lum.cols() - 1 - x)))] += 1.0;
    }
  }
  const double n = static_cast<double>(lum.rows() * half);
  double l1 = 0.0;
  for (int b = 0; b < kBins; ++b) l1 += std::abs(left[b] - right[b]) / n;
  return std::clamp(0.5 * l1, 0.0, 1.0);
}

QualityResult compute_quality(const Image& image) {
  const Luminance lum = to_luminance(image);
  QualityResult r;
  r.metrics.sharpness = sharpness(lum);
  r.metrics.blur = blur_cpbd(lum, &r.diagnostics);
  r.metrics.exposure = exposure(lum);
  r.metrics.gcf = gcf(lum);
  r.metrics.contrast = contrast(lum);
  r.metrics.light_symmetry = light_symmetry(lum);
  r.metrics.brightness = brightness(lum);
  return r;
}

}  // namespace t2v::quality
