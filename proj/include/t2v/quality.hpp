#pragma once

// No-reference image quality metrics, all computed on BT.601 luminance in
// [0,1]. Values other than GCF lie in [0,1].

#include <array>
#include <string>

#include "t2v/image.hpp"
#include "t2v/tensor.hpp"

namespace t2v::quality {

struct QualityVector {
  double sharpness = 0.0;
  double blur = 0.0;
  double exposure = 0.0;
  double gcf = 0.0;
  double contrast = 0.0;
  double light_symmetry = 0.0;
  double brightness = 0.0;

  friend bool operator==(const QualityVector&, const QualityVector&) = default;
};

inline constexpr int kMetricCount = 7;

// Report column order.
inline const std::array<const char*, kMetricCount>& metric_names() {
  static const std::array<const char*, kMetricCount> names{
      "Sharpness", "Blur", "Exposure", "GCF", "Contrast", "LS", "Brightness"};
  return names;
}

// Lower-case keys used in CSV headers, same order as metric_names().
inline const std::array<const char*, kMetricCount>& metric_keys() {
  static const std::array<const char*, kMetricCount> keys{
      "sharpness", "blur", "exposure", "gcf", "contrast", "ls", "brightness"};
  return keys;
}

std::array<double, kMetricCount> as_array(const QualityVector& q);

struct Diagnostics {
  bool no_edge = false;
  int edge_pixels = 0;
};

struct QualityResult {
  QualityVector metrics;
  Diagnostics diagnostics;
};

// Largest Sobel gradient magnitude an image with values in [0,1] can reach.
// The two responses share corner pixels, so the peak is (gx, gy) = (4, 2) or
// (2, 4), i.e. sqrt(20), not 4 * sqrt(2).
inline constexpr double kMaxSobelMagnitude = 4.47213595499957939282;  // sqrt(20)

struct SobelResponse {
  Luminance gx;
  Luminance gy;
};

// 3x3 Sobel with replicated borders.
SobelResponse sobel(const Luminance& lum);

double brightness(const Luminance& lum);

// Spread between the 99th and 1st percentiles (linear interpolation).
double contrast(const Luminance& lum);
double percentile(const Luminance& lum, double p);

double sharpness(const Luminance& lum);

// CPBD blur. Widths are measured along the dominant gradient axis between
// the enclosing local extrema.
inline constexpr double kCpbdBeta = 3.6;
inline constexpr double kCpbdProbabilityThreshold = 0.63;
inline constexpr double kCpbdContrastThreshold = 50.0;  // on the 0-255 scale
inline constexpr double kCpbdEdgeThreshold = 0.05;      // normalised Sobel magnitude
inline constexpr int kCpbdBlockSize = 64;

double blur_probability(double width, double jnb_width);
double blur_cpbd(const Luminance& lum, Diagnostics* diagnostics = nullptr);

double exposure(const Luminance& lum);

// Global contrast factor over superpixel levels {1,2,4,8,16,25,50,100,200};
// levels whose block grid has fewer than 2x2 cells are skipped.
double gcf_weight(int level);
double gcf(const Luminance& lum);

double light_symmetry(const Luminance& lum);

QualityResult compute_quality(const Image& image);

}  // namespace t2v::quality
