#include "t2v/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "t2v/errors.hpp"
#include "t2v/fs.hpp"

namespace t2v {

Luminance to_luminance(const Image& image) {
  Luminance lum(image.height(), image.width());
  if (image.channels() == 1) {
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) lum(y, x) = image(0, y, x);
  } else if (image.channels() == 3) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const double r = image(0, y, x), g = image(1, y, x), b = image(2, y, x);
        // Gray pixels keep their exact value (the weights sum to 1 only up to rounding).
        lum(y, x) = (r == g && g == b) ? r : kLumaR * r + kLumaG * g + kLumaB * b;
      }
    }
  } else {
    throw ContractError("luminance: expected 1 or 3 channels");
  }
  return lum.cwiseMax(0.0).cwiseMin(1.0);
}

Image replicate_channels(const Image& gray) {
  if (gray.channels() != 1) throw ContractError("replicate: expected a single channel");
  Image out(3, gray.height(), gray.width());
  for (int c = 0; c < 3; ++c) std::copy(gray.data(), gray.data() + gray.size(), out.plane(c));
  return out;
}

Image center_crop_square(const Image& image) {
  const int side = std::min(image.height(), image.width());
  if (side == image.height() && side == image.width()) return image;
  const int y0 = (image.height() - side) / 2;
  const int x0 = (image.width() - side) / 2;
  Image out(image.channels(), side, side);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) out(c, y, x) = image(c, y + y0, x + x0);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IngestionError("unreadable or corrupt image", path.string());
  if (mat.depth() != CV_8U) throw IngestionError("expected an 8-bit image", path.string());
  const int src_channels = mat.channels();
  if (src_channels != 1 && src_channels != 3 && src_channels != 4) {
    throw IngestionError("unsupported channel count", path.string());
  }
  const int channels = src_channels == 1 ? 1 : 3;
  Image out(channels, mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      const auto* px = row + static_cast<std::ptrdiff_t>(x) * src_channels;
      if (channels == 1) {
        out(0, y, x) = px[0] / 255.0f;
      } else {
        // OpenCV stores BGR(A).
        out(0, y, x) = px[2] / 255.0f;
        out(1, y, x) = px[1] / 255.0f;
        out(2, y, x) = px[0] / 255.0f;
      }
    }
  }
  return out;
}

namespace {

std::uint8_t to_byte(float v) {
  const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& v : out.values()) v = to_byte(v) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ContractError("write_png: expected 1 or 3 channels");
  }
  const int type = image.channels() == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat mat(image.height(), image.width(), type);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      if (image.channels() == 1) {
        row[x] = to_byte(image(0, y, x));
      } else {
        row[3 * x + 0] = to_byte(image(2, y, x));
        row[3 * x + 1] = to_byte(image(1, y, x));
        row[3 * x + 2] = to_byte(image(0, y, x));
      }
    }
  }
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", mat, bytes)) throw Error("png encoding failed for " + path.string());
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace t2v
