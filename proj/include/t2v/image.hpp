#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "t2v/tensor.hpp"

namespace t2v {

// H x W luminance grid in [0,1].
using Luminance = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// BT.601 luma. Single-channel images pass through unchanged.
Luminance to_luminance(const Image& image);

// Copies a 1-channel image into 3 identical channels.
Image replicate_channels(const Image& gray);

// Centred square crop to the shorter side.
Image center_crop_square(const Image& image);

// Reads an 8-bit PNG (grayscale, RGB or RGBA; alpha dropped) into [0,1].
Image read_png(const std::filesystem::path& path);

// Writes 1- or 3-channel images as 8-bit PNG (values clamped, rounded to
// the nearest of 256 levels). The write is atomic.
void write_png(const std::filesystem::path& path, const Image& image);

// Rounds to the 8-bit grid exactly as write_png stores it.
Image quantize_8bit(const Image& image);

}  // namespace t2v
