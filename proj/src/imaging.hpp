#pragma once

#include <array>
#include <filesystem>

#include "image.hpp"

namespace pxd {

// BT.601 luma weights, shared by grayscale augmentation and the FFT loss.
inline constexpr std::array<double, 3> kLumaWeights{0.299, 0.587, 0.114};

// Bilinear resampling with half-pixel centers (align_corners = false).
// Source coordinates below zero are clamped to the first row/column.
Image bilinear_resize(const Image& img, int out_h, int out_w);

// Exact transpose of bilinear_resize: maps an out_h×out_w gradient back to
// the src_h×src_w grid.
Image bilinear_resize_transpose(const Image& grad, int src_h, int src_w);

// Single-channel luminance.
Image luminance(const Image& img);
Image replicate_channels(const Image& gray, int channels);

// Separable Gaussian blur, kernel truncated at `radius` pixels, replicate border.
Image gaussian_blur(const Image& img, double sigma, int radius);

struct CannyParams {
  double low = 0.1;   // fraction of max gradient magnitude
  double high = 0.2;  // fraction of max gradient magnitude
  double pre_sigma = 1.0;
  bool post_blur = true;  // 3×3 Gaussian (radius 1 pixel)
};

// Binary edge map (optionally blurred), one channel, values in [0,1].
Image canny(const Image& img, const CannyParams& params = {});

// Placeholder depth: blurred luminance normalized to [0,1]. Constant input
// yields zeros.
Image pseudo_depth(const Image& img);

Image upscale_nearest(const Image& img, int factor);

// Maps a single-channel [0,1] map to an RGB color ramp (dark = 0, bright = 1).
Image heatmap(const Image& scalar);

Image read_png(const std::filesystem::path& path);
// Values are clamped to [0,1] and rounded to 8 bits. Channels must be 1 or 3.
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace pxd
