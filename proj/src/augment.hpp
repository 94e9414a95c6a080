#pragma once

#include <array>
#include <cstdint>

#include "image.hpp"
#include "palette.hpp"

namespace pxd {

struct AugmentConfig {
  double p_gray = 0.2;
  double p_flip = 0.5;
  double p_persp = 0.5;
  double distortion_scale = 0.3;
  // Output size of apply(); 0 means "same as the source image".
  int target_height = 0;
  int target_width = 0;

  void validate() const;
};

using Homography = std::array<double, 9>;  // row-major 3×3
inline constexpr Homography kIdentityHomography{1, 0, 0, 0, 1, 0, 0, 0, 1};

// A frozen augmentation. The homography maps output pixel coordinates
// (x, y, 1) to source coordinates on the resized, flipped grid.
struct AugmentSample {
  bool gray = false;
  bool flip = false;
  bool perspective = false;
  Homography homography = kIdentityHomography;
  std::uint64_t seed = 0;
  int target_height = 0;
  int target_width = 0;

  bool operator==(const AugmentSample&) const = default;
};

AugmentSample identity_augment(int target_height, int target_width);

// Draws the three Bernoulli flags and, for perspective, inward corner
// displacements up to distortion_scale * (width/2, height/2) mapped to a
// homography by a 4-point DLT. Degenerate corner sets are redrawn up to 8
// times before falling back to the identity.
AugmentSample sample_augment(const AugmentConfig& cfg, int target_height, int target_width, std::uint64_t seed);

// Resize -> flip -> perspective (bilinear, out of bounds = fill) -> grayscale.
// Grayscale only affects 3-channel images.
Image apply(const AugmentSample& sample, const Image& image, const Rgb& fill = {0, 0, 0});

// Transpose of the linear part of apply(), back to a src_h×src_w image.
Image vjp(const AugmentSample& sample, const Image& dl_dy, int src_height, int src_width);

// 4-point DLT solve: H maps each `from` point onto its `to` point.
bool homography_from_points(const std::array<std::array<double, 2>, 4>& from,
                            const std::array<std::array<double, 2>, 4>& to, Homography& out);

}  // namespace pxd
