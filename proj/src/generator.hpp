#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "image.hpp"
#include "palette.hpp"

namespace pxd {

// H×W×n per-pixel class scores. Layout is row-major with the class index
// fastest, so pixel (i,j) owns a contiguous span of n values.
struct LogitField {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<double> values;

  LogitField() = default;
  LogitField(int h, int w, int n, double fill = 0.0)
      : height(h), width(w), classes(n), values(static_cast<std::size_t>(h) * w * n, fill) {}

  int pixels() const noexcept { return height * width; }
  std::span<double> pixel(int p) noexcept { return {values.data() + static_cast<std::size_t>(p) * classes, static_cast<std::size_t>(classes)}; }
  std::span<const double> pixel(int p) const noexcept {
    return {values.data() + static_cast<std::size_t>(p) * classes, static_cast<std::size_t>(classes)};
  }
  bool same_shape(const LogitField& o) const noexcept {
    return height == o.height && width == o.width && classes == o.classes;
  }
  bool operator==(const LogitField&) const = default;
};

// Per-pixel categorical weights (softmax probabilities or Gumbel-softmax
// sample weights); same layout as LogitField.
using ProbField = LogitField;

struct GumbelDraw {
  LogitField noise;    // G ~ Gumbel(0,1), one per logit
  std::uint64_t seed = 0;
  ProbField weights;   // softmax((lambda + G) / tau)
  double tau = 1.0;
};

enum class InitNorm { l1, l2 };

// lambda_{ijk} = -||pixel_ij - c_k||, then centered. Tile elements use their
// mean color. `image` must already be H×W.
LogitField init_from_image(const Image& image, const Palette& palette, InitNorm norm);
// Same, without the final centering step.
LogitField init_from_image_raw(const Image& image, const Palette& palette, InitNorm norm);
// i.i.d. N(0, scale^2) logits, then centered.
LogitField init_random(int height, int width, int classes, std::uint64_t seed, double scale);

// Stable per-pixel softmax of `logits * inv_temperature`.
ProbField softmax_probs(const LogitField& theta, double inv_temperature = 1.0);
GumbelDraw gumbel_sample(const LogitField& theta, double tau, std::uint64_t seed);

// Subtracts the per-pixel class mean.
void center(LogitField& theta);
LogitField centered(LogitField theta);

// Per-pixel argmax, ties to the lowest class index.
std::vector<int> argmax_indices(const LogitField& field);

// Sum_k weights_k * c_k per grid cell; tiles blend element-wise.
Image render_blend(const ProbField& weights, const Palette& palette);
// Places palette element indices[p] in grid cell p.
Image render_indices(std::span<const int> indices, int height, int width, const Palette& palette);

enum class RenderMode { argmax, softmax, gumbel };
// `draw` is required for RenderMode::gumbel.
Image render(const LogitField& theta, const Palette& palette, RenderMode mode, const GumbelDraw* draw = nullptr);

struct EntropyMap {
  Image normalized;  // H×W×1, each in [0,1]
  double mean = 0.0;
};
EntropyMap entropy_map(const ProbField& pi);

// Transpose of the palette blend: v_{ijk} = <dL/dx restricted to cell ij, c_k>.
LogitField blend_transpose(const Image& dl_dx, const Palette& palette, int height, int width);
// Softmax Jacobian transpose, scaled: out = scale * w ⊙ (v - <v, w>).
LogitField softmax_vjp(const LogitField& v, const ProbField& weights, double scale = 1.0);
// dL/dlambda for a render produced from `weights` (pi for softmax mode, the
// Gumbel weights for gumbel mode with scale = 1/tau).
LogitField backprop_to_logits(const Image& dl_dx, const ProbField& weights, const Palette& palette,
                              double scale = 1.0);

}  // namespace pxd
