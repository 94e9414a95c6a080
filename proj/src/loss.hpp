#pragma once

#include <optional>
#include <vector>

#include "augment.hpp"
#include "generator.hpp"
#include "guidance.hpp"
#include "rng.hpp"

namespace pxd {

struct LossWeights {
  double s = 40.0;     // guidance scale on the semantic term
  double w_fft = 20.0; // smoothness weight
  void validate() const;
};

// Binary high-pass mask in centered (shifted) frequency layout: 0 within
// distance r0 of the center bin (H/2, W/2), 1 elsewhere.
struct FftMask {
  int height = 0;
  int width = 0;
  double radius = 1.0;
  std::vector<double> m;
  double l1 = 0.0;
};

// r0 defaults to max(1, floor(min(H,W)/8)).
FftMask make_fft_mask(int height, int width, std::optional<double> radius = std::nullopt);

struct FftLoss {
  double value = 0.0;
  Image grad;  // dL/dx, same shape as x
};

// Mean masked magnitude of the centered 2-D DFT of the BT.601 grayscale of x.
// |z| has subgradient 0 at z = 0.
FftLoss fft_loss(const Image& x, const FftMask& mask);

struct GeneratorOptions {
  double tau = 1.0;
  bool gumbel = true;            // false: deterministic softmax render
  bool straight_through = false; // argmax forward, Gumbel-softmax backward
};

// All randomness of one step, frozen.
struct StepDraws {
  std::optional<GumbelDraw> gumbel;
  AugmentSample augment;
  int t = 0;
  Image eps;  // at the augmented size
};

struct StepDiagnostics {
  int t = 0;
  double grad_norm_noise = 0.0;  // ||dL_noise/dx|| at render resolution
  double grad_norm_sem = 0.0;    // ||dL_sem/dx||, without the factor s
  double fft_loss = 0.0;
  Image grad_image_noise;
  Image grad_image_sem;
};

struct StepOutput {
  LogitField grad;
  StepDiagnostics diagnostics;
};

// Condition images are given at their source resolution and are augmented
// with the same frozen sample as the render.
Condition augment_condition(const Condition& cond, const AugmentSample& sample);

// Render -> augment -> backend -> augmentation vjp (+ w_fft dL_FFT/dx on the
// native render) -> generator backprop, for fixed draws.
StepOutput lsds_gradient(const LogitField& theta, const Palette& palette, GuidanceBackend& backend,
                         const StepDraws& draws, const Condition& condition, const LossWeights& weights,
                         const FftMask& mask, const GeneratorOptions& options);

struct StepContext {
  const Palette& palette;
  GuidanceBackend& backend;
  const Condition& condition;
  const AugmentConfig& augment;
  const LossWeights& weights;
  const FftMask& mask;
  const GeneratorOptions& generator;
  const TimestepSampler& timesteps;
  RngStreams rng;
};

StepDraws draw_step(const LogitField& theta, const StepContext& ctx, long step, long total_steps);
StepOutput lsds_step(const LogitField& theta, const StepContext& ctx, long step, long total_steps);

}  // namespace pxd
