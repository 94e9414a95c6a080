#include "loss.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>

#include "error.hpp"
#include "imaging.hpp"

namespace pxd {

void LossWeights::validate() const {
  if (!(s >= 0)) fail(Errc::config, "loss: guidance scale s must be >= 0");
  if (!(w_fft >= 0)) fail(Errc::config, "loss: w_fft must be >= 0");
}

FftMask make_fft_mask(int height, int width, std::optional<double> radius) {
  FftMask mask;
  mask.height = height;
  mask.width = width;
  mask.radius = radius ? *radius : std::max(1, std::min(height, width) / 8);
  mask.m.assign(static_cast<std::size_t>(height) * width, 0.0);
  const int ci = height / 2, cj = width / 2;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const double d = std::hypot(i - ci, j - cj);
      const double v = d <= mask.radius ? 0.0 : 1.0;
      mask.m[static_cast<std::size_t>(i) * width + j] = v;
      mask.l1 += v;
    }
  if (mask.l1 <= 0) fail(Errc::config, "fft mask radius masks every frequency");
  return mask;
}

namespace {

// FFTW planning is not thread-safe.
std::mutex& plan_mutex() {
  static std::mutex mu;
  return mu;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {
    if (ptr == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

void dft2(FftwBuffer& in, FftwBuffer& out, int h, int w, int sign) {
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = fftw_plan_dft_2d(h, w, in.ptr, out.ptr, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(plan_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

FftLoss fft_loss(const Image& x, const FftMask& mask) {
  if (x.height != mask.height || x.width != mask.width)
    fail(Errc::invalid_argument, "fft_loss: mask does not match the image size");
  const int h = x.height, w = x.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const Image gray = luminance(x);

  FftwBuffer spatial(n), freq(n);
  for (std::size_t i = 0; i < n; ++i) {
    spatial.ptr[i][0] = gray.data[i];
    spatial.ptr[i][1] = 0.0;
  }
  dft2(spatial, freq, h, w, FFTW_FORWARD);

  // Frequency (u,v) sits at shifted position ((u + H/2) mod H, (v + W/2) mod W).
  FftLoss out;
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const std::size_t k = static_cast<std::size_t>(u) * w + v;
      const double m = mask.m[static_cast<std::size_t>((u + h / 2) % h) * w + (v + w / 2) % w];
      const std::complex<double> f(freq.ptr[k][0], freq.ptr[k][1]);
      const double mag = std::abs(f);
      out.value += m * mag;
      const std::complex<double> g = (m != 0.0 && mag > 0.0) ? f * (m / (mag * mask.l1)) : 0.0;
      freq.ptr[k][0] = g.real();
      freq.ptr[k][1] = g.imag();
    }
  out.value /= mask.l1;

  // d|F_k|/dg = Re(conj(F_k)/|F_k| e^{-i..}) summed over k is the unnormalized
  // inverse DFT of F/|F|.
  dft2(freq, spatial, h, w, FFTW_BACKWARD);
  out.grad = Image(h, w, x.channels);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const double g = spatial.ptr[static_cast<std::size_t>(y) * w + xx][0];
      if (x.channels == 1) {
        out.grad.at(y, xx) = g;
      } else {
        for (int c = 0; c < 3; ++c) out.grad.at(y, xx, c) = kLumaWeights[c] * g;
      }
    }
  return out;
}

Condition augment_condition(const Condition& cond, const AugmentSample& sample) {
  Condition out = cond;
  if (cond.canny) out.canny = apply(sample, *cond.canny);
  if (cond.depth) out.depth = apply(sample, *cond.depth);
  return out;
}

namespace {

double norm2(const Image& img) {
  double acc = 0;
  for (double v : img.data) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

StepOutput lsds_gradient(const LogitField& theta, const Palette& palette, GuidanceBackend& backend,
                         const StepDraws& draws, const Condition& condition, const LossWeights& weights,
                         const FftMask& mask, const GeneratorOptions& options) {
  const bool gumbel = draws.gumbel.has_value();
  const ProbField probs = gumbel ? draws.gumbel->weights : softmax_probs(theta);
  const double scale = gumbel ? 1.0 / draws.gumbel->tau : 1.0;
  const Image x = options.straight_through ? render_indices(argmax_indices(probs), theta.height, theta.width, palette)
                                           : render_blend(probs, palette);

  const Image x_aug = apply(draws.augment, x);
  if (!x_aug.same_shape(draws.eps)) fail(Errc::invalid_argument, "noise sample does not match the augmented image");
  const Condition cond_aug = augment_condition(condition, draws.augment);
  const GuidanceGrad g = backend.evaluate(GuidanceRequest{x_aug, draws.eps, draws.t, cond_aug});
  if (!g.grad_noise.same_shape(x_aug) || !g.grad_sem.same_shape(x_aug))
    fail(Errc::backend, "backend returned gradients of the wrong shape");

  StepOutput out;
  StepDiagnostics& d = out.diagnostics;
  d.t = draws.t;
  d.grad_image_noise = vjp(draws.augment, g.grad_noise, x.height, x.width);
  d.grad_image_sem = vjp(draws.augment, g.grad_sem, x.height, x.width);
  d.grad_norm_noise = norm2(d.grad_image_noise);
  d.grad_norm_sem = norm2(d.grad_image_sem);

  Image grad_x = d.grad_image_noise;
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x.data[i] += weights.s * d.grad_image_sem.data[i];
  if (mask.height == x.height && mask.width == x.width) {
    const FftLoss fl = fft_loss(x, mask);
    d.fft_loss = fl.value;
    if (weights.w_fft != 0.0)
      for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x.data[i] += weights.w_fft * fl.grad.data[i];
  } else if (weights.w_fft != 0.0) {
    fail(Errc::invalid_argument, "fft mask does not match the render size");
  }
  out.grad = backprop_to_logits(grad_x, probs, palette, scale);
  return out;
}

StepDraws draw_step(const LogitField& theta, const StepContext& ctx, long step, long total_steps) {
  const int rh = theta.height * ctx.palette.tile_height();
  const int rw = theta.width * ctx.palette.tile_width();
  const int th = ctx.augment.target_height > 0 ? ctx.augment.target_height : rh;
  const int tw = ctx.augment.target_width > 0 ? ctx.augment.target_width : rw;
  const auto s = static_cast<std::uint64_t>(step);

  StepDraws d;
  if (ctx.generator.gumbel) d.gumbel = gumbel_sample(theta, ctx.generator.tau, ctx.rng.seed(Stream::gumbel, s));
  d.augment = sample_augment(ctx.augment, th, tw, ctx.rng.seed(Stream::augment, s));
  auto trng = ctx.rng.engine(Stream::timestep, s);
  d.t = ctx.timesteps.sample(step, total_steps, trng);
  auto erng = ctx.rng.engine(Stream::epsilon, s);
  std::normal_distribution<double> normal(0.0, 1.0);
  d.eps = Image(th, tw, 3);
  for (double& v : d.eps.data) v = normal(erng);
  return d;
}

StepOutput lsds_step(const LogitField& theta, const StepContext& ctx, long step, long total_steps) {
  const StepDraws draws = draw_step(theta, ctx, step, total_steps);
  return lsds_gradient(theta, ctx.palette, ctx.backend, draws, ctx.condition, ctx.weights, ctx.mask, ctx.generator);
}

}  // namespace pxd
