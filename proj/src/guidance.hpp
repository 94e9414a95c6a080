#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"

namespace pxd {

// Variance-preserving schedule indexed by t in {0..T}; t = 0 is noise-free.
struct NoiseSchedule {
  int steps = 0;               // T
  std::vector<double> alpha;   // sqrt(alpha_bar_t)
  std::vector<double> sigma;   // sqrt(1 - alpha_bar_t)
  std::vector<double> weight;  // w(t) = sigma_t^2
};

// DDPM linear betas from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_linear_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// eps_cond + s * (eps_cond - eps_uncond)
Image cfg_combine(const Image& eps_cond, const Image& eps_uncond, double scale);

struct Condition {
  std::string prompt;
  std::string uncond_prompt;
  std::optional<Image> canny;  // 1 channel
  std::optional<Image> depth;  // 1 channel
  double canny_scale = 0.35;
  double depth_scale = 0.35;
};

// Everything a backend sees for one evaluation; images are already augmented.
struct GuidanceRequest {
  const Image& x;
  const Image& eps;
  int t = 0;
  const Condition& condition;
};

// Pixel-space gradient terms, already multiplied by w(t) and dz/dx.
struct GuidanceGrad {
  Image grad_noise;
  Image grad_sem;
  int t = 0;
};

class GuidanceBackend {
 public:
  virtual ~GuidanceBackend() = default;
  virtual GuidanceGrad evaluate(const GuidanceRequest& request) = 0;
  virtual std::string name() const = 0;
};

// A backend with an explicit in-process noise predictor and an identity
// encoder. evaluate() assembles x_t = alpha x + sigma eps and the two
// residual terms from predict_noise().
class ScoreOracle : public GuidanceBackend {
 public:
  explicit ScoreOracle(NoiseSchedule schedule) : schedule_(std::move(schedule)) {}
  GuidanceGrad evaluate(const GuidanceRequest& request) override;
  virtual Image predict_noise(const Image& x_t, bool conditional, int t) const = 0;
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 protected:
  void check_t(int t) const;

 private:
  NoiseSchedule schedule_;
};

// Noise predictor that is exact when the data distribution is a Dirac at
// the target image: eps_hat = (x_t - alpha_t target) / sigma_t.
class DeltaOracle : public ScoreOracle {
 public:
  DeltaOracle(NoiseSchedule schedule, Image target_cond, Image target_uncond);
  GuidanceGrad evaluate(const GuidanceRequest& request) override;
  Image predict_noise(const Image& x_t, bool conditional, int t) const override;
  std::string name() const override { return "delta"; }
  const Image& target_cond() const noexcept { return cond_; }
  const Image& target_uncond() const noexcept { return uncond_; }

 private:
  Image cond_, uncond_;
};

// The delta-oracle residual arithmetic for one flat buffer. Shared by the
// in-process oracle (double) and the echo server (float) so both follow the
// same operation order.
template <typename T>
void delta_residuals(std::span<const T> x, std::span<const T> eps, std::span<const T> target_cond,
                     std::span<const T> target_uncond, T alpha, T sigma, T weight, std::span<T> grad_noise,
                     std::span<T> grad_sem) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T x_t = alpha * x[i] + sigma * eps[i];
    const T eps_cond = (x_t - alpha * target_cond[i]) / sigma;
    const T eps_uncond = (x_t - alpha * target_uncond[i]) / sigma;
    grad_noise[i] = weight * (eps_cond - eps[i]);
    grad_sem[i] = weight * (eps_cond - eps_uncond);
  }
}

struct GaussianMixture {
  std::vector<Image> means;
  std::vector<double> weights;  // positive, summing to 1
};

// Exact posterior-mean denoiser for an isotropic Gaussian mixture (component
// std gamma). Conditional and unconditional predictions use separate
// mixtures over images of one shape.
class GmmOracle : public ScoreOracle {
 public:
  GmmOracle(NoiseSchedule schedule, GaussianMixture cond, GaussianMixture uncond, double gamma);
  Image predict_noise(const Image& x_t, bool conditional, int t) const override;
  // E[x_0 | x_t] under the chosen mixture.
  Image posterior_mean(const Image& x_t, bool conditional, int t) const;
  std::string name() const override { return "gmm"; }

 private:
  GaussianMixture cond_, uncond_;
  double gamma_;
};

// Uniform t in {a, ..., b(step)}, b linear from b_start to b_end over the
// first half of the run and constant afterwards.
struct TimestepSampler {
  int a = 20;
  int b_start = 980;
  int b_end = 800;

  void validate(int schedule_steps) const;
  int upper(long step, long total_steps) const;
  int sample(long step, long total_steps, std::mt19937_64& rng) const;
};

}  // namespace pxd
