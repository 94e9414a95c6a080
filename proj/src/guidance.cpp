#include "guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace pxd {

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) fail(Errc::invalid_argument, "noise schedule needs T >= 2");
  NoiseSchedule s;
  s.steps = steps;
  s.alpha.resize(steps + 1);
  s.sigma.resize(steps + 1);
  s.weight.resize(steps + 1);
  double alpha_bar = 1.0;
  for (int t = 0; t <= steps; ++t) {
    if (t > 0) {
      const double beta = beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
      alpha_bar *= 1.0 - beta;
    }
    s.alpha[t] = std::sqrt(alpha_bar);
    s.sigma[t] = std::sqrt(1.0 - alpha_bar);
    s.weight[t] = s.sigma[t] * s.sigma[t];
  }
  return s;
}

Image cfg_combine(const Image& eps_cond, const Image& eps_uncond, double scale) {
  if (!eps_cond.same_shape(eps_uncond)) fail(Errc::invalid_argument, "cfg_combine: shape mismatch");
  Image out = eps_cond;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += scale * (eps_cond.data[i] - eps_uncond.data[i]);
  return out;
}

void ScoreOracle::check_t(int t) const {
  if (t <= 0 || t > schedule_.steps)
    fail(Errc::backend, "timestep " + std::to_string(t) + " outside (0, " + std::to_string(schedule_.steps) + "]");
}

GuidanceGrad ScoreOracle::evaluate(const GuidanceRequest& req) {
  check_t(req.t);
  if (!req.x.same_shape(req.eps)) fail(Errc::backend, "noise and image shapes differ");
  const double a = schedule_.alpha[req.t], s = schedule_.sigma[req.t], w = schedule_.weight[req.t];
  Image x_t = req.x;
  for (std::size_t i = 0; i < x_t.size(); ++i) x_t.data[i] = a * req.x.data[i] + s * req.eps.data[i];
  const Image ec = predict_noise(x_t, true, req.t);
  const Image eu = predict_noise(x_t, false, req.t);
  GuidanceGrad g{Image(x_t.height, x_t.width, x_t.channels), Image(x_t.height, x_t.width, x_t.channels), req.t};
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    g.grad_noise.data[i] = w * (ec.data[i] - req.eps.data[i]);
    g.grad_sem.data[i] = w * (ec.data[i] - eu.data[i]);
  }
  return g;
}

DeltaOracle::DeltaOracle(NoiseSchedule schedule, Image target_cond, Image target_uncond)
    : ScoreOracle(std::move(schedule)), cond_(std::move(target_cond)), uncond_(std::move(target_uncond)) {
  if (!cond_.same_shape(uncond_)) fail(Errc::config, "delta oracle: conditional and unconditional targets differ in shape");
}

GuidanceGrad DeltaOracle::evaluate(const GuidanceRequest& req) {
  check_t(req.t);
  if (!req.x.same_shape(cond_) || !req.eps.same_shape(cond_))
    fail(Errc::backend, "delta oracle: request is " + std::to_string(req.x.height) + "x" + std::to_string(req.x.width) +
                            ", target is " + std::to_string(cond_.height) + "x" + std::to_string(cond_.width));
  const auto& sch = schedule();
  GuidanceGrad g{Image(cond_.height, cond_.width, cond_.channels), Image(cond_.height, cond_.width, cond_.channels),
                 req.t};
  delta_residuals<double>(req.x.data, req.eps.data, cond_.data, uncond_.data, sch.alpha[req.t], sch.sigma[req.t],
                          sch.weight[req.t], g.grad_noise.data, g.grad_sem.data);
  return g;
}

Image DeltaOracle::predict_noise(const Image& x_t, bool conditional, int t) const {
  check_t(t);
  const Image& target = conditional ? cond_ : uncond_;
  if (!x_t.same_shape(target)) fail(Errc::backend, "delta oracle: shape mismatch");
  const double a = schedule().alpha[t], s = schedule().sigma[t];
  Image eps = x_t;
  for (std::size_t i = 0; i < eps.size(); ++i) eps.data[i] = (x_t.data[i] - a * target.data[i]) / s;
  return eps;
}

namespace {

void check_mixture(const GaussianMixture& m, const char* which) {
  if (m.means.empty() || m.means.size() != m.weights.size())
    fail(Errc::config, std::string("gmm oracle: ") + which + " mixture needs matching means and weights");
  double total = 0;
  for (double w : m.weights) {
    if (!(w > 0)) fail(Errc::config, std::string("gmm oracle: ") + which + " weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(Errc::config, std::string("gmm oracle: ") + which + " weights must sum to 1");
  for (const Image& mu : m.means)
    if (!mu.same_shape(m.means.front())) fail(Errc::config, "gmm oracle: component means differ in shape");
}

}  // namespace

GmmOracle::GmmOracle(NoiseSchedule schedule, GaussianMixture cond, GaussianMixture uncond, double gamma)
    : ScoreOracle(std::move(schedule)), cond_(std::move(cond)), uncond_(std::move(uncond)), gamma_(gamma) {
  check_mixture(cond_, "conditional");
  check_mixture(uncond_, "unconditional");
  if (!cond_.means.front().same_shape(uncond_.means.front()))
    fail(Errc::config, "gmm oracle: conditional and unconditional means differ in shape");
  if (!(gamma_ > 0)) fail(Errc::config, "gmm oracle: gamma must be positive");
}

Image GmmOracle::posterior_mean(const Image& x_t, bool conditional, int t) const {
  check_t(t);
  const GaussianMixture& mix = conditional ? cond_ : uncond_;
  if (!x_t.same_shape(mix.means.front())) fail(Errc::backend, "gmm oracle: shape mismatch");
  const double a = schedule().alpha[t], s = schedule().sigma[t];
  const double var = a * a * gamma_ * gamma_ + s * s;
  const std::size_t m = mix.means.size();

  std::vector<double> logr(m);
  for (std::size_t c = 0; c < m; ++c) {
    double d2 = 0;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      const double d = x_t.data[i] - a * mix.means[c].data[i];
      d2 += d * d;
    }
    logr[c] = std::log(mix.weights[c]) - d2 / (2 * var);
  }
  const double mx = *std::max_element(logr.begin(), logr.end());
  double z = 0;
  for (double& l : logr) z += l = std::exp(l - mx);

  const double gain = a * gamma_ * gamma_ / var;
  Image mean(x_t.height, x_t.width, x_t.channels);
  for (std::size_t c = 0; c < m; ++c) {
    const double r = logr[c] / z;
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      const double mu = mix.means[c].data[i];
      mean.data[i] += r * (mu + gain * (x_t.data[i] - a * mu));
    }
  }
  return mean;
}

Image GmmOracle::predict_noise(const Image& x_t, bool conditional, int t) const {
  const Image mean = posterior_mean(x_t, conditional, t);
  const double a = schedule().alpha[t], s = schedule().sigma[t];
  Image eps = x_t;
  for (std::size_t i = 0; i < eps.size(); ++i) eps.data[i] = (x_t.data[i] - a * mean.data[i]) / s;
  return eps;
}

void TimestepSampler::validate(int schedule_steps) const {
  if (!(0 < a && a < b_end && b_end <= b_start && b_start <= schedule_steps))
    fail(Errc::config, "timestep bounds must satisfy 0 < a < b_end <= b_start <= T");
}

int TimestepSampler::upper(long step, long total_steps) const {
  const double half = total_steps / 2.0;
  if (total_steps <= 0 || step >= half) return b_end;
  const double frac = static_cast<double>(step) / half;
  return static_cast<int>(std::lround(b_start + (b_end - b_start) * frac));
}

int TimestepSampler::sample(long step, long total_steps, std::mt19937_64& rng) const {
  return std::uniform_int_distribution<int>(a, upper(step, total_steps))(rng);
}

}  // namespace pxd
