#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "augment.hpp"
#include "error.hpp"
#include "generator.hpp"
#include "guidance.hpp"
#include "loss.hpp"

namespace pxd {

namespace {

constexpr double kStep = 1e-3;
// Entries below 1e-4 of the largest component are compared against that
// floor; their finite differences are dominated by rounding of the loss.
constexpr double kRelFloor = 1e-4;

std::vector<double> central_difference(std::vector<double> x, const std::function<double(const std::vector<double>&)>& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    const auto at = [&](double d) {
      x[i] = x0 + d;
      return f(x);
    };
    g[i] = (8 * (at(kStep) - at(-kStep)) - (at(2 * kStep) - at(-2 * kStep))) / (12 * kStep);
    x[i] = x0;
  }
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Image random_image(int h, int w, int c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(h, w, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

Palette random_palette(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<Rgb> colors;
  while (static_cast<int>(colors.size()) < n) {
    Rgb c{byte(rng) / 255.0, byte(rng) / 255.0, byte(rng) / 255.0};
    if (std::find(colors.begin(), colors.end(), c) == colors.end()) colors.push_back(c);
  }
  return Palette::from_colors(colors, "gradcheck");
}

ProbField gumbel_weights(const LogitField& theta, const LogitField& noise, double tau) {
  LogitField shifted = theta;
  for (std::size_t i = 0; i < shifted.values.size(); ++i) shifted.values[i] += noise.values[i];
  return softmax_probs(shifted, 1.0 / tau);
}

GradcheckStage stage(std::string name, double error, double threshold) {
  return {std::move(name), error, threshold, std::isfinite(error) && error < threshold};
}

}  // namespace

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double rel_floor) {
  if (analytic.size() != numeric.size()) fail(Errc::invalid_argument, "gradient sizes differ");
  double scale = 0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(rel_floor * scale, 1e-300);
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  if (opt.classes < 2) fail(Errc::config, "gradcheck: a palette needs at least 2 elements, got " + std::to_string(opt.classes));
  if (opt.size < 2 || opt.size > 8) fail(Errc::config, "gradcheck: size must be between 2 and 8");
  const int h = opt.size, w = opt.size, n = opt.classes;
  std::mt19937_64 rng(opt.seed);
  const Palette palette = random_palette(n, rng);
  const LogitField theta0 = init_random(h, w, n, rng(), 1.0);

  GradcheckReport report;

  // Generator: L = <u, render(weights(theta))>.
  {
    const Image u = random_image(h, w, 3, rng, -1, 1);
    const auto loss = [&](const std::vector<double>& v) {
      LogitField t = theta0;
      t.values = v;
      return dot(render_blend(softmax_probs(t), palette).data, u.data);
    };
    const LogitField g = backprop_to_logits(u, softmax_probs(theta0), palette);
    report.stages.push_back(
        stage("generator.softmax", max_relative_error(g.values, central_difference(theta0.values, loss), kRelFloor), 1e-6));
  }
  {
    const double tau = 0.7;
    const GumbelDraw draw = gumbel_sample(theta0, tau, rng());
    const Image u = random_image(h, w, 3, rng, -1, 1);
    const auto loss = [&](const std::vector<double>& v) {
      LogitField t = theta0;
      t.values = v;
      return dot(render_blend(gumbel_weights(t, draw.noise, tau), palette).data, u.data);
    };
    const LogitField g = backprop_to_logits(u, draw.weights, palette, 1.0 / tau);
    report.stages.push_back(
        stage("generator.gumbel", max_relative_error(g.values, central_difference(theta0.values, loss), kRelFloor), 1e-6));
  }

  // Augmentation: every flag on, upscaling to 2x.
  AugmentConfig acfg;
  acfg.p_gray = acfg.p_flip = acfg.p_persp = 1.0;
  const AugmentSample sample = sample_augment(acfg, 2 * h, 2 * w, rng());
  {
    const Image v = random_image(h, w, 3, rng);
    const Image u = random_image(2 * h, 2 * w, 3, rng, -1, 1);
    const auto loss = [&](const std::vector<double>& x) {
      Image img = v;
      img.data = x;
      return dot(apply(sample, img).data, u.data);
    };
    const Image g = vjp(sample, u, h, w);
    report.stages.push_back(
        stage("augment.vjp", max_relative_error(g.data, central_difference(v.data, loss), kRelFloor), 1e-6));
    const double lhs = dot(apply(sample, v).data, u.data);
    const double rhs = dot(v.data, g.data);
    report.stages.push_back(stage("augment.adjoint", std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-9));
  }

  // FFT loss on a random image.
  {
    const FftMask mask = make_fft_mask(h, w);
    const Image x = random_image(h, w, 3, rng);
    const auto loss = [&](const std::vector<double>& v) {
      Image img = x;
      img.data = v;
      return fft_loss(img, mask).value;
    };
    const FftLoss fl = fft_loss(x, mask);
    report.stages.push_back(
        stage("fft", max_relative_error(fl.grad.data, central_difference(x.data, loss), kRelFloor), 1e-5));
  }

  // Full step against a delta oracle. Its gradient terms are those of
  //   (w a / 2 sigma) ||x_aug - c||^2 + s <w a (u - c) / sigma, x_aug> + w_fft L_FFT(x).
  {
    const NoiseSchedule schedule = make_linear_schedule();
    const Image target_c = random_image(2 * h, 2 * w, 3, rng);
    const Image target_u = random_image(2 * h, 2 * w, 3, rng);
    DeltaOracle oracle(schedule, target_c, target_u);
    const LossWeights weights{};
    const FftMask mask = make_fft_mask(h, w);
    const GeneratorOptions gen{};

    StepDraws draws;
    draws.gumbel = gumbel_sample(theta0, gen.tau, rng());
    draws.augment = sample;
    draws.t = 500;
    std::normal_distribution<double> normal;
    draws.eps = Image(2 * h, 2 * w, 3);
    for (double& v : draws.eps.data) v = normal(rng);

    const Condition cond;
    StepOutput out = lsds_gradient(theta0, palette, oracle, draws, cond, weights, mask, gen);
    if (opt.inject_sign_error)
      for (double& v : out.grad.values) v = -v;

    const double a = schedule.alpha[draws.t], sg = schedule.sigma[draws.t], wt = schedule.weight[draws.t];
    const auto objective = [&](const std::vector<double>& v) {
      LogitField t = theta0;
      t.values = v;
      const Image x = render_blend(gumbel_weights(t, draws.gumbel->noise, gen.tau), palette);
      const Image xa = apply(sample, x);
      double noise = 0, sem = 0;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        const double r = xa.data[i] - target_c.data[i];
        noise += r * r;
        sem += (target_u.data[i] - target_c.data[i]) * xa.data[i];
      }
      return wt * a / (2 * sg) * noise + weights.s * wt * a / sg * sem + weights.w_fft * fft_loss(x, mask).value;
    };
    report.stages.push_back(stage(
        "pipeline", max_relative_error(out.grad.values, central_difference(theta0.values, objective), kRelFloor), 1e-4));
  }

  report.pass = std::all_of(report.stages.begin(), report.stages.end(), [](const auto& s) { return s.pass; });
  return report;
}

}  // namespace pxd
