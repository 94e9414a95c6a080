#include <doctest.h>

#include <random>

#include "augment.hpp"
#include "generator.hpp"
#include "guidance.hpp"
#include "loss.hpp"
#include "oracles.hpp"
#include "reference_step.hpp"
#include "test_util.hpp"

using namespace pxd;

namespace {

Palette three() { return Palette::from_colors({{0.1, 0.2, 0.9}, {0.8, 0.3, 0.1}, {0.5, 0.9, 0.4}}); }

LogitField field(int h, int w, int n, std::mt19937_64& rng) {
  LogitField f(h, w, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : f.values) v = normal(rng);
  return f;
}

StepDraws frozen(const LogitField& theta, std::mt19937_64& rng, int th, int tw, bool gumbel = true) {
  StepDraws d;
  if (gumbel) d.gumbel = gumbel_sample(theta, 1.0, rng());
  AugmentConfig a;
  a.p_gray = a.p_flip = a.p_persp = 0.5;
  d.augment = sample_augment(a, th, tw, rng());
  d.t = std::uniform_int_distribution<int>(20, 980)(rng);
  d.eps = oracle::random_image(th, tw, 3, rng, -2, 2);
  return d;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("default mask radius and layout") {
    CHECK(make_fft_mask(64, 64).radius == 8);
    CHECK(make_fft_mask(8, 8).radius == 1);
    CHECK(make_fft_mask(4, 12).radius == 1);
    const FftMask m = make_fft_mask(8, 8);
    CHECK(m.m[4 * 8 + 4] == 0.0);
    CHECK(m.m[4 * 8 + 5] == 0.0);
    CHECK(m.m[5 * 8 + 5] == 1.0);
    CHECK(m.l1 == 64 - 5);
    CHECK_PXD_ERROR(make_fft_mask(4, 4, 100.0), Errc::config, "masks every frequency");
  }

  TEST_CASE("constant image has zero loss and gradient") {
    const FftLoss l = fft_loss(Image(8, 8, 3, 0.6), make_fft_mask(8, 8));
    CHECK(l.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(oracle::max_abs(l.grad.data) < 1e-12);
  }

  TEST_CASE("impulse at 8x8, r0 = 1, against the direct DFT") {
    Image x(8, 8, 3, 0.0);
    for (int c = 0; c < 3; ++c) x.at(3, 5, c) = 1.0;
    const double ref = oracle::fft_loss(x, 1.0);
    CHECK(std::abs(fft_loss(x, make_fft_mask(8, 8, 1.0)).value - ref) < 1e-9);
    CHECK(ref == doctest::Approx(1.0));
  }

  TEST_CASE("random images of even and odd size against the direct DFT") {
    std::mt19937_64 rng(1);
    for (auto [h, w, r] : {std::tuple{8, 8, 1.0}, std::tuple{7, 9, 1.5}, std::tuple{6, 10, 2.0}, std::tuple{5, 5, 1.0}}) {
      const Image x = oracle::random_image(h, w, 3, rng);
      CHECK(std::abs(fft_loss(x, make_fft_mask(h, w, r)).value - oracle::fft_loss(x, r)) < 1e-9);
    }
  }

  TEST_CASE("gradient matches finite differences at 8x8") {
    std::mt19937_64 rng(2);
    const Image x = oracle::random_image(8, 8, 3, rng);
    const FftMask mask = make_fft_mask(8, 8);
    auto loss = [&](const std::vector<double>& v) {
      Image img = x;
      img.data = v;
      return fft_loss(img, mask).value;
    };
    CHECK(oracle::max_rel_error(fft_loss(x, mask).grad.data, oracle::fd_gradient(x.data, loss)) < 1e-5);
  }

  TEST_CASE("flip invariance") {
    std::mt19937_64 rng(3);
    for (auto [h, w] : {std::pair{8, 8}, std::pair{7, 10}}) {
      const Image x = oracle::random_image(h, w, 3, rng);
      Image hf = x, vf = x;
      for (int y = 0; y < h; ++y)
        for (int j = 0; j < w; ++j)
          for (int c = 0; c < 3; ++c) {
            hf.at(y, j, c) = x.at(y, w - 1 - j, c);
            vf.at(y, j, c) = x.at(h - 1 - y, j, c);
          }
      const FftMask m = make_fft_mask(h, w);
      const double base = fft_loss(x, m).value;
      CHECK(std::abs(fft_loss(hf, m).value - base) < 1e-9);
      CHECK(std::abs(fft_loss(vf, m).value - base) < 1e-9);
    }
  }

  TEST_CASE("mask size mismatch is an error") {
    CHECK_THROWS_AS(fft_loss(Image(8, 8, 3), make_fft_mask(4, 8)), pxd::Error);
  }

  TEST_CASE("s = 0, w_fft = 0 with a target equal to the augmented render gives zero gradient") {
    std::mt19937_64 rng(4);
    const Palette p = three();
    const LogitField theta = field(4, 4, 3, rng);
    const StepDraws d = frozen(theta, rng, 8, 8);
    const Image target = apply(d.augment, render_blend(d.gumbel->weights, p));
    DeltaOracle o(make_linear_schedule(), target, oracle::random_image(8, 8, 3, rng));
    const Condition cond;
    const StepOutput out = lsds_gradient(theta, p, o, d, cond, LossWeights{0.0, 0.0}, make_fft_mask(4, 4), {});
    CHECK(oracle::max_abs(out.grad.values) < 1e-12);
  }

  TEST_CASE("guidance scale and smoothness weight enter linearly") {
    std::mt19937_64 rng(5);
    const Palette p = three();
    const LogitField theta = field(4, 4, 3, rng);
    const StepDraws d = frozen(theta, rng, 8, 8);
    DeltaOracle o(make_linear_schedule(), oracle::random_image(8, 8, 3, rng), oracle::random_image(8, 8, 3, rng));
    const Condition cond;
    const FftMask mask = make_fft_mask(4, 4);
    const auto g0 = lsds_gradient(theta, p, o, d, cond, {0.0, 0.0}, mask, {}).grad.values;
    const auto g1 = lsds_gradient(theta, p, o, d, cond, {1.0, 0.0}, mask, {}).grad.values;
    const auto g40 = lsds_gradient(theta, p, o, d, cond, {40.0, 0.0}, mask, {}).grad.values;
    const auto gf = lsds_gradient(theta, p, o, d, cond, {40.0, 20.0}, mask, {}).grad.values;
    const FftLoss fl = fft_loss(render_blend(d.gumbel->weights, p), mask);
    Image scaled = fl.grad;
    for (double& v : scaled.data) v *= 20.0;
    const auto gfft = backprop_to_logits(scaled, d.gumbel->weights, p).values;
    for (std::size_t i = 0; i < g0.size(); ++i) {
      CHECK(std::abs(g40[i] - (g0[i] + 40 * (g1[i] - g0[i]))) < 1e-9);
      CHECK(std::abs(gf[i] - (g40[i] + gfft[i])) < 1e-9);
    }
  }

  TEST_CASE("decomposition matches the monolithic guided residual for both oracles") {
    std::mt19937_64 rng(6);
    const Palette p = three();
    const NoiseSchedule s = make_linear_schedule();
    DeltaOracle delta(s, oracle::random_image(8, 8, 3, rng), oracle::random_image(8, 8, 3, rng));
    GaussianMixture cm{{oracle::random_image(8, 8, 3, rng), oracle::random_image(8, 8, 3, rng)}, {0.6, 0.4}};
    GaussianMixture um{{oracle::random_image(8, 8, 3, rng)}, {1.0}};
    GmmOracle gmm(s, cm, um, 0.2);
    const Condition cond;
    for (ScoreOracle* o : {static_cast<ScoreOracle*>(&delta), static_cast<ScoreOracle*>(&gmm)}) {
      for (int trial = 0; trial < 5; ++trial) {
        const LogitField theta = field(4, 4, 3, rng);
        const StepDraws d = frozen(theta, rng, 8, 8, trial % 2 == 0);
        const auto g = lsds_gradient(theta, p, *o, d, cond, {40.0, 0.0}, make_fft_mask(4, 4), {}).grad.values;
        const auto m = oracle::monolithic_gradient(theta, p, *o, d, 40.0).values;
        CHECK(oracle::max_abs_diff(g, m) < 1e-9);
      }
    }
  }

  TEST_CASE("diagnostics carry per-term norms and the FFT loss") {
    std::mt19937_64 rng(7);
    const Palette p = three();
    const LogitField theta = field(4, 4, 3, rng);
    const StepDraws d = frozen(theta, rng, 4, 4);
    DeltaOracle o(make_linear_schedule(), oracle::random_image(4, 4, 3, rng), oracle::random_image(4, 4, 3, rng));
    const Condition cond;
    const FftMask mask = make_fft_mask(4, 4);
    const StepOutput out = lsds_gradient(theta, p, o, d, cond, {}, mask, {});
    const auto& dg = out.diagnostics;
    CHECK(dg.t == d.t);
    CHECK(dg.grad_norm_noise == doctest::Approx(std::sqrt(oracle::dot(dg.grad_image_noise.data, dg.grad_image_noise.data))));
    CHECK(dg.grad_norm_sem == doctest::Approx(std::sqrt(oracle::dot(dg.grad_image_sem.data, dg.grad_image_sem.data))));
    CHECK(dg.fft_loss == doctest::Approx(fft_loss(render_blend(d.gumbel->weights, p), mask).value));
    for (double v : out.grad.values) CHECK(std::isfinite(v));
  }

  TEST_CASE("full step matches finite differences of the delta-oracle surrogate") {
    std::mt19937_64 rng(8);
    const Palette p = three();
    const NoiseSchedule s = make_linear_schedule();
    const LogitField theta = field(4, 4, 3, rng);
    StepDraws d = frozen(theta, rng, 8, 8);
    const Image c = oracle::random_image(8, 8, 3, rng), u = oracle::random_image(8, 8, 3, rng);
    DeltaOracle o(s, c, u);
    const Condition cond;
    const LossWeights lw{};
    const FftMask mask = make_fft_mask(4, 4);
    const auto g = lsds_gradient(theta, p, o, d, cond, lw, mask, {}).grad.values;
    const double a = s.alpha[d.t], sg = s.sigma[d.t], w = s.weight[d.t];
    auto objective = [&](const std::vector<double>& v) {
      LogitField wts = theta;
      for (int q = 0; q < theta.pixels(); ++q) {
        std::vector<double> z(3);
        for (int k = 0; k < 3; ++k) z[k] = v[q * 3 + k] + d.gumbel->noise.pixel(q)[k];
        const auto sm = oracle::softmax(z);
        for (int k = 0; k < 3; ++k) wts.pixel(q)[k] = sm[k];
      }
      const Image x = render_blend(wts, p);
      const Image xa = apply(d.augment, x);
      double quad = 0, lin = 0;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        quad += (xa.data[i] - c.data[i]) * (xa.data[i] - c.data[i]);
        lin += (u.data[i] - c.data[i]) * xa.data[i];
      }
      return w * a / (2 * sg) * quad + lw.s * w * a / sg * lin + lw.w_fft * oracle::fft_loss(x, mask.radius);
    };
    CHECK(oracle::max_rel_error(g, oracle::fd_gradient(theta.values, objective)) < 1e-4);
  }

  TEST_CASE("lsds_step is a pure function of the step index") {
    std::mt19937_64 rng(9);
    const Palette p = three();
    const LogitField theta = field(4, 4, 3, rng);
    DeltaOracle o(make_linear_schedule(), oracle::random_image(4, 4, 3, rng), oracle::random_image(4, 4, 3, rng));
    const Condition cond;
    const AugmentConfig aug{};
    const LossWeights lw{};
    const FftMask mask = make_fft_mask(4, 4);
    const GeneratorOptions gen{};
    const TimestepSampler ts{};
    const StepContext ctx{p, o, cond, aug, lw, mask, gen, ts, RngStreams{17}};
    const auto a = lsds_step(theta, ctx, 3, 10).grad;
    const auto b = lsds_step(theta, ctx, 3, 10).grad;
    CHECK(a == b);
    CHECK(!(lsds_step(theta, ctx, 4, 10).grad == a));
  }

  TEST_CASE("straight-through renders argmax forward") {
    std::mt19937_64 rng(10);
    const Palette p = three();
    const LogitField theta = field(4, 4, 3, rng);
    StepDraws d = frozen(theta, rng, 4, 4);
    d.augment = identity_augment(4, 4);
    const Image hard = render_indices(argmax_indices(d.gumbel->weights), 4, 4, p);
    DeltaOracle o(make_linear_schedule(), hard, hard);
    GeneratorOptions st;
    st.straight_through = true;
    const Condition cond;
    const auto out = lsds_gradient(theta, p, o, d, cond, {0.0, 0.0}, make_fft_mask(4, 4), st);
    CHECK(oracle::max_abs(out.grad.values) < 1e-12);
  }

  TEST_CASE("weights validation") {
    CHECK_THROWS_AS((LossWeights{-1.0, 0.0}.validate()), pxd::Error);
    CHECK_THROWS_AS((LossWeights{1.0, -2.0}.validate()), pxd::Error);
  }
}
