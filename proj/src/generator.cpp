#include "generator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "error.hpp"

namespace pxd {

namespace {

void check_palette(const LogitField& theta, const Palette& palette) {
  if (static_cast<std::size_t>(theta.classes) != palette.size())
    fail(Errc::invalid_argument, "palette size " + std::to_string(palette.size()) + " does not match " +
                                     std::to_string(theta.classes) + " logit classes");
}

}  // namespace

LogitField init_from_image_raw(const Image& image, const Palette& palette, InitNorm norm) {
  if (image.channels != 3) fail(Errc::invalid_argument, "init_from_image expects an RGB image");
  const int n = static_cast<int>(palette.size());
  std::vector<Rgb> colors(n);
  for (int k = 0; k < n; ++k) colors[k] = palette.mean_color(k);
  LogitField theta(image.height, image.width, n);
  for (int p = 0; p < theta.pixels(); ++p) {
    auto px = image.pixel(p / image.width, p % image.width);
    auto out = theta.pixel(p);
    for (int k = 0; k < n; ++k) {
      double acc = 0;
      for (int c = 0; c < 3; ++c) {
        double d = px[c] - colors[k][c];
        acc += norm == InitNorm::l1 ? std::abs(d) : d * d;
      }
      out[k] = -(norm == InitNorm::l1 ? acc : std::sqrt(acc));
    }
  }
  return theta;
}

LogitField init_from_image(const Image& image, const Palette& palette, InitNorm norm) {
  return centered(init_from_image_raw(image, palette, norm));
}

LogitField init_random(int height, int width, int classes, std::uint64_t seed, double scale) {
  if (!(scale > 0)) fail(Errc::invalid_argument, "init_random: scale must be positive");
  if (height < 1 || width < 1 || classes < 2) fail(Errc::invalid_argument, "init_random: bad field shape");
  LogitField theta(height, width, classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : theta.values) v = normal(rng);
  center(theta);
  return theta;
}

ProbField softmax_probs(const LogitField& theta, double inv_temperature) {
  ProbField pi(theta.height, theta.width, theta.classes);
  for (int p = 0; p < theta.pixels(); ++p) {
    auto in = theta.pixel(p);
    auto out = pi.pixel(p);
    double mx = *std::max_element(in.begin(), in.end()) * inv_temperature;
    double sum = 0;
    for (std::size_t k = 0; k < in.size(); ++k) sum += out[k] = std::exp(in[k] * inv_temperature - mx);
    for (double& v : out) v /= sum;
  }
  return pi;
}

GumbelDraw gumbel_sample(const LogitField& theta, double tau, std::uint64_t seed) {
  if (!(tau > 0)) fail(Errc::invalid_argument, "gumbel_sample: tau must be positive");
  GumbelDraw draw;
  draw.seed = seed;
  draw.tau = tau;
  draw.noise = LogitField(theta.height, theta.width, theta.classes);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  LogitField perturbed = theta;
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    double u = std::clamp(uniform(rng), 1e-12, 1.0 - 1e-12);
    draw.noise.values[i] = -std::log(-std::log(u));
    perturbed.values[i] += draw.noise.values[i];
  }
  draw.weights = softmax_probs(perturbed, 1.0 / tau);
  return draw;
}

void center(LogitField& theta) {
  for (int p = 0; p < theta.pixels(); ++p) {
    auto px = theta.pixel(p);
    double mean = 0;
    for (double v : px) mean += v;
    mean /= theta.classes;
    for (double& v : px) v -= mean;
  }
}

LogitField centered(LogitField theta) {
  center(theta);
  return theta;
}

std::vector<int> argmax_indices(const LogitField& field) {
  std::vector<int> idx(field.pixels());
  for (int p = 0; p < field.pixels(); ++p) {
    auto px = field.pixel(p);
    idx[p] = static_cast<int>(std::max_element(px.begin(), px.end()) - px.begin());
  }
  return idx;
}

Image render_blend(const ProbField& weights, const Palette& palette) {
  check_palette(weights, palette);
  const int th = palette.tile_height(), tw = palette.tile_width();
  Image out(weights.height * th, weights.width * tw, 3);
  for (int p = 0; p < weights.pixels(); ++p) {
    const int gi = p / weights.width, gj = p % weights.width;
    auto w = weights.pixel(p);
    for (int k = 0; k < weights.classes; ++k) {
      if (w[k] == 0.0) continue;
      const Image& e = palette.element(k);
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int c = 0; c < 3; ++c) out.at(gi * th + y, gj * tw + x, c) += w[k] * e.at(y, x, c);
    }
  }
  return out;
}

Image render_indices(std::span<const int> indices, int height, int width, const Palette& palette) {
  if (indices.size() != static_cast<std::size_t>(height) * width)
    fail(Errc::invalid_argument, "index field does not match grid size");
  const int th = palette.tile_height(), tw = palette.tile_width();
  Image out(height * th, width * tw, 3);
  for (int p = 0; p < height * width; ++p) {
    if (indices[p] < 0 || static_cast<std::size_t>(indices[p]) >= palette.size())
      fail(Errc::invalid_argument, "palette index " + std::to_string(indices[p]) + " out of range");
    const Image& e = palette.element(indices[p]);
    const int gi = p / width, gj = p % width;
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x)
        for (int c = 0; c < 3; ++c) out.at(gi * th + y, gj * tw + x, c) = e.at(y, x, c);
  }
  return out;
}

Image render(const LogitField& theta, const Palette& palette, RenderMode mode, const GumbelDraw* draw) {
  check_palette(theta, palette);
  switch (mode) {
    case RenderMode::argmax: {
      auto idx = argmax_indices(theta);
      return render_indices(idx, theta.height, theta.width, palette);
    }
    case RenderMode::softmax:
      return render_blend(softmax_probs(theta), palette);
    case RenderMode::gumbel:
      if (draw == nullptr || !draw->weights.same_shape(theta))
        fail(Errc::invalid_argument, "gumbel render needs a draw matching the logit field");
      return render_blend(draw->weights, palette);
  }
  return {};
}

EntropyMap entropy_map(const ProbField& pi) {
  EntropyMap out;
  out.normalized = Image(pi.height, pi.width, 1);
  const double log_n = std::log(static_cast<double>(pi.classes));
  double total = 0;
  for (int p = 0; p < pi.pixels(); ++p) {
    double h = 0;
    for (double v : pi.pixel(p))
      if (v > 0) h -= v * std::log(v);
    h = std::clamp(h / log_n, 0.0, 1.0);
    out.normalized.data[p] = h;
    total += h;
  }
  out.mean = pi.pixels() > 0 ? total / pi.pixels() : 0.0;
  return out;
}

LogitField blend_transpose(const Image& dl_dx, const Palette& palette, int height, int width) {
  const int th = palette.tile_height(), tw = palette.tile_width();
  if (dl_dx.height != height * th || dl_dx.width != width * tw || dl_dx.channels != 3)
    fail(Errc::invalid_argument, "gradient image does not match render dimensions");
  const int n = static_cast<int>(palette.size());
  LogitField v(height, width, n);
  for (int p = 0; p < height * width; ++p) {
    const int gi = p / width, gj = p % width;
    auto out = v.pixel(p);
    for (int k = 0; k < n; ++k) {
      const Image& e = palette.element(k);
      double acc = 0;
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int c = 0; c < 3; ++c) acc += dl_dx.at(gi * th + y, gj * tw + x, c) * e.at(y, x, c);
      out[k] = acc;
    }
  }
  return v;
}

LogitField softmax_vjp(const LogitField& v, const ProbField& weights, double scale) {
  if (!v.same_shape(weights)) fail(Errc::invalid_argument, "softmax_vjp: shape mismatch");
  LogitField out(v.height, v.width, v.classes);
  for (int p = 0; p < v.pixels(); ++p) {
    auto vp = v.pixel(p);
    auto wp = weights.pixel(p);
    auto op = out.pixel(p);
    double dot = 0;
    for (int k = 0; k < v.classes; ++k) dot += vp[k] * wp[k];
    for (int k = 0; k < v.classes; ++k) op[k] = scale * wp[k] * (vp[k] - dot);
  }
  return out;
}

LogitField backprop_to_logits(const Image& dl_dx, const ProbField& weights, const Palette& palette, double scale) {
  check_palette(weights, palette);
  return softmax_vjp(blend_transpose(dl_dx, palette, weights.height, weights.width), weights, scale);
}

}  // namespace pxd
