#include "augment.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "error.hpp"
#include "imaging.hpp"

namespace pxd {

void AugmentConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_gray) || !prob(p_flip) || !prob(p_persp))
    fail(Errc::config, "augment: probabilities must lie in [0,1]");
  if (!prob(distortion_scale)) fail(Errc::config, "augment: distortion_scale must lie in [0,1]");
  if (target_height < 0 || target_width < 0) fail(Errc::config, "augment: target size must be >= 0");
}

AugmentSample identity_augment(int target_height, int target_width) {
  AugmentSample s;
  s.target_height = target_height;
  s.target_width = target_width;
  return s;
}

bool homography_from_points(const std::array<std::array<double, 2>, 4>& from,
                            const std::array<std::array<double, 2>, 4>& to, Homography& out) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = from[i][0], y = from[i][1], u = to[i][0], v = to[i][1];
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) return false;
  Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  if (!m.allFinite() || std::abs(m.determinant()) <= 1e-9) return false;
  for (int i = 0; i < 9; ++i) out[i] = m(i / 3, i % 3);
  return true;
}

AugmentSample sample_augment(const AugmentConfig& cfg, int target_height, int target_width, std::uint64_t seed) {
  cfg.validate();
  AugmentSample s = identity_augment(target_height, target_width);
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  s.gray = unit(rng) < cfg.p_gray;
  s.flip = unit(rng) < cfg.p_flip;
  s.perspective = unit(rng) < cfg.p_persp;
  if (!s.perspective || cfg.distortion_scale == 0.0) return s;

  const double w = target_width - 1.0, h = target_height - 1.0;
  const double dx = cfg.distortion_scale * target_width / 2.0;
  const double dy = cfg.distortion_scale * target_height / 2.0;
  const std::array<std::array<double, 2>, 4> corners{{{0, 0}, {w, 0}, {w, h}, {0, h}}};
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::uniform_real_distribution<double> ux(0.0, dx), uy(0.0, dy);
    std::array<std::array<double, 2>, 4> moved;
    moved[0] = {ux(rng), uy(rng)};
    moved[1] = {w - ux(rng), uy(rng)};
    moved[2] = {w - ux(rng), h - uy(rng)};
    moved[3] = {ux(rng), h - uy(rng)};
    // Output pixels at the moved corners sample the original corners.
    if (homography_from_points(moved, corners, s.homography)) return s;
  }
  s.homography = kIdentityHomography;
  return s;
}

namespace {

struct BilinearTaps {
  int y[4], x[4];
  double w[4];
};

BilinearTaps taps_at(const Homography& hm, int oy, int ox) {
  const double den = hm[6] * ox + hm[7] * oy + hm[8];
  const double u = (hm[0] * ox + hm[1] * oy + hm[2]) / den;
  const double v = (hm[3] * ox + hm[4] * oy + hm[5]) / den;
  const double x0 = std::floor(u), y0 = std::floor(v);
  const double fx = u - x0, fy = v - y0;
  const int ix = static_cast<int>(x0), iy = static_cast<int>(y0);
  return {{iy, iy, iy + 1, iy + 1},
          {ix, ix + 1, ix, ix + 1},
          {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy}};
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image gray_forward(const Image& img) {
  Image out(img.height, img.width, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double l = 0;
      for (int c = 0; c < 3; ++c) l += kLumaWeights[c] * img.at(y, x, c);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = l;
    }
  return out;
}

Image gray_transpose(const Image& g) {
  Image out(g.height, g.width, 3);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double sum = g.at(y, x, 0) + g.at(y, x, 1) + g.at(y, x, 2);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = kLumaWeights[c] * sum;
    }
  return out;
}

}  // namespace

Image apply(const AugmentSample& sample, const Image& image, const Rgb& fill) {
  const int th = sample.target_height > 0 ? sample.target_height : image.height;
  const int tw = sample.target_width > 0 ? sample.target_width : image.width;
  Image out = bilinear_resize(image, th, tw);
  if (sample.flip) out = flip_horizontal(out);
  if (sample.perspective && sample.homography != kIdentityHomography) {
    Image warped(th, tw, out.channels);
    const double fill_gray = kLumaWeights[0] * fill[0] + kLumaWeights[1] * fill[1] + kLumaWeights[2] * fill[2];
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) {
        const BilinearTaps t = taps_at(sample.homography, y, x);
        for (int c = 0; c < out.channels; ++c) {
          double acc = 0;
          const double fc = out.channels == 3 ? fill[c] : fill_gray;
          for (int i = 0; i < 4; ++i) {
            if (t.y[i] >= 0 && t.y[i] < th && t.x[i] >= 0 && t.x[i] < tw)
              acc += t.w[i] * out.at(t.y[i], t.x[i], c);
            else
              acc += t.w[i] * fc;
          }
          warped.at(y, x, c) = acc;
        }
      }
    out = std::move(warped);
  }
  if (sample.gray && out.channels == 3) out = gray_forward(out);
  return out;
}

Image vjp(const AugmentSample& sample, const Image& dl_dy, int src_height, int src_width) {
  const int th = sample.target_height > 0 ? sample.target_height : src_height;
  const int tw = sample.target_width > 0 ? sample.target_width : src_width;
  if (dl_dy.height != th || dl_dy.width != tw)
    fail(Errc::invalid_argument, "augment vjp: gradient is " + std::to_string(dl_dy.height) + "x" +
                                     std::to_string(dl_dy.width) + ", expected " + std::to_string(th) + "x" +
                                     std::to_string(tw));
  Image g = dl_dy;
  if (sample.gray && g.channels == 3) g = gray_transpose(g);
  if (sample.perspective && sample.homography != kIdentityHomography) {
    Image back(th, tw, g.channels);
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) {
        const BilinearTaps t = taps_at(sample.homography, y, x);
        for (int i = 0; i < 4; ++i) {
          if (t.y[i] < 0 || t.y[i] >= th || t.x[i] < 0 || t.x[i] >= tw) continue;
          for (int c = 0; c < g.channels; ++c) back.at(t.y[i], t.x[i], c) += t.w[i] * g.at(y, x, c);
        }
      }
    g = std::move(back);
  }
  if (sample.flip) g = flip_horizontal(g);
  return bilinear_resize_transpose(g, src_height, src_width);
}

}  // namespace pxd
