#include "imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "error.hpp"

namespace pxd {

namespace {

struct Tap {
  int i0, i1;
  double w0, w1;
};

std::vector<Tap> resize_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(static_cast<int>(src), in - 1);
    double frac = src - i0;
    int i1 = i0 < in - 1 ? i0 + 1 : i0;
    if (i1 == i0) frac = 0.0;
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

Image bilinear_resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) fail(Errc::invalid_argument, "bilinear_resize: target size must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  const auto ty = resize_taps(img.height, out_h);
  const auto tx = resize_taps(img.width, out_w);
  Image out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = a.w0 * (b.w0 * img.at(a.i0, b.i0, c) + b.w1 * img.at(a.i0, b.i1, c)) +
                          a.w1 * (b.w0 * img.at(a.i1, b.i0, c) + b.w1 * img.at(a.i1, b.i1, c));
      }
    }
  }
  return out;
}

Image bilinear_resize_transpose(const Image& grad, int src_h, int src_w) {
  if (grad.height == src_h && grad.width == src_w) return grad;
  const auto ty = resize_taps(src_h, grad.height);
  const auto tx = resize_taps(src_w, grad.width);
  Image out(src_h, src_w, grad.channels);
  for (int y = 0; y < grad.height; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < grad.width; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < grad.channels; ++c) {
        const double g = grad.at(y, x, c);
        out.at(a.i0, b.i0, c) += a.w0 * b.w0 * g;
        out.at(a.i0, b.i1, c) += a.w0 * b.w1 * g;
        out.at(a.i1, b.i0, c) += a.w1 * b.w0 * g;
        out.at(a.i1, b.i1, c) += a.w1 * b.w1 * g;
      }
    }
  }
  return out;
}

Image luminance(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(y, x) = kLumaWeights[0] * img.at(y, x, 0) + kLumaWeights[1] * img.at(y, x, 1) +
                     kLumaWeights[2] * img.at(y, x, 2);
  return out;
}

Image replicate_channels(const Image& gray, int channels) {
  if (gray.channels != 1) fail(Errc::invalid_argument, "replicate_channels expects a single-channel image");
  Image out(gray.height, gray.width, channels);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x)
      for (int c = 0; c < channels; ++c) out.at(y, x, c) = gray.at(y, x);
  return out;
}

Image gaussian_blur(const Image& img, double sigma, int radius) {
  if (sigma <= 0 || radius <= 0) return img;
  const auto k = gaussian_kernel(sigma, radius);
  Image tmp(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int xx = std::clamp(x + i, 0, img.width - 1);
          acc += k[i + radius] * img.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int yy = std::clamp(y + i, 0, img.height - 1);
          acc += k[i + radius] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = acc;
      }
  return out;
}

Image canny(const Image& img, const CannyParams& params) {
  if (!(params.low >= 0 && params.low < params.high && params.high <= 1))
    fail(Errc::invalid_argument, "canny: thresholds must satisfy 0 <= low < high <= 1");
  const int h = img.height, w = img.width;
  const Image smooth =
      gaussian_blur(luminance(img), params.pre_sigma, static_cast<int>(std::ceil(3 * params.pre_sigma)));
  auto px = [&](int y, int x) { return smooth.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };

  std::vector<double> mag(static_cast<std::size_t>(h) * w), angle(mag.size());
  double max_mag = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                  (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                  (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = std::sqrt(gx * gx + gy * gy);
      angle[i] = std::atan2(gy, gx);
      max_mag = std::max(max_mag, mag[i]);
    }
  Image edges(h, w, 1);
  if (max_mag <= 0) return edges;

  auto m = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + x];
  };
  // Non-maximum suppression along one of four quantized directions. Ties
  // keep the pixel on the negative side so a symmetric ridge stays one pixel wide.
  std::vector<double> thin(mag.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (mag[i] <= 0) continue;
      double deg = angle[i] * 180.0 / M_PI;
      if (deg < 0) deg += 180.0;
      int dx, dy;
      if (deg < 22.5 || deg >= 157.5) {
        dx = 1, dy = 0;
      } else if (deg < 67.5) {
        dx = 1, dy = 1;
      } else if (deg < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      if (mag[i] > m(y - dy, x - dx) && mag[i] >= m(y + dy, x + dx)) thin[i] = mag[i];
    }

  const double hi = params.high * max_mag, lo = params.low * max_mag;
  std::vector<char> mark(mag.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < thin.size(); ++i)
    if (thin[i] >= hi && thin[i] > 0) {
      mark[i] = 1;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    std::size_t i = queue.front();
    queue.pop_front();
    int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
    for (int oy = -1; oy <= 1; ++oy)
      for (int ox = -1; ox <= 1; ++ox) {
        int yy = y + oy, xx = x + ox;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        std::size_t j = static_cast<std::size_t>(yy) * w + xx;
        if (!mark[j] && thin[j] >= lo && thin[j] > 0) {
          mark[j] = 1;
          queue.push_back(j);
        }
      }
  }
  for (std::size_t i = 0; i < mark.size(); ++i) edges.data[i] = mark[i] ? 1.0 : 0.0;
  if (params.post_blur) edges = gaussian_blur(edges, 1.0, 1);
  return edges;
}

Image pseudo_depth(const Image& img) {
  const double sigma = std::min(img.height, img.width) / 16.0;
  Image d = gaussian_blur(luminance(img), sigma, static_cast<int>(std::ceil(3 * sigma)));
  auto [lo, hi] = std::minmax_element(d.data.begin(), d.data.end());
  const double mn = *lo, range = *hi - *lo;
  if (range < 1e-12) return Image(img.height, img.width, 1, 0.0);
  for (double& v : d.data) v = std::clamp((v - mn) / range, 0.0, 1.0);
  return d;
}

Image upscale_nearest(const Image& img, int factor) {
  if (factor < 1) fail(Errc::invalid_argument, "upscale factor must be >= 1");
  Image out(img.height * factor, img.width * factor, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y / factor, x / factor, c);
  return out;
}

Image heatmap(const Image& scalar) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {0.001, 0.000, 0.014},
      {0.341, 0.062, 0.429},
      {0.735, 0.216, 0.330},
      {0.978, 0.557, 0.035},
      {0.988, 0.998, 0.645},
  }};
  Image out(scalar.height, scalar.width, 3);
  for (int y = 0; y < scalar.height; ++y)
    for (int x = 0; x < scalar.width; ++x) {
      double v = std::clamp(scalar.at(y, x), 0.0, 1.0) * (stops.size() - 1);
      auto lo = std::min(static_cast<std::size_t>(v), stops.size() - 2);
      double f = v - lo;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = (1 - f) * stops[lo][c] + f * stops[lo + 1][c];
    }
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    fail(Errc::io, "cannot read PNG '" + path.string() + "': " + png.message);
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    fail(Errc::io, "unsupported bit depth in '" + path.string() + "' (only 8-bit PNG is supported)");
  }
  const bool color = png.format & PNG_FORMAT_FLAG_COLOR;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr))
    fail(Errc::io, "cannot decode PNG '" + path.string() + "': " + png.message);
  Image img(static_cast<int>(png.height), static_cast<int>(png.width), color ? 3 : 1);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) fail(Errc::invalid_argument, "write_png supports 1 or 3 channels");
  std::vector<std::uint8_t> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
    fail(Errc::io, "cannot write PNG '" + path.string() + "': " + png.message);
}

}  // namespace pxd
