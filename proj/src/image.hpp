#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pxd {

// Row-major H×W×C array of doubles. Values are nominally in [0,1] for
// pixel images; gradient images reuse the same container unclamped.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }
  bool same_shape(const Image& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }

  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) noexcept { return data[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const noexcept { return data[index(y, x, c)]; }

  std::span<double> pixel(int y, int x) noexcept { return {data.data() + index(y, x), static_cast<std::size_t>(channels)}; }
  std::span<const double> pixel(int y, int x) const noexcept {
    return {data.data() + index(y, x), static_cast<std::size_t>(channels)};
  }

  bool operator==(const Image&) const = default;
};

}  // namespace pxd
