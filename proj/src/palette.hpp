#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "image.hpp"

namespace pxd {

using Rgb = std::array<double, 3>;

// n >= 2 distinct elements of identical h×w, RGB in [0,1]. Plain color
// palettes have h = w = 1; mosaic palettes hold image tiles.
class Palette {
 public:
  Palette() = default;
  // Validates the invariants; throws Errc::palette on violation.
  Palette(std::vector<Image> elements, std::string name = {});
  static Palette from_colors(const std::vector<Rgb>& colors, std::string name = {});

  std::size_t size() const noexcept { return elements_.size(); }
  int tile_height() const noexcept { return tile_h_; }
  int tile_width() const noexcept { return tile_w_; }
  bool is_tiled() const noexcept { return tile_h_ > 1 || tile_w_ > 1; }
  const std::string& name() const noexcept { return name_; }

  const Image& element(std::size_t k) const { return elements_.at(k); }
  const std::vector<Image>& elements() const noexcept { return elements_; }
  // Mean color of element k; the color itself for plain palettes.
  Rgb mean_color(std::size_t k) const;

  bool operator==(const Palette& o) const { return elements_ == o.elements_; }

 private:
  std::vector<Image> elements_;
  std::string name_;
  int tile_h_ = 1;
  int tile_w_ = 1;
};

// One `#RRGGBB` per line; lines starting with `;` and blank lines are skipped.
Palette parse_palette(std::string_view text, std::string name = {});
Palette load_palette_file(const std::filesystem::path& path);
// Plain palettes only; values are rounded to the nearest byte.
std::string serialize_palette(const Palette& palette);
std::string to_hex(const Rgb& color);

// K-means over the pixel color multiset: k-means++ seeding, Lloyd iterations
// until the largest centroid move drops below 1e-6 (max 200 iterations).
// Centroids are returned in descending order of cluster population.
Palette kmeans_palette(const Image& image, int n, std::uint64_t seed);

// Every PNG in `dir`, sorted by filename; all must share one size.
Palette load_tile_palette(const std::filesystem::path& dir);

}  // namespace pxd
