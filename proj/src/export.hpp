#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"
#include "palette.hpp"

namespace pxd {

// The fixed 64-glyph chart alphabet: digits, uppercase letters, then
// geometric shapes. Each entry is one UTF-8 encoded code point.
std::span<const std::string> chart_alphabet();

struct LegendEntry {
  std::string symbol;
  int palette_index = 0;
  std::string hex;
  long count = 0;
};

struct StitchChart {
  int height = 0;
  int width = 0;
  std::vector<int> grid;  // row-major, index into legend
  std::vector<LegendEntry> legend;
  std::string title;
};

inline constexpr int kChartCell = 20;
inline constexpr int kChartBoldEvery = 10;
inline constexpr const char* kDefaultChartTitle = "Cross-stitch chart";

// Symbols go to palette indices by descending cell count (ties: lower index).
// Only used indices appear in the legend.
StitchChart make_chart(std::span<const int> indices, int height, int width, const Palette& palette,
                       std::string title = {});
std::string render_chart_svg(const StitchChart& chart);
// "i,j,index" per cell, row-major, with a header line.
std::string chart_csv(std::span<const int> indices, int height, int width);

Image render_mosaic(std::span<const int> indices, int height, int width, const Palette& palette);

// Recovers grid indices from a rendered argmax image by exact (8-bit) match
// of every cell against the palette elements.
std::vector<int> indices_from_render(const Image& render, const Palette& palette, int& height, int& width);

}  // namespace pxd
