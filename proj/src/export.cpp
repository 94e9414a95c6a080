#include "export.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "generator.hpp"

namespace pxd {

namespace {

const std::array<std::string, 64> kAlphabet = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M",
    "N", "O", "P", "Q", "R", "S", "T", "U", "V", "W", "X", "Y", "Z",
    "■", "□", "▲", "△", "●", "○", "◆", "◇",
    "★", "☆", "▼", "▽", "◀", "◁", "▶", "▷",
    "◐", "◑", "◒", "◓", "◼", "◻", "♦", "♣",
    "♠", "♥", "✚", "✖"};

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return c - 'a' + 10;
}

// Dark text on light swatches.
const char* ink_for(const std::string& hex) {
  const double r = hex_digit(hex[1]) * 16 + hex_digit(hex[2]);
  const double g = hex_digit(hex[3]) * 16 + hex_digit(hex[4]);
  const double b = hex_digit(hex[5]) * 16 + hex_digit(hex[6]);
  return (0.299 * r + 0.587 * g + 0.114 * b) > 127.5 ? "#000000" : "#FFFFFF";
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::span<const std::string> chart_alphabet() { return kAlphabet; }

StitchChart make_chart(std::span<const int> indices, int height, int width, const Palette& palette, std::string title) {
  if (height < 1 || width < 1 || indices.size() != static_cast<std::size_t>(height) * width)
    fail(Errc::invalid_argument, "index field does not match grid size");
  const int n = static_cast<int>(palette.size());
  if (n > static_cast<int>(kAlphabet.size()))
    fail(Errc::palette, "charts support at most 64 palette elements, got " + std::to_string(n));

  std::vector<long> counts(n, 0);
  for (int k : indices) {
    if (k < 0 || k >= n) fail(Errc::invalid_argument, "palette index " + std::to_string(k) + " out of range");
    ++counts[k];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts[a] > counts[b]; });

  StitchChart chart;
  chart.height = height;
  chart.width = width;
  chart.title = std::move(title);
  std::vector<int> slot(n, -1);
  for (int k : order) {
    if (counts[k] == 0) break;
    slot[k] = static_cast<int>(chart.legend.size());
    chart.legend.push_back({kAlphabet[chart.legend.size()], k, to_hex(palette.mean_color(k)), counts[k]});
  }
  chart.grid.reserve(indices.size());
  for (int k : indices) chart.grid.push_back(slot[k]);
  return chart;
}

std::string render_chart_svg(const StitchChart& chart) {
  constexpr int margin = 20, top = 50, row_h = 24;
  const int c = kChartCell;
  const int gw = chart.width * c, gh = chart.height * c;
  const int legend_top = top + gh + 30;
  const int rows = static_cast<int>(chart.legend.size());
  const int total_w = std::max(2 * margin + gw, 2 * margin + 360);
  const int total_h = legend_top + 16 + rows * row_h + margin;
  const std::string title = chart.title.empty() ? kDefaultChartTitle : chart.title;
  const auto num = [](int v) { return std::to_string(v); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(total_w) + "\" height=\"" +
       num(total_h) + "\" viewBox=\"0 0 " + num(total_w) + " " + num(total_h) + "\">\n";
  s += "<style>text{font-family:sans-serif}.sym{font-size:13px;text-anchor:middle}"
       ".thin{stroke:#808080;stroke-width:0.5}.bold{stroke:#000000;stroke-width:2}"
       ".frame{fill:none;stroke:#000000;stroke-width:2}</style>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(total_w) + "\" height=\"" + num(total_h) + "\" fill=\"#FFFFFF\"/>\n";
  s += "<text x=\"" + num(margin) + "\" y=\"30\" font-size=\"18\">" + xml_escape(title) + "</text>\n";
  s += "<text x=\"" + num(margin) + "\" y=\"44\" font-size=\"11\">" + num(chart.width) + " x " + num(chart.height) +
       " stitches</text>\n";

  s += "<g id=\"cells\">\n";
  for (int i = 0; i < chart.height; ++i) {
    for (int j = 0; j < chart.width; ++j) {
      const LegendEntry& e = chart.legend[chart.grid[static_cast<std::size_t>(i) * chart.width + j]];
      const int x = margin + j * c, y = top + i * c;
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(c) + "\" height=\"" + num(c) +
           "\" fill=\"" + e.hex + "\"/>";
      s += "<text class=\"sym\" x=\"" + num(x + c / 2) + "\" y=\"" + num(y + c / 2 + 5) + "\" fill=\"" +
           ink_for(e.hex) + "\">" + e.symbol + "</text>\n";
    }
  }
  s += "</g>\n<g id=\"grid\">\n";
  for (int j = 1; j < chart.width; ++j) {
    const int x = margin + j * c;
    s += std::string("<line class=\"") + (j % kChartBoldEvery == 0 ? "bold" : "thin") + "\" x1=\"" + num(x) +
         "\" y1=\"" + num(top) + "\" x2=\"" + num(x) + "\" y2=\"" + num(top + gh) + "\"/>\n";
  }
  for (int i = 1; i < chart.height; ++i) {
    const int y = top + i * c;
    s += std::string("<line class=\"") + (i % kChartBoldEvery == 0 ? "bold" : "thin") + "\" x1=\"" +
         num(margin) + "\" y1=\"" + num(y) + "\" x2=\"" + num(margin + gw) + "\" y2=\"" + num(y) + "\"/>\n";
  }
  s += "<rect class=\"frame\" x=\"" + num(margin) + "\" y=\"" + num(top) + "\" width=\"" + num(gw) +
       "\" height=\"" + num(gh) + "\"/>\n</g>\n";

  s += "<g id=\"legend\">\n";
  s += "<text x=\"" + num(margin) + "\" y=\"" + num(legend_top) + "\" font-size=\"14\">Legend</text>\n";
  for (int r = 0; r < rows; ++r) {
    const LegendEntry& e = chart.legend[r];
    const int y = legend_top + 10 + r * row_h;
    s += "<rect x=\"" + num(margin) + "\" y=\"" + num(y) + "\" width=\"" + num(c) + "\" height=\"" + num(c) +
         "\" fill=\"" + e.hex + "\" stroke=\"#000000\" stroke-width=\"0.5\"/>";
    s += "<text class=\"sym\" x=\"" + num(margin + c / 2) + "\" y=\"" + num(y + c / 2 + 5) + "\" fill=\"" +
         ink_for(e.hex) + "\">" + e.symbol + "</text>";
    s += "<text x=\"" + num(margin + c + 10) + "\" y=\"" + num(y + 15) + "\" font-size=\"12\">" + e.hex +
         "  index " + num(e.palette_index) + "  count " + std::to_string(e.count) + "</text>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string chart_csv(std::span<const int> indices, int height, int width) {
  if (indices.size() != static_cast<std::size_t>(height) * width)
    fail(Errc::invalid_argument, "index field does not match grid size");
  std::string s = "i,j,index\n";
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      s += std::to_string(i) + "," + std::to_string(j) + "," +
           std::to_string(indices[static_cast<std::size_t>(i) * width + j]) + "\n";
  return s;
}

Image render_mosaic(std::span<const int> indices, int height, int width, const Palette& palette) {
  for (int k : indices)
    if (k < 0 || static_cast<std::size_t>(k) >= palette.size())
      fail(Errc::palette, "index " + std::to_string(k) + " does not exist in a palette of " +
                              std::to_string(palette.size()) + " elements");
  return render_indices(indices, height, width, palette);
}

std::vector<int> indices_from_render(const Image& render, const Palette& palette, int& height, int& width) {
  const int th = palette.tile_height(), tw = palette.tile_width();
  if (render.channels != 3 && render.channels != 1) fail(Errc::invalid_argument, "render must have 1 or 3 channels");
  if (render.height % th != 0 || render.width % tw != 0)
    fail(Errc::palette, "mismatched palette: image " + std::to_string(render.width) + "x" +
                            std::to_string(render.height) + " is not a multiple of the " + std::to_string(tw) +
                            "x" + std::to_string(th) + " element size");
  height = render.height / th;
  width = render.width / tw;

  const std::size_t cell = static_cast<std::size_t>(th) * tw * 3;
  std::vector<std::uint8_t> elems(palette.size() * cell);
  for (std::size_t k = 0; k < palette.size(); ++k)
    for (std::size_t q = 0; q < cell; ++q) elems[k * cell + q] = to_byte(palette.element(k).data[q]);

  std::vector<int> out(static_cast<std::size_t>(height) * width);
  std::vector<std::uint8_t> bytes(cell);
  for (int gi = 0; gi < height; ++gi) {
    for (int gj = 0; gj < width; ++gj) {
      std::size_t q = 0;
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int c = 0; c < 3; ++c)
            bytes[q++] = to_byte(render.at(gi * th + y, gj * tw + x, render.channels == 3 ? c : 0));
      int found = -1;
      for (std::size_t k = 0; k < palette.size() && found < 0; ++k)
        if (std::equal(bytes.begin(), bytes.end(), elems.begin() + k * cell)) found = static_cast<int>(k);
      if (found < 0)
        fail(Errc::palette, "mismatched palette: cell (" + std::to_string(gi) + "," + std::to_string(gj) +
                                ") matches no palette element");
      out[static_cast<std::size_t>(gi) * width + gj] = found;
    }
  }
  return out;
}

}  // namespace pxd
