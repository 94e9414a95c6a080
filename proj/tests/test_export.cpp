#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "export.hpp"
#include "generator.hpp"
#include "imaging.hpp"
#include "oracles.hpp"
#include "optimize.hpp"
#include "test_util.hpp"

using namespace pxd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kData = PXD_TEST_DATA;

std::vector<int> golden_indices() { return {0, 1, 1, 2, 3, 0, 1, 1, 2, 2, 0, 3, 1, 0, 0, 0}; }

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

Palette many(int n) {
  std::vector<Rgb> colors;
  for (int k = 0; k < n; ++k) colors.push_back({k / double(n), 1.0 - k / double(n), (k % 7) / 6.0});
  return Palette::from_colors(colors);
}

}  // namespace

TEST_SUITE("export") {
  TEST_CASE("alphabet has 64 distinct glyphs") {
    const auto a = chart_alphabet();
    REQUIRE(a.size() == 64);
    CHECK(a[0] == "0");
    CHECK(a[10] == "A");
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 64);
  }

  TEST_CASE("uniform field gives one legend row with count H*W") {
    const Palette p = many(3);
    const std::vector<int> idx(35, 2);
    const StitchChart c = make_chart(idx, 5, 7, p);
    REQUIRE(c.legend.size() == 1);
    CHECK(c.legend[0].palette_index == 2);
    CHECK(c.legend[0].count == 35);
    CHECK(c.legend[0].symbol == "0");
    CHECK(c.title.empty());
  }

  TEST_CASE("2x2 checker counts and tie order") {
    const StitchChart c = make_chart(std::vector<int>{0, 1, 1, 0}, 2, 2, many(2));
    REQUIRE(c.legend.size() == 2);
    CHECK(c.legend[0].palette_index == 0);
    CHECK(c.legend[0].count == 2);
    CHECK(c.legend[1].palette_index == 1);
    CHECK(c.legend[1].count == 2);
  }

  TEST_CASE("legend counts equal the index histogram and sum to H*W") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + trial % 20, h = 1 + trial % 9, w = 1 + (trial * 7) % 13;
      std::uniform_int_distribution<int> pick(0, n - 1);
      std::vector<int> idx(h * w);
      for (int& v : idx) v = pick(rng);
      const StitchChart c = make_chart(idx, h, w, many(n));
      std::vector<long> hist(n, 0);
      for (int v : idx) ++hist[v];
      long total = 0;
      for (std::size_t e = 0; e < c.legend.size(); ++e) {
        CHECK(c.legend[e].count == hist[c.legend[e].palette_index]);
        CHECK(c.legend[e].count > 0);
        if (e > 0) CHECK(c.legend[e].count <= c.legend[e - 1].count);
        total += c.legend[e].count;
      }
      CHECK(total == h * w);
      for (int q = 0; q < h * w; ++q) CHECK(c.legend[c.grid[q]].palette_index == idx[q]);
    }
  }

  TEST_CASE("more than 64 palette entries is an error") {
    CHECK_PXD_ERROR(make_chart(std::vector<int>{0, 1}, 1, 2, many(65)), Errc::palette, "64");
    CHECK_NOTHROW(make_chart(std::vector<int>{0, 63}, 1, 2, many(64)));
    CHECK_THROWS_AS(make_chart(std::vector<int>{0, 5}, 1, 2, many(3)), pxd::Error);
  }

  TEST_CASE("SVG golden for the 4x4 chart") {
    const Palette p = load_palette_file(kData / "palette4.txt");
    const std::string svg = render_chart_svg(make_chart(golden_indices(), 4, 4, p));
    CHECK(svg == slurp(kData / "chart_4x4.svg"));
    CHECK(render_chart_svg(make_chart(golden_indices(), 4, 4, p)) == svg);
  }

  TEST_CASE("empty title falls back to the default; titles are escaped") {
    const Palette p = many(2);
    CHECK(render_chart_svg(make_chart(std::vector<int>{0, 1}, 1, 2, p, "")).find(">Cross-stitch chart<") !=
          std::string::npos);
    const std::string svg = render_chart_svg(make_chart(std::vector<int>{0, 1}, 1, 2, p, "a<b & \"c\""));
    CHECK(svg.find("a&lt;b &amp; &quot;c&quot;") != std::string::npos);
  }

  TEST_CASE("bold gridlines every 10 cells") {
    const Palette p = many(2);
    auto bold_lines = [&](int h, int w) {
      const std::string svg = render_chart_svg(make_chart(std::vector<int>(h * w, 0), h, w, p));
      const int total = count(svg, "class=\"bold\" x1=");
      return std::pair{total, svg};
    };
    // Interior lines only; the outer border is the frame rectangle.
    const auto [n10, svg10] = bold_lines(10, 10);
    CHECK(n10 == 0);
    CHECK(count(svg10, "class=\"frame\"") == 1);
    const auto [n20, svg20] = bold_lines(20, 20);
    CHECK(n20 == 2);
    const std::regex vline("<line class=\"bold\" x1=\"(\\d+)\" y1=\"50\" x2=\"\\1\"");
    CHECK(std::distance(std::sregex_iterator(svg20.begin(), svg20.end(), vline), std::sregex_iterator()) == 1);
    CHECK(svg20.find("<line class=\"bold\" x1=\"220\" y1=\"50\" x2=\"220\" y2=\"450\"/>") != std::string::npos);
    CHECK(svg20.find("<line class=\"bold\" x1=\"20\" y1=\"250\" x2=\"420\" y2=\"250\"/>") != std::string::npos);
    const auto [n25, svg25] = bold_lines(25, 31);
    CHECK(n25 == 3 + 2);
    CHECK(count(svg20, "class=\"thin\"") == 2 * 18);
  }

  TEST_CASE("CSV golden") {
    CHECK(chart_csv(golden_indices(), 4, 4) == slurp(kData / "grid_4x4.csv"));
    CHECK(chart_csv(std::vector<int>{3, 1}, 1, 2) == "i,j,index\n0,0,3\n0,1,1\n");
  }

  TEST_CASE("mosaic golden from the checkpoint fixture") {
    const Palette tiles = load_tile_palette(kData / "tiles");
    const Checkpoint ck = read_checkpoint(kData / "ckpt");
    const std::vector<int> idx = argmax_indices(ck.theta);
    const Image m = render_mosaic(idx, ck.theta.height, ck.theta.width, tiles);
    CHECK(m.height == 4 * 2);
    CHECK(m.width == 4 * 2);
    CHECK(m == read_png(kData / "mosaic_4x4.png"));
    CHECK(m == render(ck.theta, tiles, RenderMode::argmax));
  }

  TEST_CASE("single-tile wallpaper and dims") {
    Image a(3, 2, 3, 0.0), b(3, 2, 3, 1.0);
    a.at(1, 1, 0) = 1.0;
    const Palette p({a, b});
    const Image m = render_mosaic(std::vector<int>(12, 0), 3, 4, p);
    CHECK(m.height == 9);
    CHECK(m.width == 8);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 8; ++x) CHECK(m.at(y, x, 0) == a.at(y % 3, x % 2, 0));
    CHECK_THROWS_AS(render_mosaic(std::vector<int>{0, 2}, 1, 2, p), pxd::Error);
  }

  TEST_CASE("mosaic with 1x1 tiles equals the argmax render") {
    std::mt19937_64 rng(2);
    const Palette p = many(5);
    for (int trial = 0; trial < 10; ++trial) {
      LogitField f(6, 7, 5);
      std::normal_distribution<double> normal;
      for (double& v : f.values) v = normal(rng);
      CHECK(render_mosaic(argmax_indices(f), 6, 7, p) == render(f, p, RenderMode::argmax));
    }
  }

  TEST_CASE("indices recovered from a rendered PNG") {
    const Palette p = load_palette_file(kData / "palette4.txt");
    int h = 0, w = 0;
    const std::vector<int> idx = indices_from_render(read_png(kData / "argmax_4x4.png"), p, h, w);
    CHECK(h == 4);
    CHECK(w == 4);
    CHECK(idx == golden_indices());
    const Palette other = Palette::from_colors({{0, 0, 0}, {1, 1, 1}});
    CHECK_PXD_ERROR(indices_from_render(read_png(kData / "argmax_4x4.png"), other, h, w), Errc::palette,
                    "mismatched palette");
  }
}
