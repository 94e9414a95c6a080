#include "palette.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "error.hpp"
#include "imaging.hpp"

namespace pxd {

Palette::Palette(std::vector<Image> elements, std::string name)
    : elements_(std::move(elements)), name_(std::move(name)) {
  if (elements_.size() < 2)
    fail(Errc::palette, "palette needs at least 2 elements, got " + std::to_string(elements_.size()));
  tile_h_ = elements_.front().height;
  tile_w_ = elements_.front().width;
  for (std::size_t k = 0; k < elements_.size(); ++k) {
    const Image& e = elements_[k];
    if (e.channels != 3) fail(Errc::palette, "palette element " + std::to_string(k) + " is not RGB");
    if (e.height != tile_h_ || e.width != tile_w_)
      fail(Errc::palette, "palette elements have mixed dimensions");
    for (double v : e.data)
      if (!(v >= 0.0 && v <= 1.0)) fail(Errc::palette, "palette element " + std::to_string(k) + " outside [0,1]");
    for (std::size_t j = 0; j < k; ++j)
      if (elements_[j].data == e.data)
        fail(Errc::palette, "duplicate palette element " + std::to_string(j) + " and " + std::to_string(k));
  }
}

Palette Palette::from_colors(const std::vector<Rgb>& colors, std::string name) {
  std::vector<Image> elements;
  elements.reserve(colors.size());
  for (const Rgb& c : colors) {
    Image e(1, 1, 3);
    std::copy(c.begin(), c.end(), e.data.begin());
    elements.push_back(std::move(e));
  }
  return Palette(std::move(elements), std::move(name));
}

Rgb Palette::mean_color(std::size_t k) const {
  const Image& e = element(k);
  Rgb acc{0, 0, 0};
  for (std::size_t i = 0; i < e.size(); ++i) acc[i % 3] += e.data[i];
  const double count = static_cast<double>(e.height) * e.width;
  for (double& v : acc) v /= count;
  return acc;
}

namespace {

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string_view trim(std::string_view s) {
  auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && issp(s.front())) s.remove_prefix(1);
  while (!s.empty() && issp(s.back())) s.remove_suffix(1);
  return s;
}

double sq_dist(const Rgb& a, const Rgb& b) {
  double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

}  // namespace

Palette parse_palette(std::string_view text, std::string name) {
  std::vector<Rgb> colors;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == ';') continue;
    bool ok = line.size() == 7 && line[0] == '#';
    Rgb c{};
    for (int ch = 0; ok && ch < 3; ++ch) {
      int hi = hex_digit(line[1 + 2 * ch]), lo = hex_digit(line[2 + 2 * ch]);
      if (hi < 0 || lo < 0) ok = false;
      else c[ch] = (hi * 16 + lo) / 255.0;
    }
    if (!ok)
      fail(Errc::palette, "palette line " + std::to_string(line_no) + ": expected #RRGGBB, got '" +
                              std::string(line) + "'");
    colors.push_back(c);
  }
  return Palette::from_colors(colors, std::move(name));
}

Palette load_palette_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open palette file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_palette(ss.str(), path.stem().string());
}

std::string to_hex(const Rgb& color) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string s = "#";
  for (double v : color) {
    auto b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

std::string serialize_palette(const Palette& palette) {
  if (palette.is_tiled()) fail(Errc::palette, "tile palettes cannot be serialized as hex colors");
  std::string out;
  if (!palette.name().empty()) out += "; " + palette.name() + "\n";
  for (std::size_t k = 0; k < palette.size(); ++k) out += to_hex(palette.mean_color(k)) + "\n";
  return out;
}

Palette kmeans_palette(const Image& image, int n, std::uint64_t seed) {
  if (n < 2) fail(Errc::palette, "kmeans palette needs n >= 2");
  if (image.empty()) fail(Errc::palette, "kmeans palette needs a nonempty image");
  if (image.channels != 3) fail(Errc::palette, "kmeans palette needs an RGB image");

  // Collapse the multiset into weighted unique colors; Lloyd on the weighted
  // set gives the same centroids as on every pixel.
  std::map<Rgb, double> hist;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      auto p = image.pixel(y, x);
      hist[Rgb{p[0], p[1], p[2]}] += 1.0;
    }
  if (hist.size() < static_cast<std::size_t>(n))
    fail(Errc::palette, "insufficient distinct colors: image has " + std::to_string(hist.size()) +
                            ", palette needs " + std::to_string(n));
  std::vector<Rgb> pts;
  std::vector<double> wts;
  for (const auto& [c, w] : hist) {
    pts.push_back(c);
    wts.push_back(w);
  }
  const std::size_t m = pts.size();

  std::mt19937_64 rng(seed);
  std::vector<Rgb> centers;
  centers.push_back(pts[std::discrete_distribution<std::size_t>(wts.begin(), wts.end())(rng)]);
  std::vector<double> d2(m);
  while (centers.size() < static_cast<std::size_t>(n)) {
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Rgb& c : centers) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best * wts[i];
    }
    centers.push_back(pts[std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng)]);
  }

  std::vector<int> assign(m);
  auto assign_all = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      int best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (int k = 1; k < n; ++k) {
        double d = sq_dist(pts[i], centers[k]);
        if (d < bd) bd = d, best = k;
      }
      assign[i] = best;
    }
  };
  std::vector<double> population(n);
  for (int iter = 0; iter < 200; ++iter) {
    assign_all();
    std::vector<Rgb> sums(n, Rgb{0, 0, 0});
    std::fill(population.begin(), population.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < 3; ++c) sums[assign[i]][c] += wts[i] * pts[i][c];
      population[assign[i]] += wts[i];
    }
    double max_move = 0;
    for (int k = 0; k < n; ++k) {
      Rgb next;
      if (population[k] > 0) {
        for (int c = 0; c < 3; ++c) next[c] = sums[k][c] / population[k];
      } else {
        // Empty cluster: re-seed at the point farthest from its centroid.
        std::size_t far = 0;
        double fd = -1;
        for (std::size_t i = 0; i < m; ++i) {
          double d = sq_dist(pts[i], centers[assign[i]]);
          if (d > fd) fd = d, far = i;
        }
        next = pts[far];
        assign[far] = k;
      }
      max_move = std::max(max_move, std::sqrt(sq_dist(next, centers[k])));
      centers[k] = next;
    }
    if (max_move < 1e-6) break;
  }

  assign_all();
  std::fill(population.begin(), population.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) population[assign[i]] += wts[i];
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return population[a] > population[b]; });
  std::vector<Rgb> sorted;
  for (int k : order) sorted.push_back(centers[k]);
  return Palette::from_colors(sorted, "kmeans");
}

Palette load_tile_palette(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(Errc::io, "tile palette directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (files.size() < 2) fail(Errc::palette, "tile palette needs at least 2 PNG files in '" + dir.string() + "'");
  std::vector<Image> tiles;
  for (const auto& f : files) {
    Image t = read_png(f);
    if (t.channels == 1) t = replicate_channels(t, 3);
    if (!tiles.empty() && (t.height != tiles.front().height || t.width != tiles.front().width))
      fail(Errc::palette, "tile palette has mixed dimensions: '" + f.filename().string() + "' is " +
                              std::to_string(t.height) + "x" + std::to_string(t.width));
    tiles.push_back(std::move(t));
  }
  return Palette(std::move(tiles), dir.filename().string());
}

}  // namespace pxd
