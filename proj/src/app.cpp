#include "app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "export.hpp"
#include "imaging.hpp"
#include "log.hpp"
#include "protocol.hpp"

namespace pxd::app {

using nlohmann::json;

namespace {

// Strict view of one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(Errc::config, label() + " must be an object");
  }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(Errc::config, key_path(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void optional_number(const char* key, std::optional<double>& out) {
    if (find(key) != nullptr) {
      double v = 0;
      number(key, v);
      out = v;
    }
  }
  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(Errc::config, key_path(key) + " must be an integer");
      if (std::is_unsigned_v<Int> && v->is_number_unsigned()) {
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        const auto x = v->get<std::int64_t>();
        if (std::is_unsigned_v<Int> && x < 0) fail(Errc::config, key_path(key) + " must be non-negative");
        out = static_cast<Int>(x);
      }
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(Errc::config, key_path(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  bool string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(Errc::config, key_path(key) + " must be a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }
  void path(const char* key, std::optional<fs::path>& out, const fs::path& base) {
    std::string s;
    if (string(key, s)) {
      if (s.empty()) fail(Errc::config, key_path(key) + " must not be empty");
      out = absolute_path(s, base);
    }
  }
  Section child(const char* key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v != nullptr ? *v : empty, key_path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(Errc::config, "unknown key '" + key_path(it.key().c_str()) + "'");
  }

  static fs::path absolute_path(const fs::path& p, const fs::path& base) {
    return (p.is_absolute() ? p : base / p).lexically_normal();
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

constexpr std::string_view kDelta = "delta:";
constexpr std::string_view kGmm = "gmm:";
constexpr std::string_view kRemote = "remote:";
constexpr std::string_view kRemoteStdio = "remote-stdio:";

bool is_remote(const std::string& spec) { return spec.starts_with(kRemote) || spec.starts_with(kRemoteStdio); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

// Resolves file references inside delta:/gmm: specs against base.
std::string resolve_backend_spec(const std::string& spec, const fs::path& base) {
  if (spec.starts_with(kDelta)) {
    const auto parts = split(spec.substr(kDelta.size()), ',');
    if (parts.empty() || parts.size() > 2 || parts[0].empty())
      fail(Errc::config, "backend.spec: expected delta:<cond.png>[,<uncond.png>]");
    std::string out(kDelta);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].empty()) fail(Errc::config, "backend.spec: empty delta target path");
      out += (i ? "," : "") + Section::absolute_path(parts[i], base).string();
    }
    return out;
  }
  if (spec.starts_with(kGmm)) {
    const std::string rest = spec.substr(kGmm.size());
    if (rest.empty()) fail(Errc::config, "backend.spec: expected gmm:<spec.json>");
    return std::string(kGmm) + Section::absolute_path(rest, base).string();
  }
  if (spec.starts_with(kRemoteStdio)) {
    if (spec.size() == kRemoteStdio.size()) fail(Errc::config, "backend.spec: expected remote-stdio:<command>");
    return spec;
  }
  if (spec.starts_with(kRemote)) {
    if (spec.find(':', kRemote.size()) == std::string::npos)
      fail(Errc::config, "backend.spec: expected remote:<host:port>");
    return spec;
  }
  fail(Errc::config, "backend.spec: unknown backend '" + spec +
                         "' (expected delta:, gmm:, remote: or remote-stdio:)");
}

std::string init_name(InitMode m) { return m == InitMode::image ? "image" : "random"; }
std::string norm_name(InitNorm n) { return n == InitNorm::l2 ? "l2" : "l1"; }

Image to_rgb(Image img) {
  if (img.channels == 3) return img;
  return replicate_channels(img, 3);
}

Image fit(Image img, int h, int w) {
  img = to_rgb(std::move(img));
  if (img.height == h && img.width == w) return img;
  return bilinear_resize(img, h, w);
}

Image constant_image(int h, int w, const Rgb& c) {
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = c[i % 3];
  return img;
}

GaussianMixture read_mixture(const json& list, const std::string& where, const fs::path& base, int h, int w) {
  if (!list.is_array() || list.empty()) fail(Errc::config, where + " must be a non-empty array");
  GaussianMixture mix;
  double total = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Section s(list[i], where + "[" + std::to_string(i) + "]");
    std::optional<fs::path> image;
    double weight = 1.0;
    s.path("image", image, base);
    s.number("weight", weight);
    s.finish();
    if (!image) fail(Errc::config, s.key_path("image") + " is required");
    if (!(weight > 0)) fail(Errc::config, s.key_path("weight") + " must be positive");
    mix.means.push_back(fit(read_png(*image), h, w));
    mix.weights.push_back(weight);
    total += weight;
  }
  for (double& v : mix.weights) v /= total;
  return mix;
}

std::unique_ptr<GuidanceBackend> make_gmm(const fs::path& spec_path, const NoiseSchedule& schedule, int h, int w) {
  std::ifstream in(spec_path);
  if (!in) fail(Errc::io, "cannot read gmm spec '" + spec_path.string() + "'");
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(Errc::config, "gmm spec '" + spec_path.string() + "' is not valid JSON");
  const fs::path base = spec_path.parent_path();
  Section s(doc, "gmm");
  double gamma = 0.1;
  s.number("gamma", gamma);
  const json* cond = s.find("cond");
  const json* uncond = s.find("uncond");
  s.finish();
  if (!(gamma > 0)) fail(Errc::config, "gmm.gamma must be positive");
  if (cond == nullptr) fail(Errc::config, "gmm.cond is required");
  GaussianMixture c = read_mixture(*cond, "gmm.cond", base, h, w);
  GaussianMixture u;
  if (uncond != nullptr) {
    u = read_mixture(*uncond, "gmm.uncond", base, h, w);
  } else {
    u.means = c.means;
    u.weights.assign(c.means.size(), 1.0 / static_cast<double>(c.means.size()));
  }
  return std::make_unique<GmmOracle>(schedule, std::move(c), std::move(u), gamma);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(Errc::io, "cannot write '" + path.string() + "'");
}

// Fills the defaults that depend on the palette's element size.
AppConfig finalize(AppConfig cfg, const Palette& palette) {
  const int rh = cfg.run.height * palette.tile_height(), rw = cfg.run.width * palette.tile_width();
  if (cfg.run.augment.target_height == 0) cfg.run.augment.target_height = rh;
  if (cfg.run.augment.target_width == 0) cfg.run.augment.target_width = rw;
  if (!cfg.run.fft_radius) cfg.run.fft_radius = make_fft_mask(rh, rw).radius;
  return cfg;
}

void prepare_output(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) fail(Errc::exists, "output path '" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) fail(Errc::exists, "output directory '" + dir.string() + "' is not empty; pass --force to overwrite");
      fs::remove_all(dir, ec);
      if (ec) fail(Errc::io, "cannot clear '" + dir.string() + "': " + ec.message());
    }
  }
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

AppConfig parse_config(const json& doc, const fs::path& base_dir) {
  AppConfig cfg;
  RunConfig& run = cfg.run;
  Section root(doc, "");

  root.integer("seed", run.seed);
  root.integer("steps", run.steps);
  root.integer("checkpoint_every", run.checkpoint_every);
  root.integer("preview_scale", cfg.preview_scale);
  std::string output;
  if (root.string("output", output)) cfg.output = output;
  cfg.output = Section::absolute_path(cfg.output, base_dir);

  Section size = root.child("size");
  size.integer("height", run.height);
  size.integer("width", run.width);
  size.finish();

  Section input = root.child("input");
  input.path("image", cfg.input.image, base_dir);
  input.path("depth", cfg.input.depth, base_dir);
  input.number("canny_low", cfg.input.canny_low);
  input.number("canny_high", cfg.input.canny_high);
  input.finish();

  Section pal = root.child("palette");
  pal.path("file", cfg.palette.file, base_dir);
  pal.path("tiles", cfg.palette.tiles, base_dir);
  if (const json* colors = pal.find("colors")) {
    if (!colors->is_array()) fail(Errc::config, "palette.colors must be an array of \"#RRGGBB\" strings");
    std::vector<std::string> list;
    for (const auto& c : *colors) {
      if (!c.is_string()) fail(Errc::config, "palette.colors must be an array of \"#RRGGBB\" strings");
      list.push_back(c.get<std::string>());
    }
    cfg.palette.colors = std::move(list);
  }
  if (pal.find("kmeans") != nullptr) {
    int n = 0;
    pal.integer("kmeans", n);
    cfg.palette.kmeans = n;
  }
  pal.integer("kmeans_seed", cfg.palette.kmeans_seed);
  pal.finish();

  Section gen = root.child("generator");
  gen.number("tau", run.generator.tau);
  gen.boolean("gumbel", run.generator.gumbel);
  gen.boolean("straight_through", run.generator.straight_through);
  std::string s;
  if (gen.string("init", s)) {
    if (s == "random") run.init = InitMode::random;
    else if (s == "image") run.init = InitMode::image;
    else fail(Errc::config, "generator.init must be \"random\" or \"image\"");
    cfg.init_explicit = true;
  }
  if (gen.string("init_norm", s)) {
    if (s == "l1") run.init_norm = InitNorm::l1;
    else if (s == "l2") run.init_norm = InitNorm::l2;
    else fail(Errc::config, "generator.init_norm must be \"l1\" or \"l2\"");
  }
  gen.number("init_scale", run.init_scale);
  gen.finish();

  Section aug = root.child("augment");
  aug.number("p_gray", run.augment.p_gray);
  aug.number("p_flip", run.augment.p_flip);
  aug.number("p_persp", run.augment.p_persp);
  aug.number("distortion_scale", run.augment.distortion_scale);
  aug.integer("target_height", run.augment.target_height);
  aug.integer("target_width", run.augment.target_width);
  aug.finish();
  cfg.augment_target_explicit = run.augment.target_height > 0 || run.augment.target_width > 0;

  Section loss = root.child("loss");
  loss.number("s", run.loss.s);
  loss.number("w_fft", run.loss.w_fft);
  loss.optional_number("fft_radius", run.fft_radius);
  loss.finish();

  Section sched = root.child("schedule");
  sched.integer("T", run.schedule_steps);
  sched.integer("a", run.timesteps.a);
  sched.integer("b_start", run.timesteps.b_start);
  sched.integer("b_end", run.timesteps.b_end);
  sched.finish();

  Section opt = root.child("optimizer");
  opt.number("lr", run.optimizer.lr);
  opt.integer("warmup", run.optimizer.warmup);
  opt.number("beta1", run.optimizer.beta1);
  opt.number("beta2", run.optimizer.beta2);
  opt.number("eps", run.optimizer.eps);
  opt.number("weight_decay", run.optimizer.weight_decay);
  opt.finish();

  Section be = root.child("backend");
  be.string("spec", cfg.backend.spec);
  be.string("prompt", cfg.backend.prompt);
  be.string("uncond_prompt", cfg.backend.uncond_prompt);
  be.number("canny_scale", cfg.backend.canny_scale);
  be.number("depth_scale", cfg.backend.depth_scale);
  be.number("timeout_s", cfg.backend.timeout_s);
  be.finish();
  root.finish();

  // Cross-field checks.
  const int sources = cfg.palette.file.has_value() + cfg.palette.tiles.has_value() +
                      cfg.palette.colors.has_value() + cfg.palette.kmeans.has_value();
  if (sources == 0)
    fail(Errc::config, "palette: no palette given; set palette.file, palette.tiles, palette.colors, or "
                       "palette.kmeans together with input.image");
  if (sources > 1) fail(Errc::config, "palette: set exactly one of file, tiles, colors, kmeans");
  if (cfg.palette.kmeans && !cfg.input.image) fail(Errc::config, "palette.kmeans: needs input.image to cluster");
  if (cfg.palette.kmeans && *cfg.palette.kmeans < 2) fail(Errc::config, "palette.kmeans: n must be at least 2");
  if (!(cfg.input.canny_low >= 0 && cfg.input.canny_low < cfg.input.canny_high && cfg.input.canny_high <= 1))
    fail(Errc::config, "input: need 0 <= canny_low < canny_high <= 1");
  if (cfg.preview_scale < 1) fail(Errc::config, "preview_scale must be >= 1");

  if (cfg.backend.spec.empty()) fail(Errc::config, "backend.spec: no guidance backend selected");
  cfg.backend.spec = resolve_backend_spec(cfg.backend.spec, base_dir);
  if (!(cfg.backend.timeout_s > 0)) fail(Errc::config, "backend.timeout_s must be positive");
  if (!(cfg.backend.canny_scale >= 0) || !(cfg.backend.depth_scale >= 0))
    fail(Errc::config, "backend: canny_scale and depth_scale must be >= 0");

  if (!cfg.init_explicit) run.init = cfg.input.image ? InitMode::image : InitMode::random;
  if (run.init == InitMode::image && !cfg.input.image) fail(Errc::config, "generator.init: \"image\" needs input.image");
  if (!cfg.augment_target_explicit && is_remote(cfg.backend.spec)) {
    run.augment.target_height = 1024;
    run.augment.target_width = 1024;
  }
  if ((run.augment.target_height > 0) != (run.augment.target_width > 0))
    fail(Errc::config, "augment: set both target_height and target_width");
  run.validate();
  return cfg;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot read config '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) fail(Errc::config, "config '" + path.string() + "' is not valid JSON");
  return parse_config(doc, fs::absolute(path).parent_path());
}

json resolved_config(const AppConfig& cfg) {
  const RunConfig& r = cfg.run;
  json palette = json::object();
  if (cfg.palette.file) palette["file"] = cfg.palette.file->string();
  if (cfg.palette.tiles) palette["tiles"] = cfg.palette.tiles->string();
  if (cfg.palette.colors) palette["colors"] = *cfg.palette.colors;
  if (cfg.palette.kmeans) palette["kmeans"] = *cfg.palette.kmeans;
  palette["kmeans_seed"] = cfg.palette.kmeans_seed;

  json input = {{"canny_low", cfg.input.canny_low}, {"canny_high", cfg.input.canny_high}};
  input["image"] = cfg.input.image ? json(cfg.input.image->string()) : json(nullptr);
  input["depth"] = cfg.input.depth ? json(cfg.input.depth->string()) : json(nullptr);

  return json{
      {"seed", r.seed},
      {"steps", r.steps},
      {"checkpoint_every", r.checkpoint_every},
      {"preview_scale", cfg.preview_scale},
      {"output", cfg.output.string()},
      {"size", {{"height", r.height}, {"width", r.width}}},
      {"palette", palette},
      {"input", input},
      {"generator",
       {{"tau", r.generator.tau},
        {"gumbel", r.generator.gumbel},
        {"straight_through", r.generator.straight_through},
        {"init", init_name(r.init)},
        {"init_norm", norm_name(r.init_norm)},
        {"init_scale", r.init_scale}}},
      {"augment",
       {{"p_gray", r.augment.p_gray},
        {"p_flip", r.augment.p_flip},
        {"p_persp", r.augment.p_persp},
        {"distortion_scale", r.augment.distortion_scale},
        {"target_height", r.augment.target_height},
        {"target_width", r.augment.target_width}}},
      {"loss", {{"s", r.loss.s}, {"w_fft", r.loss.w_fft}, {"fft_radius", r.fft_radius ? json(*r.fft_radius) : json(nullptr)}}},
      {"schedule", {{"T", r.schedule_steps}, {"a", r.timesteps.a}, {"b_start", r.timesteps.b_start}, {"b_end", r.timesteps.b_end}}},
      {"optimizer",
       {{"lr", r.optimizer.lr},
        {"warmup", r.optimizer.warmup},
        {"beta1", r.optimizer.beta1},
        {"beta2", r.optimizer.beta2},
        {"eps", r.optimizer.eps},
        {"weight_decay", r.optimizer.weight_decay}}},
      {"backend",
       {{"spec", cfg.backend.spec},
        {"prompt", cfg.backend.prompt},
        {"uncond_prompt", cfg.backend.uncond_prompt},
        {"canny_scale", cfg.backend.canny_scale},
        {"depth_scale", cfg.backend.depth_scale},
        {"timeout_s", cfg.backend.timeout_s}}},
  };
}

std::string config_hash(const AppConfig& cfg) {
  json j = resolved_config(cfg);
  j.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

LoadedInputs load_inputs(const AppConfig& cfg) {
  LoadedInputs in;
  if (cfg.input.image) in.image = to_rgb(read_png(*cfg.input.image));

  if (cfg.palette.file) {
    in.palette = load_palette_file(*cfg.palette.file);
  } else if (cfg.palette.tiles) {
    in.palette = load_tile_palette(*cfg.palette.tiles);
  } else if (cfg.palette.colors) {
    std::string text;
    for (const auto& c : *cfg.palette.colors) text += c + "\n";
    in.palette = parse_palette(text, "config");
  } else {
    in.palette = kmeans_palette(*in.image, *cfg.palette.kmeans, cfg.palette.kmeans_seed);
  }

  Condition& c = in.condition;
  c.prompt = cfg.backend.prompt;
  c.uncond_prompt = cfg.backend.uncond_prompt;
  c.canny_scale = cfg.backend.canny_scale;
  c.depth_scale = cfg.backend.depth_scale;
  if (in.image) {
    c.canny = canny(*in.image, CannyParams{cfg.input.canny_low, cfg.input.canny_high});
    if (cfg.input.depth) {
      Image d = read_png(*cfg.input.depth);
      c.depth = d.channels == 1 ? d : luminance(d);
    } else {
      c.depth = pseudo_depth(*in.image);
    }
  }
  return in;
}

std::unique_ptr<GuidanceBackend> make_backend(const AppConfig& cfg, const Palette& palette) {
  const std::string& spec = cfg.backend.spec;
  const int timeout_ms = static_cast<int>(cfg.backend.timeout_s * 1000.0);
  if (spec.starts_with(kRemoteStdio)) return wire::spawn_remote(spec.substr(kRemoteStdio.size()), timeout_ms);
  if (spec.starts_with(kRemote)) return wire::connect_remote(spec.substr(kRemote.size()), timeout_ms);

  const int h = cfg.run.augment.target_height > 0 ? cfg.run.augment.target_height
                                                   : cfg.run.height * palette.tile_height();
  const int w = cfg.run.augment.target_width > 0 ? cfg.run.augment.target_width : cfg.run.width * palette.tile_width();
  NoiseSchedule schedule = make_linear_schedule(cfg.run.schedule_steps);
  if (spec.starts_with(kGmm)) return make_gmm(spec.substr(kGmm.size()), schedule, h, w);

  const auto parts = split(spec.substr(kDelta.size()), ',');
  Image cond = fit(read_png(parts[0]), h, w);
  Image uncond;
  if (parts.size() > 1) {
    uncond = fit(read_png(parts[1]), h, w);
  } else {
    Rgb mean{0, 0, 0};
    for (std::size_t k = 0; k < palette.size(); ++k)
      for (int ch = 0; ch < 3; ++ch) mean[ch] += palette.mean_color(k)[ch] / static_cast<double>(palette.size());
    uncond = constant_image(h, w, mean);
  }
  return std::make_unique<DeltaOracle>(std::move(schedule), std::move(cond), std::move(uncond));
}

GenerateSummary generate(const AppConfig& config, const GenerateOptions& options) {
  LoadedInputs inputs = load_inputs(config);
  AppConfig cfg = finalize(config, inputs.palette);
  if (options.output) cfg.output = fs::absolute(*options.output).lexically_normal();
  const std::string hash = config_hash(cfg);

  std::optional<Checkpoint> resume;
  if (options.resume) {
    resume = read_checkpoint(*options.resume);
    if (!resume->config_hash.empty() && resume->config_hash != hash)
      fail(Errc::config, "checkpoint was written by a different configuration (hash " + resume->config_hash +
                             ", expected " + hash + ")");
  }

  prepare_output(cfg.output, options.force);
  write_text(cfg.output / "resolved_config.json", resolved_config(cfg).dump(2) + "\n");
  const fs::path ckpt_dir = cfg.output / "checkpoints";
  fs::create_directories(ckpt_dir);

  auto backend = make_backend(cfg, inputs.palette);
  log::info("backend " + backend->name() + ", palette of " + std::to_string(inputs.palette.size()) + " elements");

  std::ofstream telemetry(cfg.output / "telemetry.csv", std::ios::binary);
  if (!telemetry) fail(Errc::io, "cannot write telemetry.csv");
  telemetry << format_telemetry_header();

  RunInputs run_inputs{inputs.palette, *backend, inputs.condition, std::nullopt};
  if (cfg.run.init == InitMode::image) run_inputs.init_image = bilinear_resize(*inputs.image, cfg.run.height, cfg.run.width);

  long last_saved = -1;
  RunHooks hooks;
  hooks.on_row = [&](const TelemetryRow& row) {
    telemetry << format_telemetry_row(row);
    if (options.progress) options.progress(row, cfg.run.steps);
  };
  hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
    Checkpoint c = ckpt;
    c.config_hash = hash;
    write_checkpoint(ckpt_dir, c);
    last_saved = c.step;
    telemetry.flush();
  };

  RunResult result = run(cfg.run, run_inputs, hooks, resume ? &*resume : nullptr);
  telemetry.flush();
  if (!telemetry) fail(Errc::io, "error writing telemetry.csv");
  if (last_saved != std::max(cfg.run.steps, resume ? resume->step : 0L)) {
    Checkpoint final_ckpt{std::max(cfg.run.steps, resume ? resume->step : 0L), result.theta, result.state, hash};
    write_checkpoint(ckpt_dir, final_ckpt);
  }

  write_png(cfg.output / "argmax.png", result.argmax);
  write_png(cfg.output / "softmax.png", result.softmax);
  write_png(cfg.output / ("preview_x" + std::to_string(cfg.preview_scale) + ".png"),
            upscale_nearest(result.argmax, cfg.preview_scale));
  const EntropyMap ent = entropy_map(softmax_probs(result.theta));
  write_png(cfg.output / "entropy.png", upscale_nearest(heatmap(ent.normalized), cfg.preview_scale));

  GenerateSummary summary;
  summary.output = cfg.output;
  summary.steps = cfg.run.steps;
  summary.initial_entropy = result.initial_entropy;
  summary.final_entropy = ent.mean;
  return summary;
}

Palette palette_extract(const fs::path& image, int n, std::uint64_t seed, const fs::path& out) {
  if (n < 2) fail(Errc::config, "palette-extract: n must be at least 2");
  const Palette p = kmeans_palette(to_rgb(read_png(image)), n, seed);
  const std::string text = serialize_palette(p);
  std::optional<Palette> written;
  try {
    written = parse_palette(text);
  } catch (const Error&) {
    fail(Errc::palette, "insufficient distinct colors: centroids collide after 8-bit rounding; use a smaller n");
  }
  write_text(out, text);
  return *written;
}

Palette load_palette_any(const fs::path& path) {
  if (fs::is_directory(path)) return load_tile_palette(path);
  return load_palette_file(path);
}

ExportKind parse_export_kind(const std::string& s) {
  if (s == "stitch") return ExportKind::stitch;
  if (s == "mosaic") return ExportKind::mosaic;
  if (s == "csv") return ExportKind::csv;
  fail(Errc::invalid_argument, "unknown export kind '" + s + "' (expected stitch, mosaic or csv)");
}

void export_artifact(const fs::path& source, const Palette& palette, ExportKind kind, const fs::path& out,
                     const std::string& title) {
  std::vector<int> indices;
  int h = 0, w = 0;
  std::string ext = source.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    indices = indices_from_render(read_png(source), palette, h, w);
  } else {
    const Checkpoint ckpt = read_checkpoint(source);
    if (static_cast<std::size_t>(ckpt.theta.classes) != palette.size())
      fail(Errc::palette, "mismatched palette: checkpoint has " + std::to_string(ckpt.theta.classes) +
                              " classes, palette has " + std::to_string(palette.size()) + " elements");
    indices = argmax_indices(ckpt.theta);
    h = ckpt.theta.height;
    w = ckpt.theta.width;
  }
  switch (kind) {
    case ExportKind::stitch:
      write_text(out, render_chart_svg(make_chart(indices, h, w, palette, title)));
      break;
    case ExportKind::mosaic:
      write_png(out, render_mosaic(indices, h, w, palette));
      break;
    case ExportKind::csv:
      write_text(out, chart_csv(indices, h, w));
      break;
  }
}

}  // namespace pxd::app
