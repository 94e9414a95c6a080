#include "optimize.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "imaging.hpp"
#include "log.hpp"

namespace pxd {

void AdamWConfig::validate() const {
  if (!(lr > 0)) fail(Errc::config, "optimizer: lr must be positive");
  if (warmup < 0) fail(Errc::config, "optimizer: warmup must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail(Errc::config, "optimizer: betas must lie in [0,1)");
  if (!(eps > 0)) fail(Errc::config, "optimizer: eps must be positive");
  if (!(weight_decay >= 0)) fail(Errc::config, "optimizer: weight_decay must be >= 0");
}

double learning_rate(const AdamWConfig& cfg, long step) {
  if (cfg.warmup <= 0) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup));
}

double adamw_update(OptimState& state, std::span<double> params, std::span<const double> grad, const AdamWConfig& cfg) {
  if (params.size() != grad.size()) fail(Errc::invalid_argument, "adamw: gradient shape mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double lr = learning_rate(cfg, state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * cfg.weight_decay * params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return lr;
}

double opt_step(OptimState& state, LogitField& theta, const LogitField& grad, const AdamWConfig& cfg) {
  if (!theta.same_shape(grad)) fail(Errc::invalid_argument, "opt_step: gradient shape mismatch");
  const double lr = adamw_update(state, theta.values, grad.values, cfg);
  center(theta);
  return lr;
}

void RunConfig::validate() const {
  if (steps < 0) fail(Errc::config, "steps must be >= 0");
  if (height < 1 || width < 1) fail(Errc::config, "size must be positive");
  if (!(init_scale > 0)) fail(Errc::config, "generator.init_scale must be positive");
  if (!(generator.tau > 0)) fail(Errc::config, "generator.tau must be positive");
  loss.validate();
  augment.validate();
  timesteps.validate(schedule_steps);
  optimizer.validate();
  if (checkpoint_every < 0) fail(Errc::config, "checkpoint_every must be >= 0");
}

LogitField initial_field(const RunConfig& cfg, const RunInputs& in) {
  const int n = static_cast<int>(in.palette.size());
  if (cfg.init == InitMode::image) {
    if (!in.init_image) fail(Errc::config, "image initialization needs an input image");
    if (in.init_image->height != cfg.height || in.init_image->width != cfg.width)
      fail(Errc::invalid_argument, "init image must be downsampled to the output size");
    return init_from_image(*in.init_image, in.palette, cfg.init_norm);
  }
  RngStreams rng{cfg.seed};
  return init_random(cfg.height, cfg.width, n, rng.seed(Stream::init, 0), cfg.init_scale);
}

RunResult run(const RunConfig& cfg, const RunInputs& in, const RunHooks& hooks, const Checkpoint* resume) {
  cfg.validate();
  RunResult result;
  OptimState state;
  long start = 0;
  if (resume != nullptr) {
    if (resume->theta.height != cfg.height || resume->theta.width != cfg.width ||
        static_cast<std::size_t>(resume->theta.classes) != in.palette.size())
      fail(Errc::config, "checkpoint does not match the run configuration");
    result.theta = resume->theta;
    state = resume->state;
    start = resume->step;
  } else {
    result.theta = initial_field(cfg, in);
  }
  result.initial_entropy = entropy_map(softmax_probs(result.theta)).mean;

  const int rh = cfg.height * in.palette.tile_height(), rw = cfg.width * in.palette.tile_width();
  const FftMask mask = make_fft_mask(rh, rw, cfg.fft_radius);
  const StepContext ctx{in.palette, in.backend,  in.condition,   cfg.augment,         cfg.loss,
                        mask,       cfg.generator, cfg.timesteps, RngStreams{cfg.seed}};

  for (long step = start; step < cfg.steps; ++step) {
    StepOutput out;
    try {
      out = lsds_step(result.theta, ctx, step, cfg.steps);
    } catch (const Error& e) {
      log::error("step " + std::to_string(step) + " failed: " + e.what());
      if (hooks.on_checkpoint) hooks.on_checkpoint(Checkpoint{step, result.theta, state, {}});
      throw;
    }
    TelemetryRow row;
    row.step = step;
    row.t = out.diagnostics.t;
    row.lr = opt_step(state, result.theta, out.grad, cfg.optimizer);
    row.grad_norm_noise = out.diagnostics.grad_norm_noise;
    row.grad_norm_sem = out.diagnostics.grad_norm_sem;
    row.fft_loss = out.diagnostics.fft_loss;
    row.mean_norm_entropy = entropy_map(softmax_probs(result.theta)).mean;
    result.entropy_trace.push_back(row.mean_norm_entropy);
    result.telemetry.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(Checkpoint{step + 1, result.theta, state, {}});
  }
  result.state = std::move(state);
  result.argmax = render(result.theta, in.palette, RenderMode::argmax);
  result.softmax = render(result.theta, in.palette, RenderMode::softmax);
  return result;
}

namespace {

void write_f64(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write '" + path.string() + "'");
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) fail(Errc::io, "short write to '" + path.string() + "'");
}

std::vector<double> read_f64(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot read '" + path.string() + "'");
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)) || in.peek() != EOF)
    fail(Errc::io, "checkpoint array '" + path.string() + "' has the wrong size");
  return values;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::filesystem::path write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  char stem[32];
  std::snprintf(stem, sizeof stem, "step_%08ld", ckpt.step);
  const auto base = dir / stem;
  write_f64(base.string() + ".logits.f64", ckpt.theta.values);
  const std::vector<double> zeros(ckpt.theta.values.size(), 0.0);
  write_f64(base.string() + ".m.f64", ckpt.state.m.empty() ? zeros : ckpt.state.m);
  write_f64(base.string() + ".v.f64", ckpt.state.v.empty() ? zeros : ckpt.state.v);
  nlohmann::json meta{{"height", ckpt.theta.height},
                      {"width", ckpt.theta.width},
                      {"classes", ckpt.theta.classes},
                      {"step", ckpt.step},
                      {"optimizer_step", ckpt.state.step},
                      {"config_hash", ckpt.config_hash},
                      {"format", "f64-le"}};
  const auto json_path = std::filesystem::path(base.string() + ".json");
  std::ofstream out(json_path);
  out << meta.dump(2) << '\n';
  if (!out) fail(Errc::io, "cannot write '" + json_path.string() + "'");
  return json_path;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  fs::path sidecar = path;
  if (fs::is_directory(path)) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".json" && e.path().filename().string().starts_with("step_")) found.push_back(e.path());
    if (found.empty()) fail(Errc::io, "no checkpoints in '" + path.string() + "'");
    std::sort(found.begin(), found.end());
    sidecar = found.back();
  }
  std::ifstream in(sidecar);
  if (!in) fail(Errc::io, "cannot read checkpoint '" + sidecar.string() + "'");
  nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
  if (meta.is_discarded()) fail(Errc::io, "checkpoint sidecar '" + sidecar.string() + "' is not valid JSON");
  Checkpoint ckpt;
  try {
    ckpt.theta = LogitField(meta.at("height").get<int>(), meta.at("width").get<int>(), meta.at("classes").get<int>());
    ckpt.step = meta.at("step").get<long>();
    ckpt.state.step = meta.at("optimizer_step").get<long>();
    ckpt.config_hash = meta.value("config_hash", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io, "checkpoint sidecar '" + sidecar.string() + "': " + e.what());
  }
  std::string base = sidecar.string();
  base.resize(base.size() - 5);
  const std::size_t count = ckpt.theta.values.size();
  ckpt.theta.values = read_f64(base + ".logits.f64", count);
  ckpt.state.m = read_f64(base + ".m.f64", count);
  ckpt.state.v = read_f64(base + ".v.f64", count);
  return ckpt;
}

std::string format_telemetry_header() {
  return "step,t,lr,grad_norm_noise,grad_norm_sem,fft_loss,mean_norm_entropy\n";
}

std::string format_telemetry_row(const TelemetryRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.t) + "," + fmt_double(r.lr) + "," +
         fmt_double(r.grad_norm_noise) + "," + fmt_double(r.grad_norm_sem) + "," + fmt_double(r.fft_loss) + "," +
         fmt_double(r.mean_norm_entropy) + "\n";
}

}  // namespace pxd
