#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augment.hpp"
#include "generator.hpp"
#include "guidance.hpp"
#include "loss.hpp"

namespace pxd {

struct AdamWConfig {
  double lr = 0.25;
  long warmup = 250;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  void validate() const;
};

struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;  // number of updates applied
};

// base * min(1, step / warmup) for the 1-based update index.
double learning_rate(const AdamWConfig& cfg, long step);

// One AdamW update with bias correction and decoupled weight decay.
// Returns the learning rate used.
double adamw_update(OptimState& state, std::span<double> params, std::span<const double> grad, const AdamWConfig& cfg);

// adamw_update on the logits followed by center().
double opt_step(OptimState& state, LogitField& theta, const LogitField& grad, const AdamWConfig& cfg);

enum class InitMode { random, image };

struct RunConfig {
  long steps = 6000;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  InitMode init = InitMode::random;
  InitNorm init_norm = InitNorm::l1;
  double init_scale = 0.1;
  GeneratorOptions generator;
  LossWeights loss;
  AugmentConfig augment;
  TimestepSampler timesteps;
  int schedule_steps = 1000;
  std::optional<double> fft_radius;
  AdamWConfig optimizer;
  long checkpoint_every = 500;

  void validate() const;
};

struct RunInputs {
  const Palette& palette;
  GuidanceBackend& backend;
  Condition condition;
  std::optional<Image> init_image;  // already downsampled to height×width
};

struct TelemetryRow {
  long step = 0;
  int t = 0;
  double lr = 0.0;
  double grad_norm_noise = 0.0;
  double grad_norm_sem = 0.0;
  double fft_loss = 0.0;
  double mean_norm_entropy = 0.0;
};

struct Checkpoint {
  long step = 0;  // completed steps
  LogitField theta;
  OptimState state;
  std::string config_hash;
};

struct RunHooks {
  std::function<void(const TelemetryRow&)> on_row;
  // Called every checkpoint_every steps and once more when a step fails.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct RunResult {
  LogitField theta;
  OptimState state;
  Image argmax;
  Image softmax;
  double initial_entropy = 0.0;
  std::vector<double> entropy_trace;
  std::vector<TelemetryRow> telemetry;
};

LogitField initial_field(const RunConfig& cfg, const RunInputs& in);

// Deterministic given the config, the backend, and (when resuming) the
// checkpoint. With cfg.steps == 0 the initialized field is returned as is.
RunResult run(const RunConfig& cfg, const RunInputs& in, const RunHooks& hooks = {},
              const Checkpoint* resume = nullptr);

// Raw little-endian f64 arrays (logits, first and second moments) next to
// a JSON sidecar holding dims, step and config hash.
std::filesystem::path write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
// Accepts the sidecar path or the directory's latest checkpoint.
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string format_telemetry_header();
std::string format_telemetry_row(const TelemetryRow& row);

}  // namespace pxd
