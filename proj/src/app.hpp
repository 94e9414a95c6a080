#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidance.hpp"
#include "optimize.hpp"
#include "palette.hpp"

namespace pxd::app {

namespace fs = std::filesystem;

// Exactly one palette source.
struct PaletteSource {
  std::optional<fs::path> file;
  std::optional<fs::path> tiles;
  std::optional<std::vector<std::string>> colors;
  std::optional<int> kmeans;  // cluster the input image into n colors
  std::uint64_t kmeans_seed = 0;
};

struct InputSource {
  std::optional<fs::path> image;
  std::optional<fs::path> depth;
  double canny_low = 0.1;
  double canny_high = 0.2;
};

// delta:<cond.png>[,<uncond.png>] | gmm:<spec.json> | remote:<host:port> | remote-stdio:<command>
struct BackendSource {
  std::string spec;
  std::string prompt;
  std::string uncond_prompt;
  double canny_scale = 0.35;
  double depth_scale = 0.35;
  double timeout_s = 120.0;
};

struct AppConfig {
  RunConfig run;
  PaletteSource palette;
  InputSource input;
  BackendSource backend;
  fs::path output = "out";
  int preview_scale = 8;
  bool init_explicit = false;
  bool augment_target_explicit = false;
};

// Relative paths resolve against base_dir. Unknown keys are errors.
AppConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir);
AppConfig load_config(const fs::path& path);

// Every setting with defaults made explicit and absolute paths, in the same
// schema parse_config accepts.
nlohmann::json resolved_config(const AppConfig& cfg);
// FNV-1a over the resolved config without the output path.
std::string config_hash(const AppConfig& cfg);

struct LoadedInputs {
  Palette palette;
  std::optional<Image> image;  // full resolution
  Condition condition;
};
LoadedInputs load_inputs(const AppConfig& cfg);

// Sizes the backend's targets to the augmented image size.
std::unique_ptr<GuidanceBackend> make_backend(const AppConfig& cfg, const Palette& palette);

struct GenerateOptions {
  std::optional<fs::path> output;  // overrides cfg.output
  bool force = false;
  std::optional<fs::path> resume;  // checkpoint sidecar or directory
  std::function<void(const TelemetryRow&, long total)> progress;
};

struct GenerateSummary {
  fs::path output;
  long steps = 0;
  double initial_entropy = 0.0;
  double final_entropy = 0.0;
};

// Writes argmax.png, softmax.png, preview_x8.png, entropy.png, telemetry.csv,
// checkpoints/ and resolved_config.json under the output directory.
GenerateSummary generate(const AppConfig& cfg, const GenerateOptions& options = {});

// Runs k-means and writes a palette file.
Palette palette_extract(const fs::path& image, int n, std::uint64_t seed, const fs::path& out);

// A palette file or a directory of tile PNGs.
Palette load_palette_any(const fs::path& path);

enum class ExportKind { stitch, mosaic, csv };
ExportKind parse_export_kind(const std::string& s);

// `source` is a checkpoint (sidecar or directory) or an argmax PNG.
void export_artifact(const fs::path& source, const Palette& palette, ExportKind kind, const fs::path& out,
                     const std::string& title = {});

}  // namespace pxd::app
