#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "app.hpp"
#include "imaging.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace pxd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = PXD_TEST_DATA;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// A scratch directory holding a 3-color palette, an 8x8 target and a config.
struct Workspace {
  fs::path dir = oracle::temp_dir("app");
  Workspace() {
    write(dir / "pal.txt", "#202040\n#E0C068\n#3C8D5A\n");
    const Palette p = load_palette_file(dir / "pal.txt");
    std::vector<int> idx(64);
    for (int i = 0; i < 64; ++i) idx[i] = (i / 8 + i % 8) % 3;
    write_png(dir / "target.png", render_indices(idx, 8, 8, p));
  }
  ~Workspace() { fs::remove_all(dir); }
  json base() const {
    return json::parse(R"({
      "seed": 3, "steps": 200, "checkpoint_every": 50,
      "size": {"height": 8, "width": 8},
      "palette": {"file": "pal.txt"},
      "augment": {"p_gray": 0, "p_flip": 0, "p_persp": 0},
      "loss": {"w_fft": 0},
      "backend": {"spec": "delta:target.png"}
    })");
  }
  fs::path config(const json& doc, const std::string& name = "cfg.json") const {
    write(dir / name, doc.dump(2));
    return dir / name;
  }
};

}  // namespace

TEST_SUITE("app") {
  TEST_CASE("minimal run writes every artifact") {
    Workspace ws;
    const app::AppConfig cfg = app::load_config(ws.config(ws.base()));
    app::GenerateOptions opt;
    opt.output = ws.dir / "out";
    const app::GenerateSummary s = app::generate(cfg, opt);
    CHECK(s.steps == 200);
    CHECK(s.final_entropy < s.initial_entropy);
    const fs::path out = ws.dir / "out";
    for (const char* f : {"argmax.png", "softmax.png", "preview_x8.png", "entropy.png", "telemetry.csv", "resolved_config.json"})
      CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK(read_png(out / "argmax.png").height == 8);
    CHECK(read_png(out / "preview_x8.png").width == 64);
    CHECK(read_png(out / "entropy.png").height == 64);
    CHECK(json::parse(slurp(out / "resolved_config.json")).is_object());
    std::istringstream tel(slurp(out / "telemetry.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(tel, line)) ++lines;
    CHECK(lines == 201);
    for (const char* c : {"step_00000050.json", "step_00000200.json", "step_00000200.logits.f64", "step_00000200.m.f64"})
      CHECK_MESSAGE(fs::exists(out / "checkpoints" / c), c);
    // The delta target is palette-colored, so the run recovers it.
    CHECK(read_png(out / "argmax.png") == read_png(ws.dir / "target.png"));
  }

  TEST_CASE("output directory hygiene") {
    Workspace ws;
    const app::AppConfig cfg = app::load_config(ws.config(ws.base()));
    app::GenerateOptions opt;
    opt.output = ws.dir / "out";
    app::generate(cfg, opt);
    CHECK_PXD_ERROR(app::generate(cfg, opt), Errc::exists, "pass --force");
    write(ws.dir / "out" / "stale.txt", "x");
    opt.force = true;
    CHECK_NOTHROW(app::generate(cfg, opt));
    CHECK_FALSE(fs::exists(ws.dir / "out" / "stale.txt"));
  }

  TEST_CASE("rerun from resolved_config reproduces the run bit-exactly") {
    Workspace ws;
    json doc = ws.base();
    doc["augment"] = json::object();
    doc["steps"] = 60;
    app::GenerateOptions a;
    a.output = ws.dir / "a";
    app::generate(app::load_config(ws.config(doc)), a);
    const app::AppConfig again = app::load_config(ws.dir / "a" / "resolved_config.json");
    app::GenerateOptions b;
    b.output = ws.dir / "b";
    app::generate(again, b);
    CHECK(slurp(ws.dir / "a" / "telemetry.csv") == slurp(ws.dir / "b" / "telemetry.csv"));
    CHECK(slurp(ws.dir / "a" / "argmax.png") == slurp(ws.dir / "b" / "argmax.png"));
    // Only the output path differs between the two resolved configs.
    json ra = json::parse(slurp(ws.dir / "a" / "resolved_config.json"));
    json rb = json::parse(slurp(ws.dir / "b" / "resolved_config.json"));
    ra.erase("output");
    rb.erase("output");
    CHECK(ra == rb);
    CHECK(app::config_hash(again) == app::config_hash(app::load_config(ws.dir / "b" / "resolved_config.json")));
  }

  TEST_CASE("resolved config spells out defaults") {
    Workspace ws;
    const json r = app::resolved_config(app::load_config(ws.config(ws.base())));
    CHECK(r["optimizer"]["lr"] == 0.25);
    CHECK(r["optimizer"]["warmup"] == 250);
    CHECK(r["loss"]["s"] == 40.0);
    CHECK(r["loss"]["w_fft"] == 0.0);
    CHECK(app::resolved_config(app::load_config(ws.config(json{{"palette", {{"file", "pal.txt"}}}, {"backend", {{"spec", "delta:target.png"}}}}, "bare.json")))["loss"]["w_fft"] == 20.0);
    CHECK(r["generator"]["tau"] == 1.0);
    CHECK(r["schedule"]["a"] == 20);
    CHECK(r["schedule"]["b_start"] == 980);
    CHECK(r["schedule"]["b_end"] == 800);
    CHECK(r["backend"]["canny_scale"] == 0.35);
    CHECK(fs::path(r["palette"]["file"].get<std::string>()).is_absolute());
  }

  TEST_CASE("config hash ignores the output path and tracks settings") {
    Workspace ws;
    app::AppConfig a = app::load_config(ws.config(ws.base()));
    app::AppConfig b = a;
    b.output = "/elsewhere";
    CHECK(app::config_hash(a) == app::config_hash(b));
    CHECK(app::config_hash(a).size() == 16);
    b.run.seed = 4;
    CHECK(app::config_hash(a) != app::config_hash(b));
  }

  TEST_CASE("resume continues to the same final state") {
    Workspace ws;
    const app::AppConfig cfg = app::load_config(ws.config(ws.base()));
    app::GenerateOptions full;
    full.output = ws.dir / "full";
    app::generate(cfg, full);
    app::GenerateOptions part;
    part.output = ws.dir / "part";
    part.resume = ws.dir / "full" / "checkpoints" / "step_00000100.json";
    app::generate(cfg, part);
    CHECK(slurp(ws.dir / "full" / "argmax.png") == slurp(ws.dir / "part" / "argmax.png"));
    CHECK(slurp(ws.dir / "full" / "checkpoints" / "step_00000200.logits.f64") ==
          slurp(ws.dir / "part" / "checkpoints" / "step_00000200.logits.f64"));
    json other = ws.base();
    other["seed"] = 9;
    app::GenerateOptions wrong;
    wrong.output = ws.dir / "wrong";
    wrong.resume = part.resume;
    CHECK_PXD_ERROR(app::generate(app::load_config(ws.config(other, "other.json")), wrong), Errc::config,
                    "different configuration");
  }

  TEST_CASE("config errors name the offending field") {
    Workspace ws;
    json doc = ws.base();
    doc.erase("palette");
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "palette: no palette given");
    doc = ws.base();
    doc["loss"] = {{"w_ff", 2}};
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "unknown key 'loss.w_ff'");
    doc = ws.base();
    doc["stepz"] = 2;
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "unknown key 'stepz'");
    doc = ws.base();
    doc["steps"] = "many";
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "steps must be an integer");
    doc = ws.base();
    doc["generator"] = {{"tau", "hot"}};
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "generator.tau must be a number");
    doc = ws.base();
    doc["backend"]["spec"] = "magic:1";
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "unknown backend");
    doc = ws.base();
    doc["backend"]["spec"] = "remote:nohost";
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "remote:<host:port>");
    doc = ws.base();
    doc["palette"]["colors"] = {"#000000", "#FFFFFF"};
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "exactly one");
    doc = ws.base();
    doc["palette"] = {{"kmeans", 4}};
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "needs input.image");
    doc = ws.base();
    doc["generator"] = {{"init", "image"}};
    CHECK_PXD_ERROR(app::load_config(ws.config(doc)), Errc::config, "needs input.image");
    write(ws.dir / "broken.json", "{ \"steps\": ");
    CHECK_PXD_ERROR(app::load_config(ws.dir / "broken.json"), Errc::config, "not valid JSON");
    CHECK_PXD_ERROR(app::load_config(ws.dir / "missing.json"), Errc::io, "cannot read config");
  }

  TEST_CASE("comments are allowed in config files") {
    Workspace ws;
    write(ws.dir / "c.json", "// run settings\n" + ws.base().dump(2));
    CHECK(app::load_config(ws.dir / "c.json").run.steps == 200);
  }

  TEST_CASE("inline colors, image init and kmeans palettes") {
    Workspace ws;
    json doc = ws.base();
    doc["steps"] = 5;
    doc["palette"] = {{"colors", {"#202040", "#E0C068", "#3C8D5A"}}};
    doc["input"] = {{"image", "target.png"}};
    app::AppConfig cfg = app::load_config(ws.config(doc));
    CHECK(cfg.run.init == InitMode::image);
    app::GenerateOptions o;
    o.output = ws.dir / "colors";
    app::generate(cfg, o);
    doc["palette"] = {{"kmeans", 3}};
    app::AppConfig km = app::load_config(ws.config(doc, "km.json"));
    CHECK(app::load_inputs(km).palette.size() == 3);
    const app::LoadedInputs in = app::load_inputs(km);
    CHECK(in.condition.canny.has_value());
    CHECK(in.condition.depth.has_value());
  }

  TEST_CASE("gmm backend spec") {
    Workspace ws;
    write(ws.dir / "gmm.json", R"({"gamma": 0.1, "cond": [{"image": "target.png", "weight": 3}, {"image": "target.png", "weight": 1}]})");
    json doc = ws.base();
    doc["steps"] = 20;
    doc["backend"]["spec"] = "gmm:gmm.json";
    app::GenerateOptions o;
    o.output = ws.dir / "gmm";
    CHECK_NOTHROW(app::generate(app::load_config(ws.config(doc)), o));
    write(ws.dir / "gmm2.json", R"({"gamma": 0.1})");
    doc["backend"]["spec"] = "gmm:gmm2.json";
    o.output = ws.dir / "gmm2";
    CHECK_PXD_ERROR(app::generate(app::load_config(ws.config(doc)), o), Errc::config, "gmm.cond is required");
  }

  TEST_CASE("palette extraction writes a parseable file") {
    Workspace ws;
    const Palette p = app::palette_extract(ws.dir / "target.png", 3, 0, ws.dir / "extracted.txt");
    const Palette back = load_palette_file(ws.dir / "extracted.txt");
    CHECK(back == p);
    const Palette orig = load_palette_file(ws.dir / "pal.txt");
    std::set<std::string> a, b;
    for (std::size_t k = 0; k < 3; ++k) {
      a.insert(to_hex(back.mean_color(k)));
      b.insert(to_hex(orig.mean_color(k)));
    }
    CHECK(a == b);
    CHECK_PXD_ERROR(app::palette_extract(ws.dir / "target.png", 4, 0, ws.dir / "x.txt"), Errc::palette,
                    "insufficient distinct colors");
    CHECK_PXD_ERROR(app::palette_extract(ws.dir / "target.png", 1, 0, ws.dir / "x.txt"), Errc::config, "at least 2");
  }

  TEST_CASE("exports from a PNG and from a checkpoint") {
    Workspace ws;
    const Palette p4 = load_palette_file(kData / "palette4.txt");
    app::export_artifact(kData / "argmax_4x4.png", p4, app::ExportKind::stitch, ws.dir / "c.svg");
    CHECK(slurp(ws.dir / "c.svg") == slurp(kData / "chart_4x4.svg"));
    app::export_artifact(kData / "argmax_4x4.png", p4, app::ExportKind::csv, ws.dir / "c.csv");
    CHECK(slurp(ws.dir / "c.csv") == slurp(kData / "grid_4x4.csv"));
    const Palette tiles = app::load_palette_any(kData / "tiles");
    app::export_artifact(kData / "ckpt", tiles, app::ExportKind::mosaic, ws.dir / "m.png");
    CHECK(read_png(ws.dir / "m.png") == read_png(kData / "mosaic_4x4.png"));
    CHECK_PXD_ERROR(app::export_artifact(kData / "ckpt", p4, app::ExportKind::csv, ws.dir / "x.csv"), Errc::palette,
                    "mismatched palette");
    CHECK(app::parse_export_kind("mosaic") == app::ExportKind::mosaic);
    CHECK_PXD_ERROR(app::parse_export_kind("quilt"), Errc::invalid_argument, "unknown export kind");
  }
}
