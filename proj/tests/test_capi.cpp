// Exercises the shared library through the C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pixeldistill/pixeldistill.h"

namespace fs = std::filesystem;

namespace {

const fs::path kData = PXD_TEST_DATA;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& tag) {
  std::mt19937_64 rng(std::random_device{}());
  fs::path d = fs::temp_directory_path() / ("pxd_capi_" + tag + "_" + std::to_string(rng() % 1000000000));
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(pxd_version()) == "0.1.0");
  CHECK(std::string(pxd_status_name(PXD_ERR_PALETTE)) == "palette error");
  CHECK(std::string(pxd_status_name(static_cast<pxd_status>(42))) == "unknown status");
}

TEST_CASE("palette parse, query and errors") {
  pxd_palette* p = nullptr;
  REQUIRE(pxd_palette_parse("#000000\n#FF8000\n", &p) == PXD_OK);
  CHECK(pxd_palette_size(p) == 2);
  CHECK(pxd_palette_is_tiled(p) == 0);
  double rgb[3];
  REQUIRE(pxd_palette_color(p, 1, rgb) == PXD_OK);
  CHECK(rgb[0] == 1.0);
  CHECK(rgb[1] == doctest::Approx(128.0 / 255));
  CHECK(pxd_palette_color(p, 2, rgb) == PXD_ERR_INVALID_ARGUMENT);
  pxd_palette_free(p);

  pxd_palette* bad = nullptr;
  CHECK(pxd_palette_parse("#FF0000\n#FF0000", &bad) == PXD_ERR_PALETTE);
  CHECK(bad == nullptr);
  CHECK(std::string(pxd_last_error()).find("duplicate") != std::string::npos);
  CHECK(pxd_palette_parse(nullptr, &bad) == PXD_ERR_INVALID_ARGUMENT);
  CHECK(pxd_palette_load("/nonexistent.txt", &bad) == PXD_ERR_IO);
  pxd_palette_free(nullptr);
  CHECK(pxd_palette_size(nullptr) == 0);
}

TEST_CASE("tile palettes load from a directory") {
  pxd_palette* p = nullptr;
  REQUIRE(pxd_palette_load((kData / "tiles").c_str(), &p) == PXD_OK);
  CHECK(pxd_palette_size(p) == 3);
  CHECK(pxd_palette_is_tiled(p) == 1);
  pxd_palette_free(p);
}

TEST_CASE("palette extraction") {
  const fs::path dir = scratch("extract");
  pxd_palette* p = nullptr;
  REQUIRE(pxd_palette_extract((kData / "argmax_4x4.png").c_str(), 4, 0, (dir / "p.txt").c_str(), &p) == PXD_OK);
  CHECK(pxd_palette_size(p) == 4);
  pxd_palette_free(p);
  CHECK(pxd_palette_extract((kData / "argmax_4x4.png").c_str(), 5, 0, nullptr, nullptr) == PXD_ERR_PALETTE);
  CHECK(std::string(pxd_last_error()).find("insufficient distinct colors") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("export through the C API matches the goldens") {
  const fs::path dir = scratch("export");
  pxd_palette* p = nullptr;
  REQUIRE(pxd_palette_load((kData / "palette4.txt").c_str(), &p) == PXD_OK);
  REQUIRE(pxd_export((kData / "argmax_4x4.png").c_str(), p, PXD_EXPORT_STITCH, (dir / "c.svg").c_str(), nullptr) == PXD_OK);
  CHECK(slurp(dir / "c.svg") == slurp(kData / "chart_4x4.svg"));
  REQUIRE(pxd_export((kData / "argmax_4x4.png").c_str(), p, PXD_EXPORT_CSV, (dir / "c.csv").c_str(), nullptr) == PXD_OK);
  CHECK(slurp(dir / "c.csv") == slurp(kData / "grid_4x4.csv"));
  CHECK(pxd_export((kData / "ckpt").c_str(), p, PXD_EXPORT_CSV, (dir / "x.csv").c_str(), nullptr) == PXD_ERR_PALETTE);
  CHECK(pxd_export((kData / "argmax_4x4.png").c_str(), p, static_cast<pxd_export_kind>(9), (dir / "x").c_str(), nullptr) ==
        PXD_ERR_INVALID_ARGUMENT);
  pxd_palette_free(p);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck report") {
  pxd_gradcheck_report r{};
  CHECK(pxd_gradcheck(4, 3, 0, 0, &r) == PXD_OK);
  CHECK(r.passed == 1);
  CHECK(r.n_stages == 6);
  CHECK(std::string(r.stages[5].name) == "pipeline");
  CHECK(pxd_gradcheck(4, 3, 0, PXD_GRADCHECK_INJECT_SIGN_ERROR, &r) == PXD_ERR_GRADCHECK);
  CHECK(r.passed == 0);
  CHECK(r.stages[5].passed == 0);
  CHECK(pxd_gradcheck(4, 1, 0, 0, &r) == PXD_ERR_CONFIG);
}

namespace {

struct Progress {
  long calls = 0;
  long last_step = -1;
};

void on_progress(const pxd_progress* p, void* user) {
  auto* s = static_cast<Progress*>(user);
  ++s->calls;
  s->last_step = p->step;
}

}  // namespace

TEST_CASE("run lifecycle") {
  const fs::path dir = scratch("run");
  fs::copy_file(kData / "palette4.txt", dir / "pal.txt");
  fs::copy_file(kData / "argmax_4x4.png", dir / "target.png");
  std::ofstream(dir / "cfg.json") << R"({"seed": 1, "steps": 40, "size": {"height": 4, "width": 4},
    "palette": {"file": "pal.txt"}, "backend": {"spec": "delta:target.png"}})";

  pxd_run* run = nullptr;
  REQUIRE(pxd_run_open((dir / "cfg.json").c_str(), &run) == PXD_OK);
  size_t len = 0;
  REQUIRE(pxd_run_resolved_config(run, nullptr, &len) == PXD_OK);
  std::vector<char> buf(len);
  REQUIRE(pxd_run_resolved_config(run, buf.data(), &len) == PXD_OK);
  CHECK(std::string(buf.data()).find("\"steps\": 40") != std::string::npos);
  char tiny[8];
  size_t tlen = sizeof tiny;
  REQUIRE(pxd_run_resolved_config(run, tiny, &tlen) == PXD_OK);
  CHECK(tlen == len);
  CHECK(std::string(tiny).size() == 7);

  REQUIRE(pxd_run_set_output(run, (dir / "out").c_str(), 0) == PXD_OK);
  Progress prog;
  REQUIRE(pxd_run_set_progress(run, on_progress, &prog) == PXD_OK);
  pxd_run_summary s{};
  REQUIRE(pxd_run_execute(run, &s) == PXD_OK);
  CHECK(s.steps == 40);
  CHECK(prog.calls == 40);
  CHECK(prog.last_step == 39);
  CHECK(fs::exists(dir / "out" / "argmax.png"));
  CHECK(pxd_run_execute(run, &s) == PXD_ERR_EXISTS);
  REQUIRE(pxd_run_set_output(run, nullptr, 1) == PXD_OK);
  CHECK(pxd_run_execute(run, nullptr) == PXD_OK);
  pxd_run_free(run);

  pxd_run* bad = nullptr;
  std::ofstream(dir / "bad.json") << R"({"steps": 4, "palette": {"file": "pal.txt"}, "bogus": 1})";
  CHECK(pxd_run_open((dir / "bad.json").c_str(), &bad) == PXD_ERR_CONFIG);
  CHECK(std::string(pxd_last_error()).find("unknown key 'bogus'") != std::string::npos);
  CHECK(pxd_run_execute(nullptr, nullptr) == PXD_ERR_INVALID_ARGUMENT);
  pxd_run_free(nullptr);
  fs::remove_all(dir);
}

TEST_CASE("echo server creation") {
  pxd_echo_server* s = nullptr;
  CHECK(pxd_echo_server_create((kData / "argmax_4x4.png").c_str(), nullptr, &s) == PXD_OK);
  pxd_echo_server_free(s);
  CHECK(pxd_echo_server_create("/nonexistent.png", nullptr, &s) == PXD_ERR_IO);
}
