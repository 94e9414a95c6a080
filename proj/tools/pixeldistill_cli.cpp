// pixeldistill command line front end. Talks to the library only through
// the C API.
#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "pixeldistill/pixeldistill.h"

namespace {

// 1: a check failed, 2: bad usage or configuration, 3: runtime failure.
int exit_code(pxd_status st) {
  switch (st) {
    case PXD_OK: return 0;
    case PXD_ERR_GRADCHECK: return 1;
    case PXD_ERR_INVALID_ARGUMENT:
    case PXD_ERR_CONFIG: return 2;
    default: return 3;
  }
}

int report(pxd_status st) {
  if (st != PXD_OK) std::fprintf(stderr, "pixeldistill: %s: %s\n", pxd_status_name(st), pxd_last_error());
  return exit_code(st);
}

void print_progress(const pxd_progress* p, void*) {
  const long every = p->total >= 20 ? p->total / 20 : 1;
  if ((p->step + 1) % every == 0 || p->step + 1 == p->total)
    std::fprintf(stderr, "step %ld/%ld  t=%d  entropy=%.4f  fft=%.4g\n", p->step + 1, p->total, p->t,
                 p->mean_norm_entropy, p->fft_loss);
}

struct GenerateArgs {
  std::string config, out, resume;
  bool force = false, progress = false;
};

int cmd_generate(const GenerateArgs& a) {
  pxd_run* run = nullptr;
  pxd_status st = pxd_run_open(a.config.c_str(), &run);
  if (st == PXD_OK && (!a.out.empty() || a.force)) st = pxd_run_set_output(run, a.out.empty() ? nullptr : a.out.c_str(), a.force);
  if (st == PXD_OK && !a.resume.empty()) st = pxd_run_set_resume(run, a.resume.c_str());
  if (st == PXD_OK && a.progress) st = pxd_run_set_progress(run, print_progress, nullptr);
  pxd_run_summary summary{};
  if (st == PXD_OK) st = pxd_run_execute(run, &summary);
  pxd_run_free(run);
  if (st == PXD_OK)
    std::printf("done: %ld steps, mean normalized entropy %.4f -> %.4f\n", summary.steps, summary.initial_entropy,
                summary.final_entropy);
  return report(st);
}

struct ExtractArgs {
  std::string image, out;
  int n = 8;
  std::uint64_t seed = 0;
};

int cmd_palette_extract(const ExtractArgs& a) {
  pxd_palette* p = nullptr;
  const pxd_status st = pxd_palette_extract(a.image.c_str(), a.n, a.seed, a.out.c_str(), &p);
  if (st == PXD_OK) std::printf("wrote %zu colors to %s\n", pxd_palette_size(p), a.out.c_str());
  pxd_palette_free(p);
  return report(st);
}

struct ExportArgs {
  std::string source, palette, kind, out, title;
};

int cmd_export(const ExportArgs& a) {
  pxd_export_kind kind = a.kind == "mosaic" ? PXD_EXPORT_MOSAIC : a.kind == "csv" ? PXD_EXPORT_CSV : PXD_EXPORT_STITCH;
  pxd_palette* p = nullptr;
  pxd_status st = pxd_palette_load(a.palette.c_str(), &p);
  if (st == PXD_OK) st = pxd_export(a.source.c_str(), p, kind, a.out.c_str(), a.title.empty() ? nullptr : a.title.c_str());
  pxd_palette_free(p);
  return report(st);
}

struct GradcheckArgs {
  int size = 4, n = 3;
  std::uint64_t seed = 0;
  bool inject = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  pxd_gradcheck_report r{};
  const pxd_status st = pxd_gradcheck(a.size, a.n, a.seed, a.inject ? PXD_GRADCHECK_INJECT_SIGN_ERROR : 0, &r);
  for (int i = 0; i < r.n_stages; ++i)
    std::printf("%-18s max_rel_err=%.3e  threshold=%.0e  %s\n", r.stages[i].name, r.stages[i].error,
                r.stages[i].threshold, r.stages[i].passed ? "ok" : "FAIL");
  return report(st);
}

struct ServeArgs {
  std::string target, uncond;
  int port = -1;
  bool stdio = false;
  int max_connections = 0;
};

void announce(int port, void*) {
  std::printf("listening on 127.0.0.1:%d\n", port);
  std::fflush(stdout);
}

int cmd_serve_echo(const ServeArgs& a) {
  pxd_echo_server* server = nullptr;
  pxd_status st = pxd_echo_server_create(a.target.c_str(), a.uncond.empty() ? nullptr : a.uncond.c_str(), &server);
  if (st == PXD_OK) {
    st = a.stdio ? pxd_echo_server_serve_stdio(server)
                 : pxd_echo_server_serve_tcp(server, a.port, a.max_connections, announce, nullptr);
  }
  pxd_echo_server_free(server);
  return report(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Palette-constrained image generation by score distillation"};
  app.set_version_flag("--version", pxd_version());
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Optimize a logit field and write the run artifacts");
  g->add_option("config", gen.config, "JSON config file")->required()->check(CLI::ExistingFile);
  g->add_option("-o,--out", gen.out, "Output directory (overrides the config)");
  g->add_flag("-f,--force", gen.force, "Replace a non-empty output directory");
  g->add_option("--resume", gen.resume, "Checkpoint sidecar or checkpoint directory to continue from");
  g->add_flag("-p,--progress", gen.progress, "Print progress to stderr");

  ExtractArgs ext;
  auto* e = app.add_subcommand("palette-extract", "Cluster an image's colors into a palette file");
  e->add_option("image", ext.image, "Input PNG")->required()->check(CLI::ExistingFile);
  e->add_option("-n,--colors", ext.n, "Number of colors")->required();
  e->add_option("-o,--out", ext.out, "Palette file to write")->required();
  e->add_option("--seed", ext.seed, "k-means++ seed");

  ExportArgs exp;
  auto* x = app.add_subcommand("export", "Write a stitch chart, mosaic or CSV from a result");
  x->add_option("source", exp.source, "Checkpoint (.json or directory) or argmax PNG")->required()->check(CLI::ExistingPath);
  x->add_option("--palette", exp.palette, "Palette file or tile directory")->required()->check(CLI::ExistingPath);
  x->add_option("--kind", exp.kind, "stitch, mosaic or csv")->required()->check(CLI::IsMember({"stitch", "mosaic", "csv"}));
  x->add_option("-o,--out", exp.out, "Output file")->required();
  x->add_option("--title", exp.title, "Chart title");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference checks of every analytic gradient");
  c->add_option("--size", gc.size, "Grid size (2..8)");
  c->add_option("-n,--classes", gc.n, "Palette size");
  c->add_option("--seed", gc.seed, "Random seed");
  c->add_flag("--inject-sign-error", gc.inject, "Negate the pipeline gradient (negative control)");

  ServeArgs srv;
  auto* s = app.add_subcommand("serve-echo", "Serve delta-oracle gradients over the guidance wire protocol");
  s->add_option("--target", srv.target, "Conditional target PNG")->required()->check(CLI::ExistingFile);
  s->add_option("--uncond", srv.uncond, "Unconditional target PNG (default: the conditional target)")->check(CLI::ExistingFile);
  auto* port = s->add_option("--port", srv.port, "TCP port on 127.0.0.1 (0 = any free port)");
  auto* stdio = s->add_flag("--stdio", srv.stdio, "Serve one session on stdin/stdout");
  port->excludes(stdio);
  s->add_option("--max-connections", srv.max_connections, "Exit after this many connections (0 = never)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  if (g->parsed()) return cmd_generate(gen);
  if (e->parsed()) return cmd_palette_extract(ext);
  if (x->parsed()) return cmd_export(exp);
  if (c->parsed()) return cmd_gradcheck(gc);
  if (!srv.stdio && srv.port < 0) {
    std::fprintf(stderr, "pixeldistill: serve-echo needs --port or --stdio\n");
    return 2;
  }
  return cmd_serve_echo(srv);
}
