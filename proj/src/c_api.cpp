#include "pixeldistill/pixeldistill.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "app.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "imaging.hpp"
#include "log.hpp"
#include "protocol.hpp"
#include "transport.hpp"

struct pxd_palette {
  pxd::Palette value;
};

struct pxd_run {
  pxd::app::AppConfig config;
  pxd::app::GenerateOptions options;
  pxd_progress_fn progress = nullptr;
  void* user = nullptr;
};

struct pxd_echo_server {
  pxd::wire::EchoDeltaServer server;
};

namespace {

constexpr int kServerReadTimeoutMs = 3'600'000;

thread_local std::string g_last_error;

template <typename F>
pxd_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return PXD_OK;
  } catch (const pxd::Error& e) {
    g_last_error = e.what();
    return static_cast<pxd_status>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return PXD_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return PXD_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PXD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PXD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PXD_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) pxd::fail(pxd::Errc::invalid_argument, what);
}

}  // namespace

extern "C" {

const char* pxd_version(void) { return "0.1.0"; }

const char* pxd_status_name(pxd_status status) {
  switch (status) {
    case PXD_OK: return "ok";
    case PXD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PXD_ERR_CONFIG: return "config error";
    case PXD_ERR_IO: return "I/O error";
    case PXD_ERR_PALETTE: return "palette error";
    case PXD_ERR_PROTOCOL: return "protocol error";
    case PXD_ERR_BACKEND: return "backend error";
    case PXD_ERR_GRADCHECK: return "gradient check failed";
    case PXD_ERR_EXISTS: return "already exists";
    case PXD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pxd_last_error(void) { return g_last_error.c_str(); }

pxd_status pxd_palette_parse(const char* text, pxd_palette** out) {
  return guard([&] {
    require(text != nullptr && out != nullptr, "pxd_palette_parse: null argument");
    *out = new pxd_palette{pxd::parse_palette(text)};
  });
}

pxd_status pxd_palette_load(const char* path, pxd_palette** out) {
  return guard([&] {
    require(path != nullptr && out != nullptr, "pxd_palette_load: null argument");
    *out = new pxd_palette{pxd::app::load_palette_any(path)};
  });
}

pxd_status pxd_palette_extract(const char* image_path, int n, uint64_t seed, const char* out_path, pxd_palette** out) {
  return guard([&] {
    require(image_path != nullptr, "pxd_palette_extract: null image path");
    pxd::Palette p;
    if (out_path != nullptr) {
      p = pxd::app::palette_extract(image_path, n, seed, out_path);
    } else {
      pxd::Image img = pxd::read_png(image_path);
      p = pxd::kmeans_palette(img.channels == 3 ? img : pxd::replicate_channels(img, 3), n, seed);
    }
    if (out != nullptr) *out = new pxd_palette{std::move(p)};
  });
}

size_t pxd_palette_size(const pxd_palette* palette) { return palette ? palette->value.size() : 0; }

int pxd_palette_is_tiled(const pxd_palette* palette) { return palette && palette->value.is_tiled() ? 1 : 0; }

pxd_status pxd_palette_color(const pxd_palette* palette, size_t k, double rgb[3]) {
  return guard([&] {
    require(palette != nullptr && rgb != nullptr, "pxd_palette_color: null argument");
    require(k < palette->value.size(), "pxd_palette_color: index out of range");
    const pxd::Rgb c = palette->value.mean_color(k);
    for (int i = 0; i < 3; ++i) rgb[i] = c[i];
  });
}

void pxd_palette_free(pxd_palette* palette) { delete palette; }

pxd_status pxd_run_open(const char* config_path, pxd_run** out) {
  return guard([&] {
    require(config_path != nullptr && out != nullptr, "pxd_run_open: null argument");
    auto run = std::make_unique<pxd_run>();
    run->config = pxd::app::load_config(config_path);
    *out = run.release();
  });
}

pxd_status pxd_run_set_output(pxd_run* run, const char* output_dir, int force) {
  return guard([&] {
    require(run != nullptr, "pxd_run_set_output: null run");
    if (output_dir != nullptr) run->options.output = output_dir;
    run->options.force = force != 0;
  });
}

pxd_status pxd_run_set_resume(pxd_run* run, const char* checkpoint_path) {
  return guard([&] {
    require(run != nullptr, "pxd_run_set_resume: null run");
    if (checkpoint_path != nullptr) run->options.resume = checkpoint_path;
    else run->options.resume.reset();
  });
}

pxd_status pxd_run_set_progress(pxd_run* run, pxd_progress_fn fn, void* user) {
  return guard([&] {
    require(run != nullptr, "pxd_run_set_progress: null run");
    run->progress = fn;
    run->user = user;
  });
}

pxd_status pxd_run_resolved_config(const pxd_run* run, char* buf, size_t* len) {
  return guard([&] {
    require(run != nullptr && len != nullptr, "pxd_run_resolved_config: null argument");
    const std::string text = pxd::app::resolved_config(run->config).dump(2);
    const size_t need = text.size() + 1;
    if (buf != nullptr && *len > 0) {
      const size_t n = std::min(*len - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
    *len = need;
  });
}

pxd_status pxd_run_execute(pxd_run* run, pxd_run_summary* summary) {
  return guard([&] {
    require(run != nullptr, "pxd_run_execute: null run");
    pxd::app::GenerateOptions opts = run->options;
    if (run->progress != nullptr) {
      opts.progress = [run](const pxd::TelemetryRow& row, long total) {
        const pxd_progress p{row.step,          total, row.t, row.lr, row.grad_norm_noise, row.grad_norm_sem,
                             row.fft_loss, row.mean_norm_entropy};
        run->progress(&p, run->user);
      };
    }
    const auto s = pxd::app::generate(run->config, opts);
    if (summary != nullptr) *summary = pxd_run_summary{s.steps, s.initial_entropy, s.final_entropy};
  });
}

void pxd_run_free(pxd_run* run) { delete run; }

pxd_status pxd_export(const char* source, const pxd_palette* palette, pxd_export_kind kind, const char* out_path,
                      const char* title) {
  return guard([&] {
    require(source != nullptr && palette != nullptr && out_path != nullptr, "pxd_export: null argument");
    pxd::app::ExportKind k;
    switch (kind) {
      case PXD_EXPORT_STITCH: k = pxd::app::ExportKind::stitch; break;
      case PXD_EXPORT_MOSAIC: k = pxd::app::ExportKind::mosaic; break;
      case PXD_EXPORT_CSV: k = pxd::app::ExportKind::csv; break;
      default: pxd::fail(pxd::Errc::invalid_argument, "pxd_export: unknown export kind");
    }
    pxd::app::export_artifact(source, palette->value, k, out_path, title != nullptr ? title : "");
  });
}

pxd_status pxd_gradcheck(int size, int classes, uint64_t seed, int flags, pxd_gradcheck_report* report) {
  pxd::GradcheckReport r;
  pxd_status st = guard([&] {
    r = pxd::run_gradcheck({size, classes, seed, (flags & PXD_GRADCHECK_INJECT_SIGN_ERROR) != 0});
  });
  if (st != PXD_OK) return st;
  if (report != nullptr) {
    *report = pxd_gradcheck_report{};
    report->n_stages = static_cast<int>(std::min<std::size_t>(r.stages.size(), PXD_GRADCHECK_MAX_STAGES));
    for (int i = 0; i < report->n_stages; ++i) {
      pxd_gradcheck_stage& s = report->stages[i];
      std::strncpy(s.name, r.stages[i].name.c_str(), sizeof s.name - 1);
      s.error = r.stages[i].error;
      s.threshold = r.stages[i].threshold;
      s.passed = r.stages[i].pass ? 1 : 0;
    }
    report->passed = r.pass ? 1 : 0;
  }
  if (!r.pass) {
    g_last_error = "gradient check failed";
    return PXD_ERR_GRADCHECK;
  }
  return PXD_OK;
}

pxd_status pxd_echo_server_create(const char* cond_png, const char* uncond_png, pxd_echo_server** out) {
  return guard([&] {
    require(cond_png != nullptr && out != nullptr, "pxd_echo_server_create: null argument");
    auto rgb = [](pxd::Image img) { return img.channels == 3 ? img : pxd::replicate_channels(img, 3); };
    pxd::Image cond = rgb(pxd::read_png(cond_png));
    pxd::Image uncond = uncond_png != nullptr ? rgb(pxd::read_png(uncond_png)) : cond;
    *out = new pxd_echo_server{pxd::wire::EchoDeltaServer(pxd::make_linear_schedule(), std::move(cond), std::move(uncond))};
  });
}

pxd_status pxd_echo_server_serve_stdio(pxd_echo_server* server) {
  return guard([&] {
    require(server != nullptr, "pxd_echo_server_serve_stdio: null server");
    pxd::FdTransport t(0, 1, kServerReadTimeoutMs, false);
    server->server.serve(t);
  });
}

pxd_status pxd_echo_server_serve_tcp(pxd_echo_server* server, int port, int max_connections,
                                     void (*on_listen)(int port, void* user), void* user) {
  return guard([&] {
    require(server != nullptr, "pxd_echo_server_serve_tcp: null server");
    pxd::TcpListener listener(port);
    if (on_listen != nullptr) on_listen(listener.port(), user);
    for (int served = 0; max_connections <= 0 || served < max_connections; ++served) {
      auto conn = listener.accept(kServerReadTimeoutMs, nullptr);
      try {
        server->server.serve(*conn);
      } catch (const pxd::Error& e) {
        pxd::log::warn(std::string("connection dropped: ") + e.what());
      }
    }
  });
}

void pxd_echo_server_free(pxd_echo_server* server) { delete server; }

}  // extern "C"
