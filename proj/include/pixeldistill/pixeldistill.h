/* pixeldistill C API.
 *
 * All functions return a pxd_status. On failure a description is available
 * from pxd_last_error() on the same thread until the next API call there.
 * Handles are opaque and owned by the caller; free them with the matching
 * *_free function (NULL is accepted).
 */
#ifndef PIXELDISTILL_H
#define PIXELDISTILL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PXD_API __declspec(dllexport)
#else
#define PXD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pxd_status {
  PXD_OK = 0,
  PXD_ERR_INVALID_ARGUMENT = 1,
  PXD_ERR_CONFIG = 2,
  PXD_ERR_IO = 3,
  PXD_ERR_PALETTE = 4,
  PXD_ERR_PROTOCOL = 5,
  PXD_ERR_BACKEND = 6,
  PXD_ERR_GRADCHECK = 7,
  PXD_ERR_EXISTS = 8,
  PXD_ERR_INTERNAL = 99
} pxd_status;

PXD_API const char* pxd_version(void);
PXD_API const char* pxd_status_name(pxd_status status);
PXD_API const char* pxd_last_error(void);

/* Palettes */

typedef struct pxd_palette pxd_palette;

/* One "#RRGGBB" per line; ';' comments and blank lines ignored. */
PXD_API pxd_status pxd_palette_parse(const char* text, pxd_palette** out);
/* A palette file, or a directory of equally sized tile PNGs. */
PXD_API pxd_status pxd_palette_load(const char* path, pxd_palette** out);
/* K-means over the image colors; writes the palette file when out_path is not NULL. */
PXD_API pxd_status pxd_palette_extract(const char* image_path, int n, uint64_t seed, const char* out_path,
                                       pxd_palette** out);
PXD_API size_t pxd_palette_size(const pxd_palette* palette);
PXD_API int pxd_palette_is_tiled(const pxd_palette* palette);
/* Mean color of element k, each channel in [0,1]. */
PXD_API pxd_status pxd_palette_color(const pxd_palette* palette, size_t k, double rgb[3]);
PXD_API void pxd_palette_free(pxd_palette* palette);

/* Generation */

typedef struct pxd_run pxd_run;

typedef struct pxd_progress {
  long step;
  long total;
  int t;
  double lr;
  double grad_norm_noise;
  double grad_norm_sem;
  double fft_loss;
  double mean_norm_entropy;
} pxd_progress;

typedef void (*pxd_progress_fn)(const pxd_progress* progress, void* user);

typedef struct pxd_run_summary {
  long steps;
  double initial_entropy;
  double final_entropy;
} pxd_run_summary;

/* Parses and validates a JSON config file. */
PXD_API pxd_status pxd_run_open(const char* config_path, pxd_run** out);
/* Overrides the configured output directory. */
PXD_API pxd_status pxd_run_set_output(pxd_run* run, const char* output_dir, int force);
PXD_API pxd_status pxd_run_set_resume(pxd_run* run, const char* checkpoint_path);
PXD_API pxd_status pxd_run_set_progress(pxd_run* run, pxd_progress_fn fn, void* user);
/* Writes the resolved config (JSON) into buf; *len receives the full size including the NUL. */
PXD_API pxd_status pxd_run_resolved_config(const pxd_run* run, char* buf, size_t* len);
PXD_API pxd_status pxd_run_execute(pxd_run* run, pxd_run_summary* summary);
PXD_API void pxd_run_free(pxd_run* run);

/* Export */

typedef enum pxd_export_kind { PXD_EXPORT_STITCH = 0, PXD_EXPORT_MOSAIC = 1, PXD_EXPORT_CSV = 2 } pxd_export_kind;

/* source: a checkpoint (sidecar .json or directory) or an argmax PNG. title may be NULL. */
PXD_API pxd_status pxd_export(const char* source, const pxd_palette* palette, pxd_export_kind kind,
                              const char* out_path, const char* title);

/* Gradient check */

#define PXD_GRADCHECK_MAX_STAGES 8
#define PXD_GRADCHECK_INJECT_SIGN_ERROR 1

typedef struct pxd_gradcheck_stage {
  char name[32];
  double error;
  double threshold;
  int passed;
} pxd_gradcheck_stage;

typedef struct pxd_gradcheck_report {
  int n_stages;
  pxd_gradcheck_stage stages[PXD_GRADCHECK_MAX_STAGES];
  int passed;
} pxd_gradcheck_report;

/* Returns PXD_ERR_GRADCHECK with the report filled when any stage fails. */
PXD_API pxd_status pxd_gradcheck(int size, int classes, uint64_t seed, int flags, pxd_gradcheck_report* report);

/* Echo guidance server (delta-oracle residuals in f32) */

typedef struct pxd_echo_server pxd_echo_server;

/* uncond_png may be NULL: the conditional target is used for both. */
PXD_API pxd_status pxd_echo_server_create(const char* cond_png, const char* uncond_png, pxd_echo_server** out);
/* Serves one session on stdin/stdout. */
PXD_API pxd_status pxd_echo_server_serve_stdio(pxd_echo_server* server);
/* Listens on 127.0.0.1:port (0 = any free port) and serves connections one at a
 * time. on_listen receives the bound port. max_connections 0 = unlimited. */
PXD_API pxd_status pxd_echo_server_serve_tcp(pxd_echo_server* server, int port, int max_connections,
                                             void (*on_listen)(int port, void* user), void* user);
PXD_API void pxd_echo_server_free(pxd_echo_server* server);

#ifdef __cplusplus
}
#endif

#endif /* PIXELDISTILL_H */
