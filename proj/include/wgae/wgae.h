/* C interface to the wgae library.
 *
 * Every handle is opaque and owned by the caller; release it with the
 * matching *_destroy function (NULL is accepted). Functions return a
 * wgae_status; on failure wgae_last_error() describes the problem. Status
 * values double as CLI exit codes. Strings returned through `const char**`
 * stay valid until the next call on the same handle; strings returned
 * through `char**` are released with wgae_string_free.
 */
#ifndef WGAE_H
#define WGAE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WGAE_API __declspec(dllexport)
#else
#define WGAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wgae_status {
  WGAE_OK = 0,
  WGAE_ERR_USAGE = 1,    /* bad argument, unknown key, out-of-range index */
  WGAE_ERR_DATA = 2,     /* malformed or inconsistent input data */
  WGAE_ERR_NUMERIC = 3,  /* non-finite values during training */
  WGAE_ERR_IO = 4,       /* file cannot be read or written */
  WGAE_ERR_INTERNAL = 5
} wgae_status;

typedef struct wgae_config wgae_config;
typedef struct wgae_dataset wgae_dataset;
typedef struct wgae_model wgae_model;
typedef struct wgae_report wgae_report;

/* Receives one log line (without newline). Returning 0 asks the caller to
 * stop early where that is supported (training); other callers ignore it. */
typedef int (*wgae_log_fn)(const char* line, void* user);

WGAE_API const char* wgae_version(void);
/* Message of the last failure on the calling thread; "" after success. */
WGAE_API const char* wgae_last_error(void);
WGAE_API void wgae_string_free(char* text);

/* ---- configuration ---------------------------------------------------- */

WGAE_API wgae_status wgae_config_create(wgae_config** out);
WGAE_API wgae_status wgae_config_load(const char* path, wgae_config** out);
WGAE_API wgae_status wgae_config_copy(const wgae_config* config, wgae_config** out);
WGAE_API wgae_status wgae_config_set(wgae_config* config, const char* key, const char* value);
WGAE_API wgae_status wgae_config_get(const wgae_config* config, const char* key, const char** value);
WGAE_API wgae_status wgae_config_validate(const wgae_config* config);
/* Canonical "key = value" text; loading it gives back the same config. */
WGAE_API wgae_status wgae_config_text(const wgae_config* config, const char** text);
WGAE_API size_t wgae_config_key_count(void);
WGAE_API const char* wgae_config_key(size_t index);
WGAE_API void wgae_config_destroy(wgae_config* config);

/* ---- datasets ---------------------------------------------------------- */

typedef struct wgae_ingest_options {
  const char* features;   /* required */
  const char* format;     /* "triples" (default when NULL) or "cora" */
  const char* edges;      /* edge list, or cites file for "cora"; may be NULL */
  const char* labels;     /* "node label" lines; may be NULL */
  const char* vocabulary; /* one word per line; may be NULL */
  double tau_a;           /* > 0 builds a cosine graph when no edges are given */
} wgae_ingest_options;

typedef struct wgae_dataset_info {
  uint64_t nodes, vocab, nonzeros, edges, labeled;
  int classes;
  int has_vocabulary;
} wgae_dataset_info;

WGAE_API wgae_status wgae_dataset_ingest(const wgae_ingest_options* options, wgae_dataset** out);
WGAE_API wgae_status wgae_dataset_save(const wgae_dataset* data, const char* dir);
WGAE_API wgae_status wgae_dataset_load(const char* dir, wgae_dataset** out);
WGAE_API wgae_status wgae_dataset_info_get(const wgae_dataset* data, wgae_dataset_info* out);
/* Newline-separated list of the files that make up a saved dataset. */
WGAE_API wgae_status wgae_dataset_files(const char* dir, char** out);
WGAE_API void wgae_dataset_destroy(wgae_dataset* data);

/* ---- training and checkpoints ----------------------------------------- */

/* `checkpoint` (may be NULL) receives periodic and abort checkpoints.
 * `log` (may be NULL) receives one record per iteration. */
WGAE_API wgae_status wgae_train(const wgae_dataset* data, const wgae_config* config, const char* checkpoint,
                                wgae_log_fn log, void* user, wgae_model** out);
WGAE_API wgae_status wgae_model_save(const wgae_model* model, const char* path);
WGAE_API wgae_status wgae_model_load(const char* path, wgae_model** out);
/* Copy of the configuration the model was trained with. */
WGAE_API wgae_status wgae_model_config(const wgae_model* model, wgae_config** out);
WGAE_API void wgae_model_destroy(wgae_model* model);

/* ---- evaluation -------------------------------------------------------- */

/* task: "link-pred", "cluster" or "classify". Trains config.eval_seeds
 * runs; `log` receives per-run progress lines. */
WGAE_API wgae_status wgae_evaluate(const wgae_dataset* data, const wgae_config* config, const char* task,
                                   wgae_log_fn log, void* user, wgae_report** out);
/* Scores an existing model ("cluster" or "classify"). */
WGAE_API wgae_status wgae_evaluate_model(const wgae_dataset* data, const wgae_model* model, const char* task,
                                         wgae_report** out);
/* One "task=... seed=... metric=value" record per seed plus a summary record. */
WGAE_API const char* wgae_report_records(const wgae_report* report);
WGAE_API const char* wgae_report_table(const wgae_report* report);
WGAE_API wgae_status wgae_report_metric(const wgae_report* report, const char* metric, double* mean, double* stddev);
WGAE_API void wgae_report_destroy(wgae_report* report);

/* ---- export ------------------------------------------------------------ */

/* `layer` is 1-based. `tau_phi` holds n_tau values (0: the model config's
 * tau_phi). `data` (may be NULL) supplies vocabulary and node names.
 * `json` selects the JSON form instead of indented text. */
WGAE_API wgae_status wgae_export_topic_tree(const wgae_model* model, const wgae_dataset* data, int layer, int topic,
                                            const double* tau_phi, size_t n_tau, int top_words, int json,
                                            char** out);
/* tau_u < 0 uses the model config's tau_u. */
WGAE_API wgae_status wgae_export_subnetwork(const wgae_model* model, const wgae_dataset* data, uint64_t node,
                                            double tau_u, int top_words, int json, char** out);

/* ---- self-test --------------------------------------------------------- */

WGAE_API size_t wgae_selftest_suite_count(void);
WGAE_API const char* wgae_selftest_suite_name(size_t index);
/* Runs one suite; `log` receives one "PASS|FAIL suite/check detail" line per
 * check. `passed` is set to 1 when every check passed. */
WGAE_API wgae_status wgae_selftest_run(const char* suite, wgae_log_fn log, void* user, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* WGAE_H */
