/* C interface to the report verification and scoring engine.
 *
 * Strings returned through char** out-parameters are heap allocated and must
 * be released with rc_string_free. On failure the out-parameters are left
 * untouched and rc_last_error() describes the problem (per thread). */
#ifndef REPORTCHECK_H
#define REPORTCHECK_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RC_API __declspec(dllexport)
#else
#define RC_API __attribute__((visibility("default")))
#endif

typedef enum rc_status {
  RC_OK = 0,
  RC_INVALID_ARGUMENT = 1,
  RC_CONFIG = 2,
  RC_TIMEOUT = 3,
  RC_TRANSPORT = 4,
  RC_RATE_LIMITED = 5,
  RC_REPLAY_MISS = 6,
  RC_MALFORMED_OUTPUT = 7,
  RC_DUPLICATE_CLAIM_ID = 8,
  RC_EMPTY_GOLD = 9,
  RC_NOT_FETCHED = 10,
  RC_SCHEMA_VIOLATION = 11,
  RC_COUNT_MISMATCH = 12,
  RC_INCOMPLETE_SCORES = 13,
  RC_UNKNOWN_FACTOR_ID = 14,
  RC_DEGENERATE_INPUT = 15,
  RC_NO_PAIRS = 16,
  RC_INSUFFICIENT_OVERLAP = 17,
  RC_MISSING_CELLS = 18,
  RC_MISSING_UPSTREAM = 19,
  RC_STAGE_FAILURE = 20,
  RC_IO = 21,
  RC_INTERNAL = 100
} rc_status;

typedef struct rc_engine rc_engine;

/* config_json: run configuration object; absent keys take defaults.
 * NULL or "" means all defaults. */
RC_API rc_status rc_engine_create(const char* config_json, rc_engine** out);
RC_API void rc_engine_destroy(rc_engine* engine);

/* Full resolved configuration as JSON. */
RC_API rc_status rc_engine_config(const rc_engine* engine, char** config_json_out);

/* All stages in order. The run directory is created under run_root unless
 * run_dir is configured. run_dir_out may be NULL. */
RC_API rc_status rc_run_evaluate(rc_engine* engine, char** manifest_json_out, char** run_dir_out);

/* One stage ("ingest", "extract", "verify", "metrics", "score"). With a
 * run_dir holding a manifest, that manifest is the prior state and its
 * config snapshot is the base the engine config is layered over. Either
 * out-parameter may be NULL. */
RC_API rc_status rc_run_stage(rc_engine* engine, const char* stage, const char* run_dir, char** manifest_json_out,
                              char** run_dir_out);

/* Re-renders summary.md of a run directory; the text is also returned when
 * summary_out is not NULL. */
RC_API rc_status rc_render_summary(const char* run_dir, char** summary_out);

/* Segmented report as JSON. */
RC_API rc_status rc_segment(const char* markdown, char** document_json_out);

/* Agreement statistics over a score matrix; pooling is "global" or "per-task". */
RC_API rc_status rc_stats(const char* matrix_json, const char* pooling, char** stats_json_out);

/* Aggregates factor scores (a JSON array) against the taxonomy file. */
RC_API rc_status rc_aggregate(const char* taxonomy_path, const char* scores_json, char** aggregate_json_out);

RC_API const char* rc_last_error(void);
RC_API const char* rc_status_name(rc_status status);
RC_API void rc_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
