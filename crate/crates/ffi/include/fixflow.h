#ifndef FIXFLOW_H
#define FIXFLOW_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FixflowMetric {
  FIXFLOW_METRIC_BLEU1 = 0,
  FIXFLOW_METRIC_BLEU4 = 1,
  FIXFLOW_METRIC_ROUGE_L = 2,
  FIXFLOW_METRIC_CIDER = 3,
} FixflowMetric;

typedef enum FixflowStatus {
  FIXFLOW_STATUS_OK = 0,
  FIXFLOW_STATUS_NULL_POINTER = 1,
  FIXFLOW_STATUS_INVALID_UTF8 = 2,
  FIXFLOW_STATUS_INVALID_ARGUMENT = 3,
  FIXFLOW_STATUS_EMPTY_INPUT = 4,
  FIXFLOW_STATUS_PARSE = 5,
  FIXFLOW_STATUS_INVALID_PIPELINE = 6,
  FIXFLOW_STATUS_CORRUPT_RECORD = 7,
  FIXFLOW_STATUS_NOT_FOUND = 8,
  FIXFLOW_STATUS_IO = 9,
  FIXFLOW_STATUS_PANIC = 10,
} FixflowStatus;

/**
 * A parsed pipeline file.
 */
typedef struct FixflowPipeline FixflowPipeline;

/**
 * State rebuilt from an event log.
 */
typedef struct FixflowReplay FixflowReplay;

typedef struct FixflowReplayCounts {
  size_t runs;
  size_t evaluation_tasks;
  size_t quality_records;
  size_t reports;
} FixflowReplayCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next fixflow call on the same thread.
 */
const char *fixflow_last_error(void);

/**
 * Library version, static.
 */
const char *fixflow_version(void);

/**
 * # Safety
 * `s` must come from a fixflow out-parameter and not be freed twice.
 */
void fixflow_string_free(char *s);

/**
 * Parses a pipeline file. A definition with problems still yields a handle;
 * see [`fixflow_pipeline_problem_count`].
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum FixflowStatus fixflow_pipeline_from_toml(const char *toml,
                                              struct FixflowPipeline **out_handle);

/**
 * # Safety
 * `handle` must be a live pipeline handle.
 */
enum FixflowStatus fixflow_pipeline_problem_count(const struct FixflowPipeline *handle,
                                                  size_t *out_count);

/**
 * Problems as a JSON array of strings; `[]` when the pipeline is valid.
 *
 * # Safety
 * `handle` must be a live pipeline handle.
 */
enum FixflowStatus fixflow_pipeline_problems_json(const struct FixflowPipeline *handle,
                                                  char **out_json);

/**
 * Component ids in execution order, as a JSON array.
 *
 * # Safety
 * `handle` must be a live pipeline handle.
 */
enum FixflowStatus fixflow_pipeline_order_json(const struct FixflowPipeline *handle,
                                               char **out_json);

/**
 * # Safety
 * `handle` must be null or a pipeline handle not yet freed.
 */
void fixflow_pipeline_free(struct FixflowPipeline *handle);

/**
 * Corpus score of `candidates` (JSON array of strings) against
 * `references` (JSON array of string arrays, one per candidate).
 *
 * # Safety
 * Both strings must be NUL-terminated; `out_score` must be writable.
 */
enum FixflowStatus fixflow_metric(enum FixflowMetric metric,
                                  const char *candidates_json,
                                  const char *references_json,
                                  double *out_score);

/**
 * Strict majority over binary votes. `out_decision` is 1 or 0, or -1
 * without a strict majority.
 *
 * # Safety
 * `votes` must point to `len` readable bytes.
 */
enum FixflowStatus fixflow_majority_vote(const bool *votes,
                                         size_t len,
                                         int32_t *out_decision,
                                         double *out_agreement);

/**
 * Mean of 1-5 ratings and whether a strict majority is 4 or 5.
 *
 * # Safety
 * `ratings` must point to `len` readable bytes.
 */
enum FixflowStatus fixflow_likert_aggregate(const uint8_t *ratings,
                                            size_t len,
                                            double *out_mean,
                                            bool *out_satisfactory);

/**
 * Totals a cost plan given as TOML. Writes the grand total in cents and,
 * when `out_json` is non-null, the filled plan as JSON.
 *
 * # Safety
 * `plan_toml` must be NUL-terminated; `out_total_cents` must be writable.
 */
enum FixflowStatus fixflow_cost_estimate(const char *plan_toml,
                                         int64_t *out_total_cents,
                                         char **out_json);

/**
 * Rebuilds state from JSON-lines log text and checks every logged report
 * hash.
 *
 * # Safety
 * `jsonl` must be NUL-terminated; `out_handle` must be writable.
 */
enum FixflowStatus fixflow_replay(const char *jsonl, struct FixflowReplay **out_handle);

/**
 * # Safety
 * `handle` must be a live replay handle.
 */
enum FixflowStatus fixflow_replay_counts(const struct FixflowReplay *handle,
                                         struct FixflowReplayCounts *out_counts);

/**
 * Plain-text body of a logged report.
 *
 * # Safety
 * `handle` must be a live replay handle and `name` NUL-terminated.
 */
enum FixflowStatus fixflow_replay_report_text(const struct FixflowReplay *handle,
                                              const char *name,
                                              char **out_text);

/**
 * # Safety
 * `handle` must be null or a replay handle not yet freed.
 */
void fixflow_replay_free(struct FixflowReplay *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIXFLOW_H */
