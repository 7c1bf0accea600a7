#ifndef TOMPLAN_H
#define TOMPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TOMPLAN_STATUS_OK = 0,
  TOMPLAN_STATUS_NULL_POINTER = 1,
  TOMPLAN_STATUS_INVALID_UTF8 = 2,
  TOMPLAN_STATUS_INVALID_ARGUMENT = 3,
  TOMPLAN_STATUS_PARSE_ERROR = 4,
  TOMPLAN_STATUS_PLAN_ERROR = 5,
  TOMPLAN_STATUS_EPISODE_DONE = 6,
  TOMPLAN_STATUS_BUFFER_TOO_SMALL = 7,
  TOMPLAN_STATUS_INTERNAL = 8,
} TomplanStatus;

typedef enum {
  TOMPLAN_TASK_COLLISION = 0,
  TOMPLAN_TASK_FORAGING = 1,
} TomplanTask;

/**
 * A run configuration.
 */
typedef struct TomplanConfig TomplanConfig;

/**
 * A generative model.
 */
typedef struct TomplanModel TomplanModel;

/**
 * An episode in progress.
 */
typedef struct TomplanSimulation TomplanSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage; do not free.
 */
const char *tomplan_version(void);

/**
 * Copy of the calling thread's last error message, or NULL after a
 * successful call. Free with `tomplan_string_free`.
 */
char *tomplan_last_error_message(void);

/**
 * # Safety
 * `s` is NULL or a string returned by this library, not yet freed.
 */
void tomplan_string_free(char *s);

/**
 * Bundled configuration for `task`; with `tom`, red plans with theory of mind.
 *
 * # Safety
 * `out` is a valid pointer.
 */
TomplanStatus tomplan_config_preset(TomplanTask task, bool tom, TomplanConfig **out);

/**
 * # Safety
 * `text` is a NUL-terminated string; `out` is a valid pointer.
 */
TomplanStatus tomplan_config_from_toml(const char *text, TomplanConfig **out);

/**
 * # Safety
 * `config` is a live handle; `out` is a valid pointer.
 */
TomplanStatus tomplan_config_to_toml(const TomplanConfig *config, char **out);

/**
 * Replaces the seed list used by `tomplan_run_batch`.
 *
 * # Safety
 * `config` is a live handle; `seeds` points to `count` values.
 */
TomplanStatus tomplan_config_set_seeds(TomplanConfig *config, const uint64_t *seeds, size_t count);

/**
 * # Safety
 * `config` is NULL or a handle not yet freed.
 */
void tomplan_config_free(TomplanConfig *config);

/**
 * Runs one episode; writes its outcome as JSON.
 *
 * # Safety
 * `config` is a live handle; `out_json` is a valid pointer.
 */
TomplanStatus tomplan_run_episode(const TomplanConfig *config, uint64_t seed, char **out_json);

/**
 * Runs every configured seed; writes `{"metrics": .., "outcomes": [..]}`.
 *
 * # Safety
 * `config` is a live handle; `out_json` is a valid pointer.
 */
TomplanStatus tomplan_run_batch(const TomplanConfig *config, char **out_json);

/**
 * # Safety
 * `config` is a live handle; `out` is a valid pointer.
 */
TomplanStatus tomplan_simulation_new(const TomplanConfig *config,
                                     uint64_t seed,
                                     TomplanSimulation **out);

/**
 * Advances one joint step. Returns `EpisodeDone` once the episode is over.
 * When `out_record_json` is not NULL it receives the step record.
 *
 * # Safety
 * `sim` is a live handle; `out_record_json` is NULL or a valid pointer.
 */
TomplanStatus tomplan_simulation_step(TomplanSimulation *sim, char **out_record_json);

/**
 * # Safety
 * `sim` is a live handle; `out_done` is a valid pointer.
 */
TomplanStatus tomplan_simulation_is_done(const TomplanSimulation *sim, bool *out_done);

/**
 * Current cells of red and purple.
 *
 * # Safety
 * `sim` is a live handle; `out_cells` points to two writable values.
 */
TomplanStatus tomplan_simulation_cells(const TomplanSimulation *sim, size_t *out_cells);

/**
 * Outcome so far (final once the episode is done), as JSON.
 *
 * # Safety
 * `sim` is a live handle; `out_json` is a valid pointer.
 */
TomplanStatus tomplan_simulation_outcome(const TomplanSimulation *sim, char **out_json);

/**
 * # Safety
 * `sim` is NULL or a handle not yet freed.
 */
void tomplan_simulation_free(TomplanSimulation *sim);

/**
 * Model from its JSON form. Structural problems are reported by
 * `tomplan_model_validate`, not here.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is a valid pointer.
 */
TomplanStatus tomplan_model_from_json(const char *text, TomplanModel **out);

/**
 * Bundled task model. `cell` is the goal (collision) or start (foraging);
 * with `of_other` the model is the one attributed to the other agent.
 *
 * # Safety
 * `out` is a valid pointer.
 */
TomplanStatus tomplan_model_build(TomplanTask task, bool of_other, size_t cell, TomplanModel **out);

/**
 * # Safety
 * `model` is a live handle; `out_json` is a valid pointer.
 */
TomplanStatus tomplan_model_to_json(const TomplanModel *model, char **out_json);

/**
 * Writes the number of problems found to `out_count` and, when there are
 * any, sets the last error to their description.
 *
 * # Safety
 * `model` is a live handle; `out_count` is a valid pointer.
 */
TomplanStatus tomplan_model_validate(const TomplanModel *model, size_t *out_count);

/**
 * # Safety
 * `model` is a live handle and all output pointers are valid.
 */
TomplanStatus tomplan_model_shape(const TomplanModel *model,
                                  size_t *out_factors,
                                  size_t *out_beliefs_len,
                                  size_t *out_actions);

/**
 * Sophisticated-inference plan from `belief`, the factor marginals laid end
 * to end in factor order. Writes the action posterior and expected free
 * energy per action; both buffers hold `actions` values.
 *
 * # Safety
 * `model` is a live handle; `belief` points to `belief_len` values; both
 * output buffers hold `actions` values.
 */
TomplanStatus tomplan_si_plan(const TomplanModel *model,
                              const double *belief,
                              size_t belief_len,
                              size_t horizon,
                              bool pruning,
                              double *out_posterior,
                              double *out_efe,
                              size_t actions);

/**
 * # Safety
 * `model` is NULL or a handle not yet freed.
 */
void tomplan_model_free(TomplanModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOMPLAN_H */
