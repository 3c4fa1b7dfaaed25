#ifndef EIGENOPT_H
#define EIGENOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EoStatus {
  EO_STATUS_OK = 0,
  EO_STATUS_CONFIG_ERROR = 1,
  EO_STATUS_USAGE_ERROR = 2,
  EO_STATUS_TRAINING_ERROR = 3,
  EO_STATUS_INTERNAL_ERROR = 4,
  EO_STATUS_UNSUPPORTED = 5,
  EO_STATUS_IO_ERROR = 6,
  EO_STATUS_NULL_POINTER = 7,
  /**
   * Output buffer shorter than required.
   */
  EO_STATUS_BUFFER_TOO_SMALL = 8,
  EO_STATUS_PANIC = 9,
  /**
   * A run finished but some seeds failed.
   */
  EO_STATUS_PARTIAL_FAILURE = 10,
} EoStatus;

/**
 * An environment plus its own random stream.
 */
typedef struct EoEnv EoEnv;

/**
 * The `d` smallest Laplacian eigenpairs of an environment's state graph.
 */
typedef struct EoOracle EoOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *eo_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *eo_version(void);

/**
 * Create a built-in environment. Stochastic steps draw from a stream
 * derived from `seed`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum EoStatus eo_env_new(const char *name, uint64_t seed, struct EoEnv **out_env);

/**
 * # Safety
 * `env` must come from [`eo_env_new`] and not be used afterwards. Null is
 * ignored.
 */
void eo_env_free(struct EoEnv *env);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_env_num_actions(const struct EoEnv *env, size_t *out_n);

/**
 * Number of tabular ids (an upper bound on state ids).
 *
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_env_num_states(const struct EoEnv *env, size_t *out_n);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_env_feature_dim(const struct EoEnv *env, size_t *out_n);

/**
 * Start a new episode and report the start state id.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_env_reset(struct EoEnv *env, size_t *out_state);

/**
 * Take one action. `out_done` is 1 when the episode ended (goal or step
 * cap), else 0. Any of the output pointers may be null.
 *
 * # Safety
 * `env` must be valid; non-null outputs must be writable.
 */
enum EoStatus eo_env_step(struct EoEnv *env,
                          size_t action,
                          size_t *out_state,
                          double *out_reward,
                          int *out_done);

/**
 * Copy the observation of state `id` into `buf` (length `len`, at least
 * the feature dimension).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum EoStatus eo_env_features(struct EoEnv *env, size_t id, double *buf, size_t len);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_oracle_new(const struct EoEnv *env, size_t d, struct EoOracle **out_oracle);

/**
 * # Safety
 * `oracle` must come from [`eo_oracle_new`]. Null is ignored.
 */
void eo_oracle_free(struct EoOracle *oracle);

/**
 * Number of graph vertices (reachable states).
 *
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_oracle_num_states(const struct EoOracle *oracle, size_t *out_n);

/**
 * Eigenvalue `i`, 0-based ascending.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EoStatus eo_oracle_eigenvalue(const struct EoOracle *oracle, size_t i, double *out_value);

/**
 * Eigenfunction `i` over the vertices, in the order given by
 * [`eo_oracle_state_ids`].
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum EoStatus eo_oracle_eigenfunction(const struct EoOracle *oracle,
                                      size_t i,
                                      double *buf,
                                      size_t len);

/**
 * Tabular id of each vertex.
 *
 * # Safety
 * `buf` must hold `len` values.
 */
enum EoStatus eo_oracle_state_ids(const struct EoOracle *oracle, size_t *buf, size_t len);

/**
 * Run a config file with all its seeds and write its CSVs. Returns
 * [`EoStatus::PartialFailure`] if any seed failed; `out_failed` (may be
 * null) receives the number of failed seeds.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum EoStatus eo_run_config_file(const char *path, size_t *out_failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EIGENOPT_H */
