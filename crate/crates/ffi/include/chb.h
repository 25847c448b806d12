#ifndef CHB_H
#define CHB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CHB_OK 0

#define CHB_ERR_NULL 1

#define CHB_ERR_CONFIG 2

#define CHB_ERR_INVALID 3

#define CHB_ERR_SOLVER 4

#define CHB_ERR_IO 5

#define CHB_ERR_BUFFER 6

#define CHB_ERR_PANIC 7

/**
 * `chb_optimize` stopped before reaching the tolerance; outputs are valid.
 */
#define CHB_NOT_CONVERGED 8

/**
 * Snapshot field selector for [`chb_trajectory_field`].
 */
typedef enum ChbField {
  CHB_FIELD_PHI = 0,
  CHB_FIELD_MU = 1,
  CHB_FIELD_SIGMA = 2,
  CHB_FIELD_PRESSURE = 3,
} ChbField;

/**
 * Validated problem built from a configuration.
 */
typedef struct ChbProblem ChbProblem;

/**
 * Forward solution `(φ, μ, σ, v, p)` at `t⁰ … t^N`.
 */
typedef struct ChbTrajectory ChbTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses an INI configuration held in memory. `file:` presets are resolved
 * against the current directory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t chb_problem_from_config_str(const char *text, struct ChbProblem **out);

/**
 * Reads and parses a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t chb_problem_from_config_file(const char *path, struct ChbProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from `chb_problem_from_config_*` not yet freed.
 */
void chb_problem_free(struct ChbProblem *p);

/**
 * Writes the cell counts and the number of time steps.
 *
 * # Safety
 * All pointers must be valid.
 */
int32_t chb_problem_dims(const struct ChbProblem *p, size_t *nx, size_t *ny, size_t *nt);

/**
 * Solves the state system for `u` (`nt * nx * ny` values, or NULL for the
 * configured control).
 *
 * # Safety
 * `p` must be a live handle, `u` null or `len` readable doubles, `out` valid.
 */
int32_t chb_solve_forward(const struct ChbProblem *p,
                          const double *u,
                          size_t len,
                          struct ChbTrajectory **out);

/**
 * # Safety
 * `t` must be null or a handle from `chb_solve_forward` not yet freed.
 */
void chb_trajectory_free(struct ChbTrajectory *t);

/**
 * Copies one cell field of snapshot `step` (`0 ≤ step ≤ nt`) into `buf`.
 *
 * # Safety
 * `t` must be a live handle and `buf` hold `len` writable doubles.
 */
int32_t chb_trajectory_field(const struct ChbTrajectory *t,
                             enum ChbField field,
                             size_t step,
                             double *buf,
                             size_t len);

/**
 * Evaluates `J(u)` and its gradient (`nt * nx * ny` values) by the adjoint.
 * `grad` may be NULL when only the cost is wanted.
 *
 * # Safety
 * `p` must be a live handle and all non-null buffers sized as stated.
 */
int32_t chb_cost_and_gradient(const struct ChbProblem *p,
                              const double *u,
                              size_t len,
                              double *cost,
                              double *grad,
                              size_t grad_len);

/**
 * Projected gradient descent from `u0` (NULL for the configured control)
 * with the configured options. Writes the final control, cost and
 * iteration count; returns `CHB_NOT_CONVERGED` if the tolerance was not met.
 *
 * # Safety
 * `p` must be a live handle and all buffers sized as stated.
 */
int32_t chb_optimize(const struct ChbProblem *p,
                     const double *u0,
                     size_t len,
                     double *u_out,
                     size_t out_len,
                     double *cost,
                     size_t *iterations,
                     int *converged);

/**
 * Message of the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *chb_last_error(void);

const char *chb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHB_H */
