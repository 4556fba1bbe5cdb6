#ifndef YMFLOW_H
#define YMFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum YmfStatus {
  YMF_STATUS_OK = 0,
  YMF_STATUS_NULL_POINTER = 1,
  YMF_STATUS_INVALID_ARGUMENT = 2,
  YMF_STATUS_IO = 3,
  YMF_STATUS_FORMAT = 4,
  YMF_STATUS_FLOW = 5,
  YMF_STATUS_SINGULAR = 6,
  YMF_STATUS_GAUGE = 7,
  YMF_STATUS_PANIC = 8,
} YmfStatus;

/**
 * Opaque connection handle.
 */
typedef struct YmfConnection YmfConnection;

/**
 * Opaque flow-state handle.
 */
typedef struct YmfFlow YmfFlow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *ymf_last_error(void);

/**
 * Reads a connection snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum YmfStatus ymf_connection_load(const char *path, struct YmfConnection **out);

/**
 * Writes a connection snapshot.
 *
 * # Safety
 * `c` must be a live handle and `path` a NUL-terminated string.
 */
enum YmfStatus ymf_connection_save(const struct YmfConnection *c, const char *path);

/**
 * Band-limited random connection. `group_rank` is 1 (U(1)) or 2 (SU(2)).
 *
 * # Safety
 * `extents` must point to `dim` values; `out` must be writable.
 */
enum YmfStatus ymf_connection_random_smooth(uint32_t dim,
                                            const uint32_t *extents,
                                            double spacing,
                                            uint32_t group_rank,
                                            uint64_t seed,
                                            uint32_t band,
                                            double amplitude,
                                            struct YmfConnection **out);

/**
 * Yang-Mills energy `½‖F‖²`.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_connection_energy(const struct YmfConnection *c, double *out);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void ymf_connection_free(struct YmfConnection *c);

/**
 * Starts a flow from a copy of `a0`. `variant`: 0 raw, 1 DeTurck.
 * `scheme`: 0 Euler, 1 RK4. `dt <= 0` selects the automatic step.
 *
 * # Safety
 * `a0` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_flow_new(const struct YmfConnection *a0,
                            uint32_t variant,
                            uint32_t scheme,
                            double dt,
                            double t_end,
                            struct YmfFlow **out);

/**
 * Advances `n` steps. On a singular stop the state keeps the last good step.
 *
 * # Safety
 * `f` must be a live handle.
 */
enum YmfStatus ymf_flow_step(struct YmfFlow *f, uint32_t n);

/**
 * # Safety
 * `f` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_flow_time(const struct YmfFlow *f, double *out);

/**
 * # Safety
 * `f` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_flow_energy(const struct YmfFlow *f, double *out);

/**
 * Copy of the current raw-flow connection as a new handle.
 *
 * # Safety
 * `f` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_flow_connection(const struct YmfFlow *f, struct YmfConnection **out);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void ymf_flow_free(struct YmfFlow *f);

/**
 * Global Coulomb gauge fix on the torus. `iterations` and `residual` may
 * be null.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum YmfStatus ymf_coulomb_fix(const struct YmfConnection *c,
                               double tol,
                               uint32_t max_iters,
                               struct YmfConnection **out,
                               uint32_t *iterations,
                               double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* YMFLOW_H */
