#ifndef VILAB_H
#define VILAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Matrix-game families accepted by [`vilab_problem_matrix_game`].
 */
typedef enum VilabGameKind {
  VILAB_GAME_KIND_RANDOM = 0,
  VILAB_GAME_KIND_POLICEMAN_BURGLAR = 1,
  VILAB_GAME_KIND_TEST_MATRIX = 2,
} VilabGameKind;

/**
 * Result code of every fallible call.
 */
typedef enum VilabStatus {
  VILAB_STATUS_OK = 0,
  VILAB_STATUS_NULL_POINTER = 1,
  VILAB_STATUS_INVALID_ARGUMENT = 2,
  VILAB_STATUS_CONFIG = 3,
  VILAB_STATUS_NUMERICAL = 4,
  VILAB_STATUS_IO = 5,
  VILAB_STATUS_PANIC = 6,
} VilabStatus;

/**
 * Why a run stopped.
 */
typedef enum VilabStop {
  VILAB_STOP_MAX_ITERS = 0,
  VILAB_STOP_GRAD_TOL = 1,
  VILAB_STOP_DIVERGED = 2,
  VILAB_STOP_NON_FINITE = 3,
} VilabStop;

/**
 * Opaque problem handle.
 */
typedef struct VilabProblem VilabProblem;

/**
 * Opaque trace handle.
 */
typedef struct VilabTrace VilabTrace;

/**
 * One recorded trace row. Unavailable metrics are NaN.
 */
typedef struct VilabRow {
  uint64_t iter;
  uint64_t fevals;
  double alpha;
  double grad_norm;
  double min_grad_norm_sq;
  double gap;
  double dist;
  double wall_ms;
} VilabRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vilab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vilab_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VilabStatus vilab_problem_polar(double a, struct VilabProblem **out);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VilabStatus vilab_problem_forsaken(struct VilabProblem **out);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VilabStatus vilab_problem_lower_bound(double a, double b, struct VilabProblem **out);

/**
 * `kind` is a `VilabGameKind` value; `theta` is used only by the
 * policeman-burglar kind.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VilabStatus vilab_problem_matrix_game(uint32_t kind,
                                           size_t d,
                                           uint64_t seed,
                                           double theta,
                                           struct VilabProblem **out);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VilabStatus vilab_problem_qp(size_t d, uint64_t seed, bool planted, struct VilabProblem **out);

/**
 * Dimension of the problem, or 0 for a NULL handle.
 *
 * # Safety
 * `p` must be NULL or a live handle from a `vilab_problem_*` constructor.
 */
size_t vilab_problem_dim(const struct VilabProblem *p);

/**
 * # Safety
 * `p` must be NULL or a live handle; it is invalid afterwards.
 */
void vilab_problem_free(struct VilabProblem *p);

/**
 * Runs a solver configured by a TOML table (e.g. `algorithm = "agraal"`,
 * `phi = 1.2`, `max_iters = 1000`). A NULL config uses the defaults.
 *
 * # Safety
 * `problem` must be a live handle, `config_toml` NULL or a NUL-terminated
 * string, and `out` writable.
 */
enum VilabStatus vilab_run(const struct VilabProblem *problem,
                           const char *config_toml,
                           struct VilabTrace **out);

/**
 * Number of recorded rows, or 0 for a NULL handle.
 *
 * # Safety
 * `t` must be NULL or a live trace handle.
 */
size_t vilab_trace_len(const struct VilabTrace *t);

/**
 * # Safety
 * `t` must be a live trace handle and `out` writable.
 */
enum VilabStatus vilab_trace_row(const struct VilabTrace *t, size_t index, struct VilabRow *out);

/**
 * # Safety
 * `t` must be a live trace handle and `out` writable.
 */
enum VilabStatus vilab_trace_stop(const struct VilabTrace *t, enum VilabStop *out);

/**
 * Copies the final iterate into `buf`, which must hold `len` doubles with
 * `len` equal to the problem dimension.
 *
 * # Safety
 * `t` must be a live trace handle and `buf` valid for `len` writes.
 */
enum VilabStatus vilab_trace_final_point(const struct VilabTrace *t, double *buf, size_t len);

/**
 * Writes the trace CSV to `path`.
 *
 * # Safety
 * `t` must be a live trace handle and `path` a NUL-terminated string.
 */
enum VilabStatus vilab_trace_write_csv(const struct VilabTrace *t, const char *path);

/**
 * # Safety
 * `t` must be NULL or a live trace handle; it is invalid afterwards.
 */
void vilab_trace_free(struct VilabTrace *t);

/**
 * Solves the certificate program with diagonal caps `cap` on the last two
 * entries. Writes the optimum to `value` and, if `g` is not NULL, the
 * attaining matrix row-major into `g[0..9]`.
 *
 * # Safety
 * `value` must be writable; `g` NULL or valid for 9 writes.
 */
enum VilabStatus vilab_sdp_certificate(double cap, double tol, double *value, double *g);

/**
 * Grid estimate of `L` and `rho` on `[lo, hi]^2` with `n` nodes per axis.
 *
 * # Safety
 * `problem` must be a live handle; `lipschitz` and `rho` writable.
 */
enum VilabStatus vilab_estimate_wm(const struct VilabProblem *problem,
                                   double lo,
                                   double hi,
                                   size_t n,
                                   double *lipschitz,
                                   double *rho);

/**
 * The constant `c` of the aGRAAL step-sum bound.
 *
 * # Safety
 * `out` must be writable.
 */
enum VilabStatus vilab_compute_c(double phi, double gamma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VILAB_H */
