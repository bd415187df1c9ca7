#ifndef WEXP_H
#define WEXP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum WexpStatus {
  WEXP_STATUS_OK = 0,
  /**
   * Bad input: unknown catalog name, out-of-range parameter.
   */
  WEXP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A computation broke down (degenerate variance, explosion, overflow).
   */
  WEXP_STATUS_NUMERICAL = 2,
  /**
   * A required pointer was null.
   */
  WEXP_STATUS_NULL_POINTER = 3,
  /**
   * Output buffer too small.
   */
  WEXP_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * Internal panic caught at the boundary.
   */
  WEXP_STATUS_PANIC = 5,
} WexpStatus;

/**
 * Opaque weight family.
 */
typedef struct WexpFamily WexpFamily;

/**
 * Opaque Brownian path on a grid of `n` cells refined `r` times.
 */
typedef struct WexpPath WexpPath;

/**
 * Exponent of a multilinear form as a reduced fraction.
 */
typedef struct WexpExponent {
  /**
   * Non-zero when the exponent is minus infinity.
   */
  int32_t neg_infinity;
  int64_t numer;
  int64_t denom;
  double value;
} WexpExponent;

/**
 * Weighted variation of one path and its limit variance.
 */
typedef struct WexpVariation {
  double v_n;
  double z_n;
  double m_n;
  double n_n;
  double g_inf;
} WexpVariation;

/**
 * Expansion of `E[f(Z_n, X)]`.
 */
typedef struct WexpExpansion {
  double target;
  double se_target;
  double zeroth;
  double first;
  double err0;
  double se_err0;
  double err1;
  double se_err1;
} WexpExpansion;

/**
 * Filtered realized volatility of one simulated diffusion path.
 */
typedef struct WexpRobustRv {
  double u_n;
  double v_robust;
  double v_target;
  double z_n;
  double g_inf;
  double integrated_variance;
} WexpRobustRv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wexp_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated).
 * `needed` receives the buffer size required, including the terminator.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null with `len == 0`.
 */
enum WexpStatus wexp_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * Three-factor product coefficient; fails with `Numerical` if it does not
 * fit in 64 bits.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum WexpStatus wexp_coeff3(uint32_t q1, uint32_t q2, uint32_t q3, uint32_t nu, uint64_t *out);

/**
 * Exponent of the form with scale `n^{alpha_numer/alpha_denom}` and the
 * given chaos orders.
 *
 * # Safety
 * `orders` must point to `len` readable values and `out` must be valid.
 */
enum WexpStatus wexp_exponent(int64_t alpha_numer,
                              int64_t alpha_denom,
                              const int64_t *orders,
                              size_t len,
                              struct WexpExponent *out);

/**
 * Build a family of kind `anticipative`, `predictable` or `constant` with
 * the same catalog weight (e.g. `sin2`, `const:1`) at every order.
 *
 * # Safety
 * Strings must be NUL-terminated, `orders` must point to `len` values and
 * `out` must be valid.
 */
enum WexpStatus wexp_family_new(const char *kind,
                                const char *weight,
                                const uint32_t *orders,
                                size_t len,
                                struct WexpFamily **out);

/**
 * # Safety
 * `fam` must come from [`wexp_family_new`] and not be used afterwards.
 */
void wexp_family_free(struct WexpFamily *fam);

/**
 * Sample replication `rep` of the stream selected by `seed`.
 *
 * # Safety
 * `out` must be valid.
 */
enum WexpStatus wexp_path_sample(size_t n,
                                 size_t r,
                                 uint64_t seed,
                                 uint64_t rep,
                                 struct WexpPath **out);

/**
 * Number of path values (`n·r + 1`).
 *
 * # Safety
 * `path` must be a live handle or null.
 */
size_t wexp_path_len(const struct WexpPath *path);

/**
 * Copy the path values into `buf`.
 *
 * # Safety
 * `path` must be a live handle and `buf` must hold `len` doubles.
 */
enum WexpStatus wexp_path_values(const struct WexpPath *path, double *buf, size_t len);

/**
 * # Safety
 * `path` must come from [`wexp_path_sample`] and not be used afterwards.
 */
void wexp_path_free(struct WexpPath *path);

/**
 * The weighted variation of `path`, or its centred error for anticipative
 * families with the single order 2.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum WexpStatus wexp_variation(const struct WexpFamily *fam,
                               const struct WexpPath *path,
                               struct WexpVariation *out);

/**
 * Monte Carlo comparison of `E[f(Z_n, X)]` with its zeroth- and
 * first-order approximations. `f` is a catalog name such as `z3`.
 *
 * # Safety
 * `fam` must be live, `f` NUL-terminated and `out` valid.
 */
enum WexpStatus wexp_expand(const struct WexpFamily *fam,
                            const char *f,
                            size_t n,
                            uint64_t reps,
                            uint64_t approx_reps,
                            uint64_t seed,
                            struct WexpExpansion *out);

/**
 * Simulate `dX = σ(X)dw + b(X)dt` (Milstein, catalog coefficients such as
 * `tanh:1,0.1`) and apply the catalog filter `filter` with window `lambda`.
 *
 * # Safety
 * Strings must be NUL-terminated and `out` valid.
 */
enum WexpStatus wexp_robust_rv(const char *sigma,
                               const char *drift,
                               double x0,
                               const char *filter,
                               double lambda,
                               size_t n,
                               size_t refine,
                               uint64_t seed,
                               uint64_t rep,
                               struct WexpRobustRv *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEXP_H */
