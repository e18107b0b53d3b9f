#ifndef LOB_LAB_H
#define LOB_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  LOB_LAB_STATUS_OK = 0,
  LOB_LAB_STATUS_NULL_POINTER = 1,
  LOB_LAB_STATUS_INVALID_ARGUMENT = 2,
  LOB_LAB_STATUS_NON_CONVERGENCE = 3,
  LOB_LAB_STATUS_INDEX_OUT_OF_RANGE = 4,
  LOB_LAB_STATUS_INTERNAL_ERROR = 5,
} LobLabStatus;

/**
 * Opaque handle to a constructed equilibrium path.
 */
typedef struct LobLabPath LobLabPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Construct the equilibrium path for the given model. On success writes a
 * heap-allocated handle to `out`; release it with `lob_lab_path_free`.
 * Degeneracy is a result, not an error: inspect
 * `lob_lab_path_degenerate_from`.
 */
LobLabStatus lob_lab_solve(double alpha,
                           double sigma,
                           double horizon,
                           uint32_t steps,
                           LobLabPath **out);

/**
 * Number of trading steps N; the path has N+1 index points 0..=N.
 */
LobLabStatus lob_lab_path_steps(const LobLabPath *path, uint32_t *out);

/**
 * First step of the degenerate prefix, or -1 when the whole horizon is
 * non-degenerate. Entries at indices <= this value are unset (NaN).
 */
LobLabStatus lob_lab_path_degenerate_from(const LobLabPath *path, int64_t *out);

/**
 * Relative quotes and expected execution prices at one index point.
 * Unset entries (degenerate prefix) are reported as NaN.
 */
LobLabStatus lob_lab_path_values(const LobLabPath *path,
                                 uint32_t index,
                                 double *pa,
                                 double *pb,
                                 double *la,
                                 double *lb);

/**
 * Release a path handle. Passing NULL is a no-op.
 */
void lob_lab_path_free(LobLabPath *path);

/**
 * Largest drift with a non-degenerate construction on the whole horizon,
 * bisected to `tol`.
 */
LobLabStatus lob_lab_critical_alpha(uint32_t steps,
                                    double sigma,
                                    double horizon,
                                    double tol,
                                    double *alpha_star,
                                    double *bracket_width);

/**
 * Mills ratio (1 - F(p))/f(p) of the standard normal.
 */
double lob_lab_mills_ratio(double p);

/**
 * Inverse Mills ratio; `y` must be positive and finite.
 */
LobLabStatus lob_lab_mills_inverse(double y, double *out);

/**
 * Expected relative profit of a limit sell at `p` against continuation
 * value `x`, for an increment N(mean, std^2).
 */
LobLabStatus lob_lab_sell_objective(double p, double x, double mean, double std, double *out);

/**
 * Static description of a status code.
 */
const char *lob_lab_status_message(LobLabStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOB_LAB_H */
