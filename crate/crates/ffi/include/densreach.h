#ifndef DENSREACH_H
#define DENSREACH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  DR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DR_STATUS_NULL_POINTER = 1,
  /**
   * An argument is out of range or malformed (including dimension
   * mismatches and non-UTF-8 paths).
   */
  DR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Reading or writing a file failed.
   */
  DR_STATUS_IO = 3,
  /**
   * A file or buffer could not be parsed or has an unsupported version.
   */
  DR_STATUS_PARSE = 4,
  /**
   * A numerical failure: divergence, LP failure, exhausted cell budget or
   * pathological truncation.
   */
  DR_STATUS_NUMERIC = 5,
  /**
   * A bug: a panic was caught at the boundary.
   */
  DR_STATUS_INTERNAL = 6,
} DrStatus;

/**
 * Initial-state distribution.
 */
typedef struct DrDist DrDist;

/**
 * Trained density network.
 */
typedef struct DrNet DrNet;

/**
 * Cell partition of a network at one time slice.
 */
typedef struct DrPartition DrPartition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dr_version(void);

/**
 * Loads a network checkpoint from a JSON file.
 */
DrStatus dr_net_load(const char *path_utf8, DrNet **out);

/**
 * Releases a network; null is ignored.
 */
void dr_net_free(DrNet *net);

/**
 * State dimension of a network (0 for null).
 */
size_t dr_net_state_dim(const DrNet *net);

/**
 * Evaluates the network at `(x0, t)`: writes `z` to `out_z` and the
 * predicted state (length `dim`) to `out_x`.
 */
DrStatus dr_net_eval(const DrNet *net,
                     const double *x0,
                     size_t dim,
                     double t,
                     double *out_z,
                     double *out_x);

/**
 * Enumerates the cells of `net` at time `t` over the box `[lo, hi]`.
 * `budget` 0 uses the default cell budget; `jobs` 0 uses all cores.
 */
DrStatus dr_partition_build(const DrNet *net,
                            double t,
                            const double *lo,
                            const double *hi,
                            size_t dim,
                            size_t budget,
                            size_t jobs,
                            DrPartition **out);

/**
 * Loads a partition cache written by the CLI or [`dr_partition_save`].
 */
DrStatus dr_partition_load(const char *path_utf8, DrPartition **out);

/**
 * Writes a partition cache as JSON.
 */
DrStatus dr_partition_save(const DrPartition *part, const char *path_utf8);

/**
 * Releases a partition; null is ignored.
 */
void dr_partition_free(DrPartition *part);

/**
 * Number of cells (0 for null).
 */
size_t dr_partition_cell_count(const DrPartition *part);

/**
 * Time slice of a partition (NaN for null).
 */
double dr_partition_time(const DrPartition *part);

/**
 * Uniform distribution on `[lo, hi]`.
 */
DrStatus dr_dist_uniform(const double *lo, const double *hi, size_t dim, DrDist **out);

/**
 * Gaussian with per-coordinate `mu` and `sigma`, truncated to `[lo, hi]`.
 */
DrStatus dr_dist_truncated_gaussian(const double *lo,
                                    const double *hi,
                                    const double *mu,
                                    const double *sigma,
                                    size_t dim,
                                    DrDist **out);

/**
 * Releases a distribution; null is ignored.
 */
void dr_dist_free(DrDist *dist);

/**
 * Density of the distribution at `x`.
 */
DrStatus dr_dist_density(const DrDist *dist, const double *x, size_t dim, double *out);

/**
 * Sum of the per-cell probability brackets of the forward reachable set.
 */
DrStatus dr_total_probability(const DrPartition *part,
                              const DrDist *dist,
                              double *out_lo,
                              double *out_hi);

/**
 * Probability bracket that the learned flow maps an initial state into
 * `{x | a·x ≤ b}` (row-major `rows × dim`) with `z` in `[z_min, z_max]`
 * (pass ±infinity for no bound).
 */
DrStatus dr_query_probability(const DrPartition *part,
                              const DrDist *dist,
                              const double *a,
                              const double *b,
                              size_t rows,
                              size_t dim,
                              double z_min,
                              double z_max,
                              double *out_lo,
                              double *out_hi);

/**
 * Checks whether any slice's reachable states with absolute density in
 * `[rho_min, rho_max]` meet `{x | a·x ≤ b}`. Writes 1 (safe) or 0 to
 * `out_safe` and the number of LPs solved to `out_lp_calls` (may be null).
 */
DrStatus dr_verify_density_range(const DrPartition *const *parts,
                                 size_t n_parts,
                                 const DrDist *dist,
                                 const double *a,
                                 const double *b,
                                 size_t rows,
                                 size_t dim,
                                 double rho_min,
                                 double rho_max,
                                 bool use_heuristic,
                                 int32_t *out_safe,
                                 size_t *out_lp_calls);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSREACH_H */
