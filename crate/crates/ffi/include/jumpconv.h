#ifndef JUMPCONV_H
#define JUMPCONV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; 2 to 5 match the command-line exit codes.
 */
typedef enum JcStatus {
  JC_STATUS_OK = 0,
  JC_STATUS_NULL_POINTER = 1,
  JC_STATUS_CONFIG = 2,
  JC_STATUS_IO = 3,
  JC_STATUS_HYPOTHESIS = 4,
  JC_STATUS_NON_FINITE = 5,
  JC_STATUS_DOMAIN = 6,
  JC_STATUS_NOT_CONTRACTIVE = 7,
  JC_STATUS_INVALID_UTF8 = 8,
  JC_STATUS_INTERNAL = 9,
  JC_STATUS_PANIC = 10,
} JcStatus;

/**
 * Finite mark space with its intensity weights.
 */
typedef struct JcMarkSpace JcMarkSpace;

/**
 * Sampled Poisson path on `[0, T]`.
 */
typedef struct JcPath JcPath;

/**
 * The sequence space `ℓ^r(d)` with smoothness exponent `q` and type exponent `p`.
 */
typedef struct JcSpace JcSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *jc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jc_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void jc_string_free(char *s);

/**
 * Mark space with `n` positive weights.
 *
 * # Safety
 * `weights` must point to `n` doubles and `out` must be writable.
 */
enum JcStatus jc_markspace_new(const double *weights, size_t n, struct JcMarkSpace **out);

/**
 * # Safety
 * `ms` must be NULL or a handle from [`jc_markspace_new`] not yet freed.
 */
void jc_markspace_free(struct JcMarkSpace *ms);

/**
 * Samples a path on `[0, horizon]` from the stream seeded with `seed`.
 *
 * # Safety
 * `ms` must be a live handle and `out` writable.
 */
enum JcStatus jc_path_sample(const struct JcMarkSpace *ms,
                             double horizon,
                             uint64_t seed,
                             struct JcPath **out);

/**
 * Number of events on the path.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum JcStatus jc_path_len(const struct JcPath *path, size_t *out);

/**
 * Time and mark index of event `i`, in time order.
 *
 * # Safety
 * `path` must be a live handle; `time` and `mark` writable.
 */
enum JcStatus jc_path_event(const struct JcPath *path, size_t i, double *time, size_t *mark);

/**
 * # Safety
 * `path` must be NULL or a handle from [`jc_path_sample`] not yet freed.
 */
void jc_path_free(struct JcPath *path);

/**
 * `Ñ((a, b] × A) = N((a, b] × A) - (b - a) ν(A)` with `A` given by `n_marks` indices.
 *
 * # Safety
 * Handles must be live, `marks` must point to `n_marks` indices, `out` writable.
 */
enum JcStatus jc_compensated(const struct JcMarkSpace *ms,
                             const struct JcPath *path,
                             double a,
                             double b,
                             const size_t *marks,
                             size_t n_marks,
                             double *out);

/**
 * Space `ℓ^r(d)` with exponents `q` (smoothness) and `p` (type).
 *
 * # Safety
 * `out` must be writable.
 */
enum JcStatus jc_space_new(size_t d, double r, double q, double p, struct JcSpace **out);

/**
 * `‖x‖_r` and `φ(x) = ‖x‖^q` for a point of length `d`; either output may be NULL.
 *
 * # Safety
 * `space` must be live and `x` must point to `len` doubles.
 */
enum JcStatus jc_space_norm(const struct JcSpace *space,
                            const double *x,
                            size_t len,
                            double *norm,
                            double *phi);

/**
 * # Safety
 * `space` must be NULL or a handle from [`jc_space_new`] not yet freed.
 */
void jc_space_free(struct JcSpace *space);

/**
 * Runs the `[verify]` section of a TOML experiment config and writes the
 * report rows as a JSON array to `out_json`.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out_json` writable.
 */
enum JcStatus jc_verify_config(const char *config_toml, uint64_t seed, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JUMPCONV_H */
