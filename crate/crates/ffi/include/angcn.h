#ifndef ANGCN_H
#define ANGCN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum AngcnStatus {
  ANGCN_STATUS_OK = 0,
  ANGCN_STATUS_NULL_POINTER = 1,
  ANGCN_STATUS_INVALID_UTF8 = 2,
  ANGCN_STATUS_INVALID_INPUT = 3,
  ANGCN_STATUS_IO = 4,
  ANGCN_STATUS_PARSE = 5,
  ANGCN_STATUS_SCHEMA = 6,
  ANGCN_STATUS_NUMERICAL = 7,
  ANGCN_STATUS_SHAPE = 8,
  ANGCN_STATUS_PANIC = 9,
} AngcnStatus;

/**
 * Opaque dataset handle.
 */
typedef struct AngcnBundle AngcnBundle;

/**
 * Opaque checkpoint handle.
 */
typedef struct AngcnCheckpoint AngcnCheckpoint;

/**
 * Scalar metrics of one evaluation.
 */
typedef struct AngcnReport {
  double accuracy;
  double auc;
  double f1;
  double recall;
  double precision;
  double kappa;
  double mcc;
} AngcnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *angcn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *angcn_version(void);

/**
 * Loads a dataset bundle directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AngcnStatus angcn_bundle_load(const char *path, struct AngcnBundle **out);

/**
 * Generates the synthetic bundle with default settings except size and seed.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AngcnStatus angcn_bundle_synthetic(size_t n_subjects, uint64_t seed, struct AngcnBundle **out);

/**
 * Writes the bundle files into `dir`.
 *
 * # Safety
 * `bundle` must come from this library and `dir` be a NUL-terminated string.
 */
enum AngcnStatus angcn_bundle_save(const struct AngcnBundle *bundle, const char *dir);

/**
 * Number of subjects, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or come from this library.
 */
size_t angcn_bundle_len(const struct AngcnBundle *bundle);

/**
 * Number of imaging features per subject, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or come from this library.
 */
size_t angcn_bundle_feature_count(const struct AngcnBundle *bundle);

/**
 * Releases a bundle handle; null is ignored.
 *
 * # Safety
 * `bundle` must be null or an unreleased handle from this library.
 */
void angcn_bundle_free(struct AngcnBundle *bundle);

/**
 * Runs k-fold cross-validation and stores the mean fold metrics in `out`.
 * `config_json` may be null (defaults) or a JSON object of config fields.
 *
 * # Safety
 * `bundle` must come from this library, `config_json` be null or a
 * NUL-terminated string, and `out` a valid pointer.
 */
enum AngcnStatus angcn_cross_validate(const struct AngcnBundle *bundle,
                                      const char *config_json,
                                      struct AngcnReport *out);

/**
 * Loads a checkpoint written by `angcn train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AngcnStatus angcn_checkpoint_load(const char *path, struct AngcnCheckpoint **out);

/**
 * Scores the checkpoint on its own test fold of `bundle`.
 *
 * # Safety
 * Handles must come from this library and `out` be a valid pointer.
 */
enum AngcnStatus angcn_checkpoint_evaluate(const struct AngcnCheckpoint *checkpoint,
                                           const struct AngcnBundle *bundle,
                                           struct AngcnReport *out);

/**
 * Releases a checkpoint handle; null is ignored.
 *
 * # Safety
 * `checkpoint` must be null or an unreleased handle from this library.
 */
void angcn_checkpoint_free(struct AngcnCheckpoint *checkpoint);

/**
 * Metrics of positive-class `scores` against binary `labels`, both of
 * length `n`; predictions threshold at 0.5.
 *
 * # Safety
 * `scores` and `labels` must point to `n` readable elements and `out` be a
 * valid pointer.
 */
enum AngcnStatus angcn_evaluate_scores(const double *scores,
                                       const uint8_t *labels,
                                       size_t n,
                                       struct AngcnReport *out);

/**
 * Runs the finite-difference gradient check and stores the largest
 * relative error in `max_relative_error`.
 *
 * # Safety
 * `max_relative_error` must be a valid pointer.
 */
enum AngcnStatus angcn_gradcheck(uint64_t seed, double *max_relative_error);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ANGCN_H */
