#ifndef DUMCAL_H
#define DUMCAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DumcalStatus {
  DUMCAL_STATUS_OK = 0,
  DUMCAL_STATUS_NULL_POINTER = 1,
  DUMCAL_STATUS_INVALID_ARGUMENT = 2,
  DUMCAL_STATUS_IO = 3,
  DUMCAL_STATUS_CONFIG = 4,
  DUMCAL_STATUS_TRAIN = 5,
  DUMCAL_STATUS_METRICS = 6,
  DUMCAL_STATUS_PANIC = 7,
} DumcalStatus;

/**
 * Owned set of prediction records keyed by sample id.
 */
typedef struct DumcalRecords DumcalRecords;

/**
 * Scalar metrics of a record set.
 */
typedef struct DumcalMetrics {
  double bacc;
  double ece;
  double aece;
  double mce;
  double oe;
  double brier;
  size_t n_bins;
  size_t n_samples;
} DumcalMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dumcal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dumcal_version(void);

/**
 * Creates an empty record set.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum DumcalStatus dumcal_records_new(struct DumcalRecords **out);

/**
 * Appends one prediction. The record's id is its position; the predicted
 * class and confidence are taken from `probs`.
 *
 * # Safety
 * `records` must come from this library; `probs` must point to
 * `n_classes` readable doubles.
 */
enum DumcalStatus dumcal_records_push(struct DumcalRecords *records,
                                      const double *probs,
                                      size_t n_classes,
                                      size_t label,
                                      double uncertainty);

/**
 * Number of records held.
 *
 * # Safety
 * `records` must come from this library; `out_len` must be writable.
 */
enum DumcalStatus dumcal_records_len(const struct DumcalRecords *records, size_t *out_len);

/**
 * Computes every metric with `n_bins` bins.
 *
 * # Safety
 * `records` must come from this library; `out` must be writable.
 */
enum DumcalStatus dumcal_records_metrics(const struct DumcalRecords *records,
                                         size_t n_bins,
                                         struct DumcalMetrics *out);

/**
 * Reads a prediction-log CSV into a new record set.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DumcalStatus dumcal_records_load(const char *path, struct DumcalRecords **out);

/**
 * Writes a record set as a prediction-log CSV.
 *
 * # Safety
 * `records` must come from this library; `path` must be a NUL-terminated
 * string.
 */
enum DumcalStatus dumcal_records_save(const struct DumcalRecords *records, const char *path);

/**
 * Averages the probabilities of `count` aligned record sets.
 *
 * # Safety
 * `members` must point to `count` handles from this library; `out` must be
 * writable.
 */
enum DumcalStatus dumcal_records_ensemble(const struct DumcalRecords *const *members,
                                          size_t count,
                                          struct DumcalRecords **out);

/**
 * Releases a record set. Null is ignored.
 *
 * # Safety
 * `records` must come from this library and not be used afterwards.
 */
void dumcal_records_free(struct DumcalRecords *records);

/**
 * Trains the model described by a configuration file and returns its
 * test-split predictions.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be writable.
 */
enum DumcalStatus dumcal_train(const char *config_path, struct DumcalRecords **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUMCAL_H */
