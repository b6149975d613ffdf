#ifndef PEERFX_H
#define PEERFX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum PfxStatus {
  PFX_STATUS_OK = 0,
  PFX_STATUS_NULL_POINTER = 1,
  PFX_STATUS_INVALID_ARGUMENT = 2,
  PFX_STATUS_DATA_ERROR = 3,
  PFX_STATUS_NUMERICAL_ERROR = 4,
  PFX_STATUS_PANIC = 5,
} PfxStatus;

typedef enum PfxProgramType {
  PFX_PROGRAM_TYPE_SHORT = 0,
  PFX_PROGRAM_TYPE_LONG = 1,
  PFX_PROGRAM_TYPE_RETRAINING = 2,
} PfxProgramType;

/**
 * Opaque dataset handle.
 */
typedef struct PfxDataset PfxDataset;

/**
 * Peer-mean effect from the linear-in-means model, per residual SD.
 */
typedef struct PfxEffect {
  double effect;
  double se;
  double p;
  /**
   * Unscaled coefficient and its standard error.
   */
  double coef;
  double coef_se;
  double residual_sd;
  size_t nobs;
  size_t n_clusters;
} PfxEffect;

typedef struct PfxResampling {
  double observed_sd_raw;
  double observed_sd_net;
  double simulated_mean_sd_net;
  double simulated_sd_of_sd_net;
  double z_net;
  size_t n_sims;
  /**
   * 1 when `z_net` exceeds the threshold.
   */
  int32_t excess_variation;
} PfxResampling;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pfx_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pfx_version(void);

/**
 * Draws a synthetic dataset with default parameters except those given.
 * Zero for `n_providers` or `n_nonparticipants` keeps the default.
 */
enum PfxStatus pfx_dataset_generate(uint64_t seed,
                                    uint32_t n_providers,
                                    uint32_t n_nonparticipants,
                                    struct PfxDataset **out);

/**
 * Loads persons and courses CSVs.
 *
 * # Safety
 * `persons` and `courses` must be null or NUL-terminated strings.
 */
enum PfxStatus pfx_dataset_load(const char *persons, const char *courses, struct PfxDataset **out);

/**
 * Writes persons and courses CSVs.
 *
 * # Safety
 * `ds` must be null or a live handle; paths must be null or NUL-terminated.
 */
enum PfxStatus pfx_dataset_write(const struct PfxDataset *ds,
                                 const char *persons,
                                 const char *courses);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void pfx_dataset_free(struct PfxDataset *ds);

/**
 * Counts of persons, participants and courses. Any out pointer may be null.
 *
 * # Safety
 * `ds` must be null or a live handle; out pointers null or writable.
 */
enum PfxStatus pfx_dataset_counts(const struct PfxDataset *ds,
                                  size_t *persons,
                                  size_t *participants,
                                  size_t *courses);

/**
 * Attaches employability scores in place (joint model, three neighbours).
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
enum PfxStatus pfx_dataset_score(struct PfxDataset *ds);

/**
 * Linear-in-means peer effect on a scored dataset, default sample filters.
 *
 * # Safety
 * `ds` must be null or a live handle; `outcome` null or NUL-terminated; `out` null or writable.
 */
enum PfxStatus pfx_estimate_linear_in_means(const struct PfxDataset *ds,
                                            enum PfxProgramType program_type,
                                            const char *outcome,
                                            struct PfxEffect *out);

/**
 * Mean of `scores` without element `i`.
 *
 * # Safety
 * `scores` must point to `n` doubles; `out` null or writable.
 */
enum PfxStatus pfx_loo_mean(const double *scores, size_t n, size_t i, double *out);

/**
 * Sample SD of `scores` without element `i`.
 *
 * # Safety
 * `scores` must point to `n` doubles; `out` null or writable.
 */
enum PfxStatus pfx_loo_sd(const double *scores, size_t n, size_t i, double *out);

/**
 * Within-cell reallocation test on a scored dataset.
 *
 * # Safety
 * `ds` must be null or a live handle; `out` null or writable.
 */
enum PfxStatus pfx_resampling_test(const struct PfxDataset *ds,
                                   enum PfxProgramType program_type,
                                   size_t n_sims,
                                   uint64_t seed,
                                   double z_threshold,
                                   struct PfxResampling *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEERFX_H */
