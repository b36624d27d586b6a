#ifndef PLANAR_RECON_H
#define PLANAR_RECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PrStatus {
  PR_STATUS_OK = 0,
  PR_STATUS_NULL_POINTER = 1,
  PR_STATUS_INVALID_INPUT = 2,
  PR_STATUS_GRID_MISMATCH = 3,
  PR_STATUS_NO_PLANAR_PIXELS = 4,
  PR_STATUS_EMPTY_INSTANCE = 5,
  PR_STATUS_DEGENERATE_INPUT = 6,
  PR_STATUS_BUFFER_SIZE = 7,
  PR_STATUS_IO = 8,
  PR_STATUS_PANIC = 9,
} PrStatus;

/**
 * Opaque clustering result.
 */
typedef struct PrClusterResult PrClusterResult;

/**
 * Mean shift settings; see [`pr_mean_shift_config_default`].
 */
typedef struct PrMeanShiftConfig {
  size_t anchors_per_dim;
  double bandwidth;
  size_t iterations;
  double density_fraction;
  double merge_radius;
  /**
   * 0 = all cores, 1 = caller's thread.
   */
  size_t workers;
} PrMeanShiftConfig;

typedef struct PrIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
} PrIntrinsics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *pr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pr_version(void);

struct PrMeanShiftConfig pr_mean_shift_config_default(void);

/**
 * Anchor mean shift over the embeddings of pixels whose probability is at
 * least `mask_threshold`.
 *
 * # Safety
 * `embeddings` holds `height * width * dim` values, `probs` holds
 * `height * width`, `config` may be null for defaults, `out` must be valid.
 */
enum PrStatus pr_cluster(const double *embeddings,
                         const double *probs,
                         size_t height,
                         size_t width,
                         size_t dim,
                         double mask_threshold,
                         const struct PrMeanShiftConfig *config,
                         struct PrClusterResult **out);

/**
 * Classic per-pixel mean shift, for comparison with [`pr_cluster`].
 *
 * # Safety
 * As [`pr_cluster`].
 */
enum PrStatus pr_vanilla_mean_shift(const double *embeddings,
                                    const double *probs,
                                    size_t height,
                                    size_t width,
                                    size_t dim,
                                    double mask_threshold,
                                    double bandwidth,
                                    size_t max_iters,
                                    double tol,
                                    struct PrClusterResult **out);

/**
 * Number of cluster centers (columns of the soft assignment).
 *
 * # Safety
 * `result` is a live handle or null (returns 0).
 */
size_t pr_cluster_result_cluster_count(const struct PrClusterResult *result);

/**
 * Number of distinct nonzero hard labels.
 *
 * # Safety
 * `result` is a live handle or null (returns 0).
 */
size_t pr_cluster_result_instance_count(const struct PrClusterResult *result);

/**
 * Copies the centers (`cluster_count * dim` values).
 *
 * # Safety
 * `result` is a live handle; `out` holds `len` values.
 */
enum PrStatus pr_cluster_result_centers(const struct PrClusterResult *result,
                                        double *out,
                                        size_t len);

/**
 * Copies the hard labels (`height * width` values, 0 = non-planar).
 *
 * # Safety
 * `result` is a live handle; `out` holds `len` values.
 */
enum PrStatus pr_cluster_result_labels(const struct PrClusterResult *result,
                                       uint32_t *out,
                                       size_t len);

/**
 * Copies the soft assignment (`height * width * cluster_count` values).
 *
 * # Safety
 * `result` is a live handle; `out` holds `len` values.
 */
enum PrStatus pr_cluster_result_assignment(const struct PrClusterResult *result,
                                           double *out,
                                           size_t len);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `result` came from [`pr_cluster`] or [`pr_vanilla_mean_shift`] and is
 * freed at most once.
 */
void pr_cluster_result_free(struct PrClusterResult *result);

/**
 * Renders the depth of plane `n·Q = 1`; pixels whose ray misses get
 * `valid = 0` and depth 0.
 *
 * # Safety
 * `plane` holds 3 values; `depth` and `valid` hold `height * width`.
 */
enum PrStatus pr_depth_from_plane(const double *plane,
                                  size_t height,
                                  size_t width,
                                  const struct PrIntrinsics *intr,
                                  double *depth,
                                  uint8_t *valid);

/**
 * Lifts valid depths (`> 0` and finite) to camera-frame points; invalid
 * pixels get `(0, 0, 0)`.
 *
 * # Safety
 * `depth` holds `height * width` values and `points` three times that.
 */
enum PrStatus pr_backproject(const double *depth,
                             size_t height,
                             size_t width,
                             const struct PrIntrinsics *intr,
                             double *points);

/**
 * Class-balanced cross-entropy of planar probabilities; `grad` (may be null)
 * receives `d loss / d probs`.
 *
 * # Safety
 * `probs`, `mask` and a non-null `grad` hold `height * width` values.
 */
enum PrStatus pr_balanced_bce(const double *probs,
                              const uint8_t *mask,
                              size_t height,
                              size_t width,
                              double *value,
                              double *grad);

/**
 * Pull plus push embedding loss against contiguous labels (0 = non-planar);
 * `grad` (may be null) receives `d loss / d embeddings`.
 *
 * # Safety
 * `embeddings` and a non-null `grad` hold `height * width * dim` values,
 * `labels` holds `height * width`.
 */
enum PrStatus pr_embedding_loss(const double *embeddings,
                                const uint32_t *labels,
                                size_t height,
                                size_t width,
                                size_t dim,
                                double delta_v,
                                double delta_d,
                                double *value,
                                double *grad);

/**
 * Rand index of two labelings of `len` pixels. With `exclude_nonplanar`,
 * pixels labeled 0 in `a` are ignored.
 *
 * # Safety
 * `a` and `b` hold `len` values; `out` is valid.
 */
enum PrStatus pr_rand_index(const uint32_t *a,
                            const uint32_t *b,
                            size_t len,
                            bool exclude_nonplanar,
                            double *out);

/**
 * Variation of information (nats) of two labelings.
 *
 * # Safety
 * As [`pr_rand_index`].
 */
enum PrStatus pr_variation_of_information(const uint32_t *a,
                                          const uint32_t *b,
                                          size_t len,
                                          bool exclude_nonplanar,
                                          double *out);

/**
 * Segmentation covering of ground truth `gt` by `pred`.
 *
 * # Safety
 * As [`pr_rand_index`].
 */
enum PrStatus pr_segmentation_covering(const uint32_t *gt,
                                       const uint32_t *pred,
                                       size_t len,
                                       bool exclude_nonplanar,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLANAR_RECON_H */
