#ifndef ASO_FFI_H
#define ASO_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum AsoStatus {
  ASO_STATUS_OK = 0,
  ASO_STATUS_INVALID_INPUT = 1,
  ASO_STATUS_DOMAIN = 2,
  ASO_STATUS_DEGENERATE = 3,
  ASO_STATUS_UNDEFINED_METRIC = 4,
  ASO_STATUS_CONFIG = 5,
  ASO_STATUS_IO = 6,
  ASO_STATUS_PARSE = 7,
  ASO_STATUS_NULL_POINTER = 8,
  ASO_STATUS_PANIC = 9,
} AsoStatus;

typedef enum AsoRewardKind {
  ASO_REWARD_KIND_ABS = 0,
  ASO_REWARD_KIND_SQUARED = 1,
  ASO_REWARD_KIND_ACCURACY = 2,
  ASO_REWARD_KIND_DISTRIBUTION = 3,
  ASO_REWARD_KIND_COMPOSITE = 4,
} AsoRewardKind;

typedef enum AsoAlphaMetric {
  ASO_ALPHA_METRIC_INTERVAL = 0,
  ASO_ALPHA_METRIC_ORDINAL = 1,
} AsoAlphaMetric;

typedef enum AsoPredictMode {
  ASO_PREDICT_MODE_EXPECTED = 0,
  ASO_PREDICT_MODE_ARGMAX = 1,
} AsoPredictMode;

/**
 * Opaque score grid.
 */
typedef struct AsoGrid AsoGrid;

/**
 * Opaque linear scorer loaded from a checkpoint.
 */
typedef struct AsoScorer AsoScorer;

typedef struct AsoRewardSpec {
  enum AsoRewardKind kind;
  double beta;
  double w_acc;
  double w_dist;
} AsoRewardSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or NULL after a success. The
 * pointer stays valid until the next call into this library on the thread.
 */
const char *aso_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aso_version(void);

/**
 * Creates a grid from `min` to `max` in increments of `step`.
 *
 * # Safety
 * `out` must be a valid pointer; release the grid with [`aso_grid_free`].
 */
enum AsoStatus aso_grid_new(double min, double max, double step, struct AsoGrid **out);

/**
 * # Safety
 * `grid` must come from [`aso_grid_new`] and not be freed twice. NULL is ignored.
 */
void aso_grid_free(struct AsoGrid *grid);

/**
 * Number of levels, or 0 for a NULL grid.
 *
 * # Safety
 * `grid` must be NULL or a live grid.
 */
size_t aso_grid_len(const struct AsoGrid *grid);

/**
 * Writes the grid levels in ascending order.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum AsoStatus aso_grid_levels(const struct AsoGrid *grid, double *out, size_t len);

/**
 * Reward of every level against the target `s_star`.
 *
 * # Safety
 * `spec` must be valid and `out` must hold `len` doubles.
 */
enum AsoStatus aso_reward_vector(const struct AsoGrid *grid,
                                 double s_star,
                                 const struct AsoRewardSpec *spec,
                                 double *out,
                                 size_t len);

/**
 * KL-regularized optimal policy `π_ref · exp(R/λ) / Z`. Writes the
 * distribution to `out_probs` and `log Z` to `out_log_partition` (may be NULL).
 *
 * # Safety
 * `pi_ref`, `rewards` and `out_probs` must each hold `len` doubles.
 */
enum AsoStatus aso_optimal_policy(const struct AsoGrid *grid,
                                  const double *pi_ref,
                                  const double *rewards,
                                  size_t len,
                                  double lambda,
                                  double *out_probs,
                                  double *out_log_partition);

/**
 * `Σ π R − λ KL(π ‖ π_ref)`.
 *
 * # Safety
 * `pi`, `pi_ref` and `rewards` must each hold `len` doubles.
 */
enum AsoStatus aso_objective(const struct AsoGrid *grid,
                             const double *pi,
                             const double *pi_ref,
                             const double *rewards,
                             size_t len,
                             double lambda,
                             double *out);

/**
 * Soft-target cross-entropy `−Σ t log softmax(z)`.
 *
 * # Safety
 * `target` and `logits` must each hold `len` doubles.
 */
enum AsoStatus aso_soft_ce_loss(const struct AsoGrid *grid,
                                const double *target,
                                const double *logits,
                                size_t len,
                                double *out);

/**
 * Gradient of [`aso_soft_ce_loss`] with respect to the logits: `softmax(z) − t`.
 *
 * # Safety
 * `target`, `logits` and `out_grad` must each hold `len` doubles.
 */
enum AsoStatus aso_soft_ce_grad(const struct AsoGrid *grid,
                                const double *target,
                                const double *logits,
                                size_t len,
                                double *out_grad);

/**
 * Spearman rank correlation (average ranks for ties).
 *
 * # Safety
 * `preds` and `gts` must each hold `n` doubles.
 */
enum AsoStatus aso_srcc(const double *preds, const double *gts, size_t n, double *out);

/**
 * Pearson correlation.
 *
 * # Safety
 * `preds` and `gts` must each hold `n` doubles.
 */
enum AsoStatus aso_plcc(const double *preds, const double *gts, size_t n, double *out);

/**
 * Mean absolute error.
 *
 * # Safety
 * `preds` and `gts` must each hold `n` doubles.
 */
enum AsoStatus aso_mae(const double *preds, const double *gts, size_t n, double *out);

/**
 * Share of predictions within `tolerance` of the ground truth (inclusive).
 *
 * # Safety
 * `preds` and `gts` must each hold `n` doubles.
 */
enum AsoStatus aso_acc_at(const double *preds,
                          const double *gts,
                          size_t n,
                          double tolerance,
                          double *out);

/**
 * Krippendorff's alpha over `n` ratings; `units[i]` names the unit that
 * rating `values[i]` belongs to.
 *
 * # Safety
 * `units` and `values` must each hold `n` elements.
 */
enum AsoStatus aso_krippendorff_alpha(const uint64_t *units,
                                      const double *values,
                                      size_t n,
                                      enum AsoAlphaMetric metric,
                                      double *out);

/**
 * Parses a checkpoint from a JSON string.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be valid. Release with [`aso_scorer_free`].
 */
enum AsoStatus aso_scorer_from_json(const char *json, struct AsoScorer **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid. Release with [`aso_scorer_free`].
 */
enum AsoStatus aso_scorer_load(const char *path, struct AsoScorer **out);

/**
 * # Safety
 * `scorer` must come from this library and not be freed twice. NULL is ignored.
 */
void aso_scorer_free(struct AsoScorer *scorer);

/**
 * Feature dimension, or 0 for a NULL scorer.
 *
 * # Safety
 * `scorer` must be NULL or live.
 */
size_t aso_scorer_feature_dim(const struct AsoScorer *scorer);

/**
 * Number of score levels, or 0 for a NULL scorer.
 *
 * # Safety
 * `scorer` must be NULL or live.
 */
size_t aso_scorer_levels(const struct AsoScorer *scorer);

/**
 * Scalar score for one feature vector.
 *
 * # Safety
 * `features` must hold `n_features` doubles.
 */
enum AsoStatus aso_scorer_predict(const struct AsoScorer *scorer,
                                  const double *features,
                                  size_t n_features,
                                  enum AsoPredictMode mode,
                                  double *out);

/**
 * Score distribution for one feature vector.
 *
 * # Safety
 * `features` must hold `n_features` doubles and `out_probs` `len` doubles.
 */
enum AsoStatus aso_scorer_policy(const struct AsoScorer *scorer,
                                 const double *features,
                                 size_t n_features,
                                 double *out_probs,
                                 size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASO_FFI_H */
