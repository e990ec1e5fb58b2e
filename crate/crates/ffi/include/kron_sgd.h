#ifndef KRON_SGD_H
#define KRON_SGD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KsStatus {
  KS_STATUS_OK = 0,
  KS_STATUS_NULL_POINTER = 1,
  KS_STATUS_INVALID_ARGUMENT = 2,
  KS_STATUS_IO = 3,
  KS_STATUS_PARSE = 4,
  KS_STATUS_OUT_OF_RANGE = 5,
  KS_STATUS_PANIC = 6,
} KsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct KsDataset KsDataset;

/**
 * Opaque trainer handle; owns its batch sampler.
 */
typedef struct KsTrainer KsTrainer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ks_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *ks_last_error_message(void);

/**
 * `sqrt(ln(m) / 2)`.
 */
double ks_default_tau(size_t m);

/**
 * Generates a synthetic dataset with unit-norm samples and labels uniform
 * in `[-label_scale, label_scale]`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum KsStatus ks_dataset_generate(size_t n,
                                  size_t p,
                                  size_t q,
                                  uint64_t seed,
                                  double label_scale,
                                  bool symmetric,
                                  struct KsDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in [`ks_dataset_generate`].
 */
enum KsStatus ks_dataset_load(const char *path, struct KsDataset **out);

/**
 * # Safety
 * `ds` must come from this library; `path` must be NUL-terminated.
 */
enum KsStatus ks_dataset_save(const struct KsDataset *ds, const char *path);

/**
 * Writes `n`, `p` and `q`. Any output pointer may be NULL.
 *
 * # Safety
 * `ds` must come from this library; non-NULL outputs must be writable.
 */
enum KsStatus ks_dataset_dims(const struct KsDataset *ds, size_t *n, size_t *p, size_t *q);

/**
 * Releases a dataset. Trainers built from it stay valid. NULL is ignored.
 *
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void ks_dataset_free(struct KsDataset *ds);

/**
 * Initializes a trainer of width `m`. A negative `tau` selects
 * `sqrt(ln(m) / 2)`. Batches are drawn from a sampler seeded with `seed`.
 *
 * # Safety
 * `ds` must come from this library; `out` must be writable.
 */
enum KsStatus ks_trainer_new(const struct KsDataset *ds,
                             size_t m,
                             double tau,
                             uint64_t seed,
                             struct KsTrainer **out);

/**
 * # Safety
 * `tr` must come from this library and not be used afterwards.
 */
void ks_trainer_free(struct KsTrainer *tr);

/**
 * Runs the tree queries and updates on `workers` threads (1 = inline).
 *
 * # Safety
 * `tr` must come from this library.
 */
enum KsStatus ks_trainer_set_workers(struct KsTrainer *tr, size_t workers);

/**
 * One SGD step. `changed`, if non-NULL, receives the number of neurons
 * that fired on the batch.
 *
 * # Safety
 * `tr` must come from this library; `changed` may be NULL.
 */
enum KsStatus ks_trainer_step(struct KsTrainer *tr, double eta, size_t s_batch, size_t *changed);

/**
 * Runs `iters` steps; `final_loss`, if non-NULL, receives `||u - y||^2`.
 *
 * # Safety
 * `tr` must come from this library; `final_loss` may be NULL.
 */
enum KsStatus ks_trainer_train(struct KsTrainer *tr,
                               double eta,
                               size_t s_batch,
                               size_t iters,
                               double *final_loss);

/**
 * Completed steps.
 *
 * # Safety
 * `tr` must come from this library; `out` must be writable.
 */
enum KsStatus ks_trainer_iteration(const struct KsTrainer *tr, size_t *out);

/**
 * Writes the `n` current predictions into `out[0..len]`; `len` must be `n`.
 *
 * # Safety
 * `tr` must come from this library; `out` must hold `len` doubles.
 */
enum KsStatus ks_trainer_predictions(const struct KsTrainer *tr, double *out, size_t len);

/**
 * Writes the dense first-layer weights, row-major m×d (row `r` is neuron
 * `r`); `len` must be `m·d`.
 *
 * # Safety
 * `tr` must come from this library; `out` must hold `len` doubles.
 */
enum KsStatus ks_trainer_export_weights(const struct KsTrainer *tr, double *out, size_t len);

/**
 * Current `w_r^T x_i` for 1-based `sample` and `neuron`.
 *
 * # Safety
 * `tr` must come from this library; `out` must be writable.
 */
enum KsStatus ks_trainer_leaf_value(const struct KsTrainer *tr,
                                    size_t sample,
                                    size_t neuron,
                                    double *out);

/**
 * `||w_r(t) - w_r(0)||_2` for 1-based `neuron`.
 *
 * # Safety
 * `tr` must come from this library; `out` must be writable.
 */
enum KsStatus ks_trainer_weight_movement(const struct KsTrainer *tr, size_t neuron, double *out);

/**
 * Smallest eigenvalue of the symmetric row-major `n×n` matrix `m`.
 *
 * # Safety
 * `m` must hold `n·n` doubles; `out` must be writable.
 */
enum KsStatus ks_lambda_min(const double *m, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KRON_SGD_H */
