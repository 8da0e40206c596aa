#ifndef FBC_H
#define FBC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FBC_SCENARIO_SHIFT_GAUSS 0

#define FBC_SCENARIO_FOG 1

#define FBC_SCHEDULE_CYCLIC 0

#define FBC_SCHEDULE_JOINT 1

#define FBC_SCHEDULE_SOURCE_ONLY 2

typedef enum FbcStatus {
  FBC_STATUS_OK = 0,
  FBC_STATUS_NULL_POINTER = 1,
  // Bad enum value, non-UTF-8 string or wrong buffer length.
  FBC_STATUS_INVALID_ARGUMENT = 2,
  FBC_STATUS_CONFIG = 3,
  FBC_STATUS_PARSE = 4,
  FBC_STATUS_IO = 5,
  // Shape, label or layout inconsistency in the data.
  FBC_STATUS_DATA = 6,
  // Training hit a non-finite loss or parameter.
  FBC_STATUS_NUMERIC = 7,
  // The verification suite ran and at least one check failed.
  FBC_STATUS_VERIFY_FAILED = 8,
  FBC_STATUS_PANIC = 9,
} FbcStatus;

// Source scenes, target scenes and optionally the target's hidden labels.
typedef struct FbcDataset FbcDataset;

// Metrics and final parameters of a training run.
typedef struct FbcRun FbcRun;

typedef struct FbcHyperparams {
  double alpha;
  double beta;
  double gamma;
  double lambda_adv;
  uint64_t episodes;
  double tau;
} FbcHyperparams;

// One episode of training metrics. Absent optional values are NaN, or -1
// for `pseudo_label_count`.
typedef struct FbcEpisodeMetrics {
  uint64_t episode;
  double source_loss;
  double target_loss;
  double grad_inner_product;
  double source_entropy;
  double target_entropy;
  double target_accuracy;
  int64_t pseudo_label_count;
  double proxy_a_distance;
} FbcEpisodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failed call on this thread, or null. The
// pointer stays valid until the next failing call on the same thread.
const char *fbc_last_error(void);

// Library version as a static nul-terminated string.
const char *fbc_version(void);

// Default hyperparameters.
struct FbcHyperparams fbc_hyperparams_default(void);

// Generates the preset dataset of a scenario (`FBC_SCENARIO_*`).
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum FbcStatus fbc_dataset_generate(uint32_t scenario, uint64_t seed, struct FbcDataset **out);

// Loads a dataset from CSV files. `hidden_labels_path` may be null.
//
// # Safety
// Paths must be null or nul-terminated strings; `out` must be writable.
enum FbcStatus fbc_dataset_load(const char *source_path,
                                const char *target_path,
                                const char *hidden_labels_path,
                                size_t categories,
                                struct FbcDataset **out);

// Writes `source.csv`, `target.csv` and, when present, `hidden_labels.csv`
// into an existing directory.
//
// # Safety
// `dataset` must be a live handle; `dir` a nul-terminated string.
enum FbcStatus fbc_dataset_save(const struct FbcDataset *dataset, const char *dir);

// Scene counts of a dataset; either output may be null.
//
// # Safety
// `dataset` must be a live handle; outputs null or writable.
enum FbcStatus fbc_dataset_counts(const struct FbcDataset *dataset,
                                  size_t *source_scenes,
                                  size_t *target_scenes);

// # Safety
// `dataset` must be null or a handle not yet freed.
void fbc_dataset_free(struct FbcDataset *dataset);

// Trains on a dataset with a schedule (`FBC_SCHEDULE_*`). When the dataset
// carries hidden labels, target accuracy is recorded per episode.
//
// On a numeric failure the function returns `Numeric` and still stores a
// run handle holding the completed episodes and last finite parameters.
//
// # Safety
// `dataset` and `hp` must be valid pointers; `out` must be writable.
enum FbcStatus fbc_train(const struct FbcDataset *dataset,
                         const struct FbcHyperparams *hp,
                         uint32_t schedule,
                         uint64_t seed,
                         struct FbcRun **out);

// Number of completed episodes.
//
// # Safety
// `run` must be a live handle.
enum FbcStatus fbc_run_episode_count(const struct FbcRun *run, size_t *count);

// Metrics of episode `index`.
//
// # Safety
// `run` must be a live handle; `out` writable.
enum FbcStatus fbc_run_metrics(const struct FbcRun *run,
                               size_t index,
                               struct FbcEpisodeMetrics *out);

// Number of model parameters.
//
// # Safety
// `run` must be a live handle.
enum FbcStatus fbc_run_param_count(const struct FbcRun *run, size_t *count);

// Copies the final parameters into `buffer`, whose length must equal the
// parameter count.
//
// # Safety
// `buffer` must point to `len` writable doubles.
enum FbcStatus fbc_run_params(const struct FbcRun *run, double *buffer, size_t len);

// Writes the metrics as JSON lines.
//
// # Safety
// `run` must be a live handle; `path` a nul-terminated string.
enum FbcStatus fbc_run_write_metrics(const struct FbcRun *run, const char *path);

// Writes the final parameters as `segment,index,value` CSV.
//
// # Safety
// `run` must be a live handle; `path` a nul-terminated string.
enum FbcStatus fbc_run_save_params(const struct FbcRun *run, const char *path);

// # Safety
// `run` must be null or a handle not yet freed.
void fbc_run_free(struct FbcRun *run);

// Runs the numerical verification suite. Returns `VerifyFailed` when a
// check fails. `report_path` may be null; otherwise the JSON report is
// written there.
//
// # Safety
// `report_path` must be null or a nul-terminated string.
enum FbcStatus fbc_verify(bool perturb_grl, const char *report_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FBC_H */
