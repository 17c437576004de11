/* Copyright 2026 The depthlab Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the depthlab refiner. Every function returns a dl_status;
 * on failure dl_last_error() holds a message for the calling thread.
 * Handles are opaque and released with their *_destroy function, which
 * accepts NULL.
 */
#ifndef DEPTHLAB_H_
#define DEPTHLAB_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DL_API __declspec(dllexport)
#else
#define DL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dl_status {
  DL_OK = 0,
  DL_ERR_IO = 1,
  DL_ERR_FORMAT = 2,
  DL_ERR_CONFIG = 3,
  DL_ERR_SHAPE = 4,
  DL_ERR_RANGE = 5,
  DL_ERR_DEGENERATE_DEPTH = 6,
  DL_ERR_EMPTY_DEPTH = 7,
  DL_ERR_UNIT_MISMATCH = 8,
  DL_ERR_DEGENERATE_SOURCE = 9,
  DL_ERR_INSUFFICIENT_OVERLAP = 10,
  DL_ERR_EMPTY_MASK = 11,
  DL_ERR_MISSING_GROUND_TRUTH = 12,
  DL_ERR_MISSING_CHECKPOINT = 13,
  DL_ERR_INVALID_ARGUMENT = 14,
  DL_ERR_INTERNAL = 99
} dl_status;

typedef struct dl_config dl_config;
typedef struct dl_split dl_split;
typedef struct dl_depth dl_depth;
typedef struct dl_image dl_image;
typedef struct dl_coarse dl_coarse;
typedef struct dl_refiner dl_refiner;

DL_API const char* dl_version(void);
DL_API const char* dl_last_error(void);
DL_API const char* dl_status_name(dl_status status);

/* Text outputs use the snprintf convention: up to cap-1 bytes plus NUL are
 * written and *needed (if non-NULL) receives the full length. */

/* ---- configuration (flat key=value) ---- */
DL_API dl_status dl_config_create(dl_config** out);
DL_API dl_status dl_config_load(const char* path, dl_config** out);
DL_API dl_status dl_config_set(dl_config* cfg, const char* key, const char* value);
DL_API dl_status dl_config_get(const dl_config* cfg, const char* key, char* buf, size_t cap, size_t* needed);
DL_API dl_status dl_config_to_string(const dl_config* cfg, char* buf, size_t cap, size_t* needed);
DL_API dl_status dl_config_save(const dl_config* cfg, const char* path);
DL_API void dl_config_destroy(dl_config* cfg);

/* ---- synthetic data ---- */
DL_API dl_status dl_generate(const dl_config* cfg, int count, const char* out_dir, int force);
DL_API dl_status dl_split_load(const char* manifest_or_dir, dl_split** out);
DL_API size_t dl_split_size(const dl_split* split);
DL_API dl_status dl_split_image(const dl_split* split, size_t index, dl_image** out);
DL_API dl_status dl_split_depth(const dl_split* split, size_t index, dl_depth** out);
DL_API void dl_split_destroy(dl_split* split);

/* ---- rasters ---- */
DL_API dl_status dl_depth_read(const char* path, dl_depth** out);
DL_API dl_status dl_depth_write(const dl_depth* d, const char* path);
DL_API dl_status dl_depth_create(int height, int width, const float* values, const uint8_t* validity, dl_depth** out);
DL_API dl_status dl_depth_shape(const dl_depth* d, int* height, int* width);
DL_API const float* dl_depth_values(const dl_depth* d);
DL_API void dl_depth_destroy(dl_depth* d);
DL_API dl_status dl_image_read(const char* path, dl_image** out);
DL_API dl_status dl_image_shape(const dl_image* img, int* height, int* width, int* channels);
DL_API void dl_image_destroy(dl_image* img);

/* ---- coarse models ---- */
DL_API dl_status dl_coarse_oracle(const dl_config* cfg, dl_coarse** out);
DL_API dl_status dl_coarse_load(const char* path, dl_coarse** out);
/* log_csv may be NULL. */
DL_API dl_status dl_coarse_train(const dl_config* cfg, const dl_split* train, const char* log_csv, dl_coarse** out);
DL_API dl_status dl_coarse_save(const dl_coarse* model, const dl_config* echo, const char* path);
DL_API dl_status dl_coarse_parameter_count(const dl_coarse* model, size_t* count);
/* gt may be NULL for learned models; the oracle requires it. */
DL_API dl_status dl_coarse_predict(const dl_coarse* model, const dl_image* image, const dl_depth* gt, dl_depth** out);
DL_API void dl_coarse_destroy(dl_coarse* model);

/* ---- refiner ---- */
DL_API dl_status dl_refiner_train(const dl_config* cfg, const dl_split* train, const dl_coarse* coarse,
                                  const char* log_csv, dl_refiner** out);
DL_API dl_status dl_refiner_load(const char* path, dl_refiner** out);
DL_API dl_status dl_refiner_save(const dl_refiner* r, const char* path);
DL_API dl_status dl_refiner_stats(const dl_refiner* r, int* iterations, int* skipped, double* initial_loss,
                                  double* final_loss);
/* Ensemble median of `ensemble` DDIM chains. coarse_out may be NULL. */
DL_API dl_status dl_refine(const dl_refiner* r, const dl_coarse* coarse, const dl_image* image, const dl_depth* gt,
                           int steps, int ensemble, uint64_t seed, dl_depth** refined, dl_depth** coarse_out);
DL_API void dl_refiner_destroy(dl_refiner* r);

/* ---- evaluation ---- */
DL_API dl_status dl_metrics(const dl_depth* pred, const dl_depth* gt, double* absrel, double* delta1);

typedef struct dl_summary {
  double absrel;
  double delta1;
  double coarse_absrel;
  double coarse_delta1;
} dl_summary;

/* Writes a per-sample CSV; strip_dir (may be NULL) receives PGM strips of
 * the first n_strips samples. Steps and ensemble come from cfg. */
DL_API dl_status dl_evaluate(const dl_refiner* r, const dl_coarse* coarse, const dl_split* test, const dl_config* cfg,
                             const char* csv_path, const char* strip_dir, int n_strips, dl_summary* summary);
/* axis: patch_size, threshold, ensemble, ddim_steps. refiner may be NULL for
 * the training axes. */
DL_API dl_status dl_sweep(const dl_config* cfg, const char* axis, const double* values, size_t n_values, int repeats,
                          const dl_split* train, const dl_split* test, const dl_coarse* coarse, const dl_refiner* r,
                          const char* csv_path);
DL_API dl_status dl_error_bars(const dl_refiner* r, const dl_coarse* coarse, const dl_split* test,
                               const dl_config* cfg, int repeats, const char* csv_path, double* absrel_mean,
                               double* absrel_std, double* delta1_mean, double* delta1_std);
DL_API dl_status dl_ablation(const char* const* checkpoint_paths, size_t n, const dl_coarse* coarse,
                             const dl_split* test, const dl_config* cfg, const char* csv_path);
DL_API dl_status dl_render_table(const char* csv_path, char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* DEPTHLAB_H_ */
