#ifndef OOC_OOC_H
#define OOC_OOC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(OOC_BUILDING_LIBRARY)
#    define OOC_API __declspec(dllexport)
#  else
#    define OOC_API __declspec(dllimport)
#  endif
#else
#  define OOC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ooc_status {
  OOC_OK = 0,
  OOC_ERR_FORMAT,
  OOC_ERR_ALIGNMENT,
  OOC_ERR_VALIDATION,
  OOC_ERR_MISSING_ID,
  OOC_ERR_DEGENERATE,
  OOC_ERR_ARGUMENT,
  OOC_ERR_INSUFFICIENT,
  OOC_ERR_DIVERGENCE,
  OOC_ERR_UNDEFINED_METRIC,
  OOC_ERR_CONFIG,
  OOC_ERR_IO,
  OOC_ERR_INTERNAL
} ooc_status;

/* Message for the last failing call on this thread; never NULL. */
OOC_API const char* ooc_last_error(void);
OOC_API const char* ooc_status_string(ooc_status status);
/* 0 ok, 2 internal, 1 anything else. */
OOC_API int ooc_exit_code(ooc_status status);
OOC_API const char* ooc_version(void);

typedef struct ooc_config ooc_config;

OOC_API ooc_status ooc_config_create(ooc_config** out);
OOC_API void ooc_config_destroy(ooc_config* cfg);
OOC_API ooc_status ooc_config_load_file(ooc_config* cfg, const char* path);
OOC_API ooc_status ooc_config_set(ooc_config* cfg, const char* key, const char* value);
/* Applies OOC_SEED. Call after loading files and before command-line overrides. */
OOC_API ooc_status ooc_config_apply_env(ooc_config* cfg);
/* Resolves the entries without running anything; reports bad keys/values. */
OOC_API ooc_status ooc_config_validate(const ooc_config* cfg);

typedef void (*ooc_text_fn)(const char* text, size_t len, void* user);

/* Runs synth, mine, build, train, evaluate, cluster or report. */
OOC_API ooc_status ooc_run_command(const ooc_config* cfg, const char* command, ooc_text_fn out,
                                   ooc_text_fn warn, void* user);

typedef struct ooc_matrix ooc_matrix;

OOC_API ooc_status ooc_matrix_load(const char* path, ooc_matrix** out);
/* ids: n strings; values: n*dim floats, row-major. */
OOC_API ooc_status ooc_matrix_create(const char* const* ids, size_t n, size_t dim, const float* values,
                                     ooc_matrix** out);
OOC_API ooc_status ooc_matrix_save(const ooc_matrix* m, const char* path);
OOC_API ooc_status ooc_matrix_normalize(const ooc_matrix* m, ooc_matrix** out);
OOC_API size_t ooc_matrix_rows(const ooc_matrix* m);
OOC_API size_t ooc_matrix_dim(const ooc_matrix* m);
/* Pointer into the matrix, valid until it is destroyed. */
OOC_API ooc_status ooc_matrix_lookup(const ooc_matrix* m, const char* id, const float** row);
OOC_API void ooc_matrix_destroy(ooc_matrix* m);

/* Dot product of unit vectors; higher means more likely pristine. */
OOC_API double ooc_zero_shot_score(const float* img, const float* txt, size_t dim);

typedef struct ooc_model ooc_model;

OOC_API ooc_status ooc_model_load(const char* path, ooc_model** out);
OOC_API size_t ooc_model_dim(const ooc_model* model);
/* Probability that the pair is falsified. */
OOC_API ooc_status ooc_model_predict(const ooc_model* model, const float* img, const float* txt, size_t dim,
                                     double* prob);
OOC_API void ooc_model_destroy(ooc_model* model);

typedef struct ooc_metrics {
  double pd_at_far01;
  double pd_at_eer;
  double acc_at_eer;
  double eer;
  double eer_threshold;
  size_t n_pos;
  size_t n_neg;
} ooc_metrics;

/* labels: 1 falsified, 0 pristine. Higher scores mean more likely falsified. */
OOC_API ooc_status ooc_metrics_summarize(const double* scores, const int* labels, size_t n, ooc_metrics* out);

/* boxes: n_boxes * 4 values (x1, y1, x2, y2). */
OOC_API ooc_status ooc_ocr_coverage(int64_t width, int64_t height, const int64_t* boxes, size_t n_boxes,
                                    double* coverage);
/* "=0%", "0-10%", "10-50%" or ">50%". */
OOC_API const char* ooc_coverage_bucket(double coverage);

#ifdef __cplusplus
}
#endif

#endif
