#ifndef PBCNN_PBCNN_H
#define PBCNN_PBCNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(PBCNN_BUILDING)
#    define PBCNN_API __declspec(dllexport)
#  else
#    define PBCNN_API __declspec(dllimport)
#  endif
#else
#  define PBCNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pbcnn_status {
  PBCNN_OK = 0,
  PBCNN_ERR_VALIDATION = 1, /* bad config or argument */
  PBCNN_ERR_RUNTIME = 2     /* I/O, numeric or stage failure */
} pbcnn_status;

typedef struct pbcnn_experiment pbcnn_experiment;
typedef struct pbcnn_model pbcnn_model;

/* Uncertainty measure indices used by pbcnn_model_predict. */
enum {
  PBCNN_MEASURE_ENTROPY = 0,
  PBCNN_MEASURE_TOTAL_STD = 1,
  PBCNN_MEASURE_CLASSWISE_STD = 2,
  PBCNN_MEASURE_CLASSWISE_RANGE = 3,
  PBCNN_MEASURE_COUNT = 4
};

PBCNN_API const char* pbcnn_version(void);

/* Message of the most recent failed call on this thread; "" if none. */
PBCNN_API const char* pbcnn_last_error(void);

/* Experiments. The seed comes from the config, PBCNN_SEED, or set_seed (last wins). */
PBCNN_API pbcnn_status pbcnn_experiment_load(const char* config_path, const char* out_dir,
                                             pbcnn_experiment** out);
typedef void (*pbcnn_log_fn)(const char* message, void* user);
/* Progress messages from stage runs; pass NULL to silence. */
PBCNN_API pbcnn_status pbcnn_experiment_set_log(pbcnn_experiment* exp, pbcnn_log_fn fn, void* user);
PBCNN_API pbcnn_status pbcnn_experiment_set_seed(pbcnn_experiment* exp, uint64_t seed);
PBCNN_API uint64_t pbcnn_experiment_seed(const pbcnn_experiment* exp);
/* Writes 16 hex digits plus a terminator into buf (size >= 17). */
PBCNN_API pbcnn_status pbcnn_experiment_config_hash(const pbcnn_experiment* exp, char* buf, size_t size);
/* stage: synth, preprocess, train, calibrate, inject, evaluate, report. */
PBCNN_API pbcnn_status pbcnn_experiment_run_stage(pbcnn_experiment* exp, const char* stage);
/* All stages in order; resume != 0 skips stages already completed for this config. */
PBCNN_API pbcnn_status pbcnn_experiment_run_all(pbcnn_experiment* exp, int resume);
/* Renders the report from the artifacts on disk. The text stays valid until
   the next call on this handle. */
PBCNN_API pbcnn_status pbcnn_experiment_report(pbcnn_experiment* exp, const char** text);
PBCNN_API void pbcnn_experiment_free(pbcnn_experiment* exp);

/* Trained model checkpoints. */
PBCNN_API pbcnn_status pbcnn_model_load(const char* checkpoint_path, pbcnn_model** out);
PBCNN_API void pbcnn_model_free(pbcnn_model* model);
PBCNN_API pbcnn_status pbcnn_model_shape(const pbcnn_model* model, size_t* height, size_t* width,
                                         size_t* classes);
PBCNN_API pbcnn_status pbcnn_model_parameter_count(const pbcnn_model* model, uint64_t* frequentist,
                                                   uint64_t* variational);
/* image: height*width values, row-major, single channel, in [-1,1].
   mean_prob receives `classes` values; measures receives PBCNN_MEASURE_COUNT. */
PBCNN_API pbcnn_status pbcnn_model_predict(const pbcnn_model* model, const double* image, size_t passes,
                                           uint64_t seed, double* mean_prob, double* measures,
                                           size_t* predicted_class);

/* Standalone helpers. */
/* probs: passes x classes row-major Monte-Carlo probabilities. */
PBCNN_API pbcnn_status pbcnn_uncertainty(const double* probs, size_t passes, size_t classes,
                                         double* measures);
/* In-distribution examples (is_id != 0) are positives; higher score means more uncertain. */
PBCNN_API pbcnn_status pbcnn_auroc(const double* scores, const int* is_id, size_t n, double* auroc);

#ifdef __cplusplus
}
#endif

#endif
