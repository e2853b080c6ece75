/* Copyright 2026 The MCUR Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the MCUR library. Every object is an opaque handle released
 * with its *_free function. Functions return an mcur_status; on failure
 * mcur_last_error() describes the problem (thread-local, valid until the next
 * call on the same thread). Strings returned through `const char**` are owned
 * by the handle they were read from.
 */

#ifndef MCUR_MCUR_H_
#define MCUR_MCUR_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MCUR_API __declspec(dllexport)
#else
#define MCUR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mcur_status {
  MCUR_OK = 0,
  MCUR_ERR_INVALID_ARGUMENT = 1,
  MCUR_ERR_CONFIG = 2,
  MCUR_ERR_IO = 3,
  MCUR_ERR_INCOMPATIBLE = 4,
  MCUR_ERR_NUMERICAL = 5,
  MCUR_ERR_METRIC = 6,
  MCUR_ERR_RUNTIME = 7,
  MCUR_ERR_NULL_POINTER = 8
} mcur_status;

typedef struct mcur_config mcur_config;
typedef struct mcur_dataset mcur_dataset;
typedef struct mcur_model mcur_model;
typedef struct mcur_results mcur_results;
typedef struct mcur_report mcur_report;

/* Receives one JSON document per call (training log lines, progress). */
typedef void (*mcur_log_fn)(const char* line, void* user);

MCUR_API const char* mcur_version(void);
MCUR_API const char* mcur_last_error(void);
MCUR_API const char* mcur_status_name(mcur_status status);

/* ---- configuration ---- */
MCUR_API mcur_status mcur_config_load(const char* path, mcur_config** out);
MCUR_API mcur_status mcur_config_parse(const char* text, mcur_config** out);
MCUR_API mcur_status mcur_config_preset(const char* name, mcur_config** out);
MCUR_API mcur_status mcur_config_clone(const mcur_config* config, mcur_config** out);
/* Sets the data, teacher and student seeds. */
MCUR_API mcur_status mcur_config_set_seed(mcur_config* config, uint64_t seed);
MCUR_API mcur_status mcur_config_set_scenarios(mcur_config* config, const char* const* scenarios, size_t count);
MCUR_API mcur_status mcur_config_set_eval_seeds(mcur_config* config, const uint64_t* seeds, size_t count);
MCUR_API mcur_status mcur_config_set_seeds(mcur_config* config, const uint64_t* seeds, size_t count);
MCUR_API mcur_status mcur_config_set_jobs(mcur_config* config, int jobs);
/* Disables one student loss term: "L_CL", "L_Uncer", "L_Logits" or "L_MSE". */
MCUR_API mcur_status mcur_config_ablate(mcur_config* config, const char* key);
MCUR_API mcur_status mcur_config_seed_count(const mcur_config* config, size_t* out);
MCUR_API mcur_status mcur_config_seed_at(const mcur_config* config, size_t index, uint64_t* out);
MCUR_API mcur_status mcur_config_output_dir(const mcur_config* config, const char** out);
MCUR_API mcur_status mcur_config_hash(const mcur_config* config, const char** out);
MCUR_API mcur_status mcur_config_json(const mcur_config* config, const char** out);
MCUR_API void mcur_config_free(mcur_config* config);

/* ---- datasets ---- */
MCUR_API mcur_status mcur_dataset_generate(const mcur_config* config, mcur_dataset** out);
/* `config` may be NULL; when given, its hash is recorded in the manifest. */
MCUR_API mcur_status mcur_dataset_save(const mcur_dataset* dataset, const char* dir, const mcur_config* config);
MCUR_API mcur_status mcur_dataset_load(const char* dir, mcur_dataset** out);
MCUR_API mcur_status mcur_dataset_info(const mcur_dataset* dataset, size_t* n_train, size_t* n_test, int* modalities);
MCUR_API void mcur_dataset_free(mcur_dataset* dataset);

/* ---- training and checkpoints ---- */
MCUR_API mcur_status mcur_train_teacher(const mcur_config* config, const mcur_dataset* dataset, mcur_log_fn log,
                                        void* user, mcur_model** out);
MCUR_API mcur_status mcur_train_student(const mcur_config* config, const mcur_dataset* dataset,
                                        const mcur_model* teacher, mcur_log_fn log, void* user, mcur_model** out);
MCUR_API mcur_status mcur_model_save(const mcur_model* model, const char* dir, const mcur_config* config);
MCUR_API mcur_status mcur_model_load(const char* dir, mcur_model** out);
MCUR_API mcur_status mcur_model_hash(const mcur_model* model, const char** out);
/* "teacher" or "student". */
MCUR_API mcur_status mcur_model_role(const mcur_model* model, const char** out);
MCUR_API void mcur_model_free(mcur_model* model);

/* ---- evaluation ---- */
/* Runs the configured scenarios and seeds on the test split. Scenario-level
 * failures are recorded in the results, not returned as errors. */
MCUR_API mcur_status mcur_evaluate(const mcur_config* config, const mcur_model* model, const mcur_dataset* dataset,
                                   mcur_results** out);
MCUR_API mcur_status mcur_results_csv(const mcur_results* results, const char** out);
MCUR_API mcur_status mcur_results_json(const mcur_results* results, const char** out);
MCUR_API mcur_status mcur_results_plot_svg(const mcur_results* results, const char** out);
MCUR_API mcur_status mcur_results_any_failure(const mcur_results* results, int* out);
MCUR_API mcur_status mcur_results_average(const mcur_results* results, double* acc, double* f1, double* brier,
                                          double* nll);
MCUR_API void mcur_results_free(mcur_results* results);

/* ---- verification ---- */
/* Runs the invariant checks (and, when `experiments` is non-zero, the
 * multi-seed directional experiments on `config`, or the default preset when
 * NULL). Progress lines go to `log`. */
MCUR_API mcur_status mcur_verify(int experiments, const mcur_config* config, mcur_log_fn log, void* user,
                                 mcur_report** out);
MCUR_API mcur_status mcur_report_passed(const mcur_report* report, int* out);
MCUR_API mcur_status mcur_report_json(const mcur_report* report, const char** out);
MCUR_API void mcur_report_free(mcur_report* report);

#ifdef __cplusplus
}
#endif

#endif /* MCUR_MCUR_H_ */
