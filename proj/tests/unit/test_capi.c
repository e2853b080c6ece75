/* Copyright 2026 The MCUR Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Exercises the C interface from C. */

#include "mcur/mcur.h"

#include <stdio.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static int count_lines(const char* s) {
  int n = 0;
  for (; *s; ++s) n += *s == '\n';
  return n;
}

static void count_log(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

int main(void) {
  mcur_config* bad = NULL;
  EXPECT(mcur_config_parse("{\"data\": {\"num_classes\": 1}}", &bad) == MCUR_ERR_CONFIG);
  EXPECT(strstr(mcur_last_error(), "data.num_classes") != NULL);
  EXPECT(bad == NULL);
  EXPECT(mcur_config_preset(NULL, &bad) == MCUR_ERR_NULL_POINTER);
  EXPECT(strcmp(mcur_status_name(MCUR_ERR_IO), "io_error") == 0);

  mcur_config* cfg = NULL;
  EXPECT(mcur_config_parse("{\"extends\": \"smoke\", \"data\": {\"n_train\": 48, \"n_test\": 24},"
                           " \"teacher\": {\"epochs\": 1}, \"student\": {\"epochs\": 1}}",
                           &cfg) == MCUR_OK);
  if (cfg == NULL) return 1;
  EXPECT(mcur_config_ablate(cfg, "L_Nothing") == MCUR_ERR_INVALID_ARGUMENT);
  EXPECT(mcur_config_set_jobs(cfg, 0) == MCUR_ERR_INVALID_ARGUMENT);
  const char* hash = NULL;
  EXPECT(mcur_config_hash(cfg, &hash) == MCUR_OK && strlen(hash) == 16);

  mcur_dataset* data = NULL;
  EXPECT(mcur_dataset_generate(cfg, &data) == MCUR_OK);
  size_t n_train = 0, n_test = 0;
  int m = 0;
  EXPECT(mcur_dataset_info(data, &n_train, &n_test, &m) == MCUR_OK);
  EXPECT(n_train == 48 && n_test == 24 && m == 3);

  int lines = 0;
  mcur_model* teacher = NULL;
  mcur_model* student = NULL;
  EXPECT(mcur_train_teacher(cfg, data, count_log, &lines, &teacher) == MCUR_OK);
  EXPECT(lines > 0);
  EXPECT(mcur_train_student(cfg, data, teacher, NULL, NULL, &student) == MCUR_OK);
  mcur_model* wrong = NULL;
  EXPECT(mcur_train_student(cfg, data, student, NULL, NULL, &wrong) == MCUR_ERR_INCOMPATIBLE);
  const char* role = NULL;
  EXPECT(mcur_model_role(student, &role) == MCUR_OK && strcmp(role, "student") == 0);

  mcur_results* results = NULL;
  EXPECT(mcur_evaluate(cfg, student, data, &results) == MCUR_OK);
  const char* csv = NULL;
  EXPECT(mcur_results_csv(results, &csv) == MCUR_OK);
  EXPECT(count_lines(csv) == 1 + 14 + 1);
  const char* summary = NULL;
  EXPECT(mcur_results_json(results, &summary) == MCUR_OK);
  EXPECT(strstr(summary, hash) != NULL);
  int failed = 1;
  EXPECT(mcur_results_any_failure(results, &failed) == MCUR_OK && failed == 0);

  mcur_model* missing = NULL;
  EXPECT(mcur_model_load("/nonexistent/mcur/checkpoint", &missing) == MCUR_ERR_IO);
  EXPECT(missing == NULL);

  mcur_results_free(results);
  mcur_model_free(student);
  mcur_model_free(teacher);
  mcur_dataset_free(data);
  mcur_config_free(cfg);
  mcur_config_free(NULL);

  if (failures != 0) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("capi: ok\n");
  return 0;
}
