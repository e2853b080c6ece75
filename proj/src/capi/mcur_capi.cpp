// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcur/mcur.h"

#include "checks.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "synthdata.hpp"
#include "training.hpp"

#include <json.hpp>

#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <utility>
#include <vector>

using nlohmann::json;

struct mcur_config {
  mcur::ExperimentConfig config;
  // Backing storage for strings handed out by the getters.
  mutable std::string output_dir;
  mutable std::string hash;
  mutable std::string text;
};

struct mcur_dataset {
  mcur::Dataset dataset;
};

struct mcur_model {
  mcur::Checkpoint checkpoint;
  std::string hash;
  std::string role;
};

struct mcur_results {
  mcur::SuiteResult result;
  mcur::Provenance provenance;
  std::string csv;
  std::string json_text;
  std::string svg;
};

struct mcur_report {
  std::vector<mcur::verify::CheckResult> checks;
  json extra;
  std::string json_text;
  bool passed = true;
};

namespace {

thread_local std::string g_last_error;

mcur_status fail(mcur_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

/// Runs `body`, translating the exception hierarchy into status codes.
template <typename F>
mcur_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MCUR_OK;
  } catch (const mcur::ConfigError& e) {
    return fail(MCUR_ERR_CONFIG, e.what());
  } catch (const mcur::InvalidArgument& e) {
    return fail(MCUR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const mcur::IoError& e) {
    return fail(MCUR_ERR_IO, e.what());
  } catch (const mcur::IncompatibleError& e) {
    return fail(MCUR_ERR_INCOMPATIBLE, e.what());
  } catch (const mcur::NumericalError& e) {
    return fail(MCUR_ERR_NUMERICAL, e.what());
  } catch (const mcur::MetricError& e) {
    return fail(MCUR_ERR_METRIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MCUR_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(MCUR_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(MCUR_ERR_RUNTIME, "unknown error");
  }
}

#define MCUR_REQUIRE(ptr)                                              \
  do {                                                                 \
    if ((ptr) == nullptr) return fail(MCUR_ERR_NULL_POINTER, #ptr " is null"); \
  } while (0)

mcur_config* wrap(mcur::ExperimentConfig c) {
  return new mcur_config{std::move(c), {}, {}, {}};
}

/// Validates after a mutation; the handle keeps its previous state on failure.
template <typename F>
mcur_status mutate(mcur_config* config, F&& change) {
  MCUR_REQUIRE(config);
  return guarded([&] {
    mcur::ExperimentConfig next = config->config;
    change(next);
    next.validate();
    config->config = std::move(next);
  });
}

json provenance_of(const mcur_config* config) {
  json p{{"version", mcur::kVersion}};
  if (config != nullptr) p["config_hash"] = mcur::config_hash(config->config);
  return p;
}

mcur::LogSink sink(mcur_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const json& line) { log(line.dump().c_str(), user); };
}

mcur_model* wrap(mcur::Checkpoint checkpoint) {
  auto* h = new mcur_model{std::move(checkpoint), {}, {}};
  h->hash = mcur::parameter_hash(h->checkpoint.model);
  h->role = h->checkpoint.role() == mcur::Role::teacher ? "teacher" : "student";
  return h;
}

}  // namespace

extern "C" {

const char* mcur_version(void) { return mcur::kVersion; }

const char* mcur_last_error(void) { return g_last_error.c_str(); }

const char* mcur_status_name(mcur_status status) {
  switch (status) {
    case MCUR_OK: return "ok";
    case MCUR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MCUR_ERR_CONFIG: return "config_error";
    case MCUR_ERR_IO: return "io_error";
    case MCUR_ERR_INCOMPATIBLE: return "incompatible";
    case MCUR_ERR_NUMERICAL: return "numerical_error";
    case MCUR_ERR_METRIC: return "metric_error";
    case MCUR_ERR_RUNTIME: return "runtime_error";
    case MCUR_ERR_NULL_POINTER: return "null_pointer";
  }
  return "unknown";
}

// ---- configuration ------------------------------------------------------------------

mcur_status mcur_config_load(const char* path, mcur_config** out) {
  MCUR_REQUIRE(path);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = wrap(mcur::load_config(path)); });
}

mcur_status mcur_config_parse(const char* text, mcur_config** out) {
  MCUR_REQUIRE(text);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = wrap(mcur::parse_config(text)); });
}

mcur_status mcur_config_preset(const char* name, mcur_config** out) {
  MCUR_REQUIRE(name);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = wrap(mcur::preset(name)); });
}

mcur_status mcur_config_clone(const mcur_config* config, mcur_config** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = wrap(config->config); });
}

mcur_status mcur_config_set_seed(mcur_config* config, uint64_t seed) {
  return mutate(config, [&](mcur::ExperimentConfig& c) { c = c.with_seed(seed); });
}

mcur_status mcur_config_set_scenarios(mcur_config* config, const char* const* scenarios, size_t count) {
  if (count > 0) MCUR_REQUIRE(scenarios);
  return mutate(config, [&](mcur::ExperimentConfig& c) {
    c.eval.scenarios.clear();
    for (size_t i = 0; i < count; ++i) {
      if (scenarios[i] == nullptr) throw mcur::InvalidArgument("scenario string is null");
      c.eval.scenarios.emplace_back(scenarios[i]);
    }
  });
}

mcur_status mcur_config_set_eval_seeds(mcur_config* config, const uint64_t* seeds, size_t count) {
  if (count == 0) return fail(MCUR_ERR_INVALID_ARGUMENT, "eval.seeds: at least one seed is required");
  MCUR_REQUIRE(seeds);
  return mutate(config, [&](mcur::ExperimentConfig& c) { c.eval.seeds.assign(seeds, seeds + count); });
}

mcur_status mcur_config_set_seeds(mcur_config* config, const uint64_t* seeds, size_t count) {
  if (count == 0) return fail(MCUR_ERR_INVALID_ARGUMENT, "seeds: at least one seed is required");
  MCUR_REQUIRE(seeds);
  return mutate(config, [&](mcur::ExperimentConfig& c) { c.seeds.assign(seeds, seeds + count); });
}

mcur_status mcur_config_set_jobs(mcur_config* config, int jobs) {
  if (jobs < 1) return fail(MCUR_ERR_INVALID_ARGUMENT, "jobs: must be >= 1");
  return mutate(config, [&](mcur::ExperimentConfig& c) { c.jobs = jobs; });
}

mcur_status mcur_config_ablate(mcur_config* config, const char* key) {
  MCUR_REQUIRE(key);
  return mutate(config, [&](mcur::ExperimentConfig& c) {
    c.student = mcur::ablate(c.student, mcur::ablation_from_string(key));
  });
}

mcur_status mcur_config_seed_count(const mcur_config* config, size_t* out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  *out = config->config.seeds.size();
  return MCUR_OK;
}

mcur_status mcur_config_seed_at(const mcur_config* config, size_t index, uint64_t* out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  if (index >= config->config.seeds.size()) return fail(MCUR_ERR_INVALID_ARGUMENT, "seed index out of range");
  *out = config->config.seeds[index];
  return MCUR_OK;
}

mcur_status mcur_config_output_dir(const mcur_config* config, const char** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  config->output_dir = config->config.output_dir;
  *out = config->output_dir.c_str();
  return MCUR_OK;
}

mcur_status mcur_config_hash(const mcur_config* config, const char** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  return guarded([&] {
    config->hash = mcur::config_hash(config->config);
    *out = config->hash.c_str();
  });
}

mcur_status mcur_config_json(const mcur_config* config, const char** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  return guarded([&] {
    config->text = mcur::to_json(config->config).dump(2);
    *out = config->text.c_str();
  });
}

void mcur_config_free(mcur_config* config) { delete config; }

// ---- datasets -----------------------------------------------------------------------

mcur_status mcur_dataset_generate(const mcur_config* config, mcur_dataset** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = new mcur_dataset{mcur::generate_dataset(config->config.data)}; });
}

mcur_status mcur_dataset_save(const mcur_dataset* dataset, const char* dir, const mcur_config* config) {
  MCUR_REQUIRE(dataset);
  MCUR_REQUIRE(dir);
  return guarded([&] { mcur::save_dataset(dataset->dataset, dir, provenance_of(config)); });
}

mcur_status mcur_dataset_load(const char* dir, mcur_dataset** out) {
  MCUR_REQUIRE(dir);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = new mcur_dataset{mcur::load_dataset(dir)}; });
}

mcur_status mcur_dataset_info(const mcur_dataset* dataset, size_t* n_train, size_t* n_test, int* modalities) {
  MCUR_REQUIRE(dataset);
  if (n_train != nullptr) *n_train = dataset->dataset.train.size();
  if (n_test != nullptr) *n_test = dataset->dataset.test.size();
  if (modalities != nullptr) *modalities = dataset->dataset.config.modalities;
  return MCUR_OK;
}

void mcur_dataset_free(mcur_dataset* dataset) { delete dataset; }

// ---- training and checkpoints -------------------------------------------------------

mcur_status mcur_train_teacher(const mcur_config* config, const mcur_dataset* dataset, mcur_log_fn log, void* user,
                               mcur_model** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(dataset);
  MCUR_REQUIRE(out);
  return guarded([&] {
    auto r = mcur::train_teacher(dataset->dataset.train, config->config.model, config->config.teacher, sink(log, user));
    *out = wrap(std::move(r.checkpoint));
  });
}

mcur_status mcur_train_student(const mcur_config* config, const mcur_dataset* dataset, const mcur_model* teacher,
                               mcur_log_fn log, void* user, mcur_model** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(dataset);
  MCUR_REQUIRE(teacher);
  MCUR_REQUIRE(out);
  return guarded([&] {
    if (teacher->checkpoint.role() != mcur::Role::teacher) {
      throw mcur::IncompatibleError("checkpoint role is student; a teacher checkpoint is required");
    }
    auto r = mcur::train_student(dataset->dataset.train, teacher->checkpoint, config->config.model,
                                 config->config.student, sink(log, user));
    *out = wrap(std::move(r.checkpoint));
  });
}

mcur_status mcur_model_save(const mcur_model* model, const char* dir, const mcur_config* config) {
  MCUR_REQUIRE(model);
  MCUR_REQUIRE(dir);
  return guarded([&] { mcur::save_checkpoint(model->checkpoint, dir, provenance_of(config)); });
}

mcur_status mcur_model_load(const char* dir, mcur_model** out) {
  MCUR_REQUIRE(dir);
  MCUR_REQUIRE(out);
  return guarded([&] { *out = wrap(mcur::load_checkpoint(dir)); });
}

mcur_status mcur_model_hash(const mcur_model* model, const char** out) {
  MCUR_REQUIRE(model);
  MCUR_REQUIRE(out);
  *out = model->hash.c_str();
  return MCUR_OK;
}

mcur_status mcur_model_role(const mcur_model* model, const char** out) {
  MCUR_REQUIRE(model);
  MCUR_REQUIRE(out);
  *out = model->role.c_str();
  return MCUR_OK;
}

void mcur_model_free(mcur_model* model) { delete model; }

// ---- evaluation ---------------------------------------------------------------------

mcur_status mcur_evaluate(const mcur_config* config, const mcur_model* model, const mcur_dataset* dataset,
                          mcur_results** out) {
  MCUR_REQUIRE(config);
  MCUR_REQUIRE(model);
  MCUR_REQUIRE(dataset);
  MCUR_REQUIRE(out);
  return guarded([&] {
    const auto& c = config->config;
    mcur::EvalOptions options;
    options.scenarios = mcur::parse_scenarios(c.eval.scenarios, dataset->dataset.config.modalities);
    options.seeds = c.eval.seeds;
    options.jobs = c.jobs;
    options.zero_policy = c.eval.zero_policy;
    auto h = std::make_unique<mcur_results>();
    h->result = mcur::run_suite(model->checkpoint.model, dataset->dataset.test, options);
    h->provenance = {mcur::config_hash(c), mcur::kVersion};
    h->csv = mcur::results_csv(h->result);
    json j = mcur::results_json(h->result, h->provenance);
    j["model_hash"] = model->hash;
    j["model_role"] = model->role;
    h->json_text = j.dump(2);
    h->svg = mcur::uncertainty_plot_svg(h->result);
    *out = h.release();
  });
}

mcur_status mcur_results_csv(const mcur_results* results, const char** out) {
  MCUR_REQUIRE(results);
  MCUR_REQUIRE(out);
  *out = results->csv.c_str();
  return MCUR_OK;
}

mcur_status mcur_results_json(const mcur_results* results, const char** out) {
  MCUR_REQUIRE(results);
  MCUR_REQUIRE(out);
  *out = results->json_text.c_str();
  return MCUR_OK;
}

mcur_status mcur_results_plot_svg(const mcur_results* results, const char** out) {
  MCUR_REQUIRE(results);
  MCUR_REQUIRE(out);
  *out = results->svg.c_str();
  return MCUR_OK;
}

mcur_status mcur_results_any_failure(const mcur_results* results, int* out) {
  MCUR_REQUIRE(results);
  MCUR_REQUIRE(out);
  *out = results->result.any_failure ? 1 : 0;
  return MCUR_OK;
}

mcur_status mcur_results_average(const mcur_results* results, double* acc, double* f1, double* brier, double* nll) {
  MCUR_REQUIRE(results);
  const auto& a = results->result.average;
  if (acc != nullptr) *acc = a.acc;
  if (f1 != nullptr) *f1 = a.f1;
  if (brier != nullptr) *brier = a.brier;
  if (nll != nullptr) *nll = a.nll;
  return MCUR_OK;
}

void mcur_results_free(mcur_results* results) { delete results; }

// ---- verification -------------------------------------------------------------------

mcur_status mcur_verify(int experiments, const mcur_config* config, mcur_log_fn log, void* user, mcur_report** out) {
  MCUR_REQUIRE(out);
  return guarded([&] {
    auto h = std::make_unique<mcur_report>();
    mcur::verify::Progress progress;
    if (log != nullptr) {
      progress = [log, user](const std::string& line) { log(line.c_str(), user); };
    }
    h->checks = mcur::verify::run_fast_checks(mcur::preset("smoke"), progress);
    if (experiments != 0) {
      const mcur::ExperimentConfig c = config != nullptr ? config->config : mcur::preset("default");
      auto d = mcur::verify::run_directional_checks(c, progress);
      h->checks.push_back(std::move(d.trend));
      h->checks.push_back(std::move(d.ablation));
      h->extra = std::move(d.details);
    }
    json checks = json::array();
    for (const auto& r : h->checks) {
      h->passed = h->passed && r.passed;
      checks.push_back(r.to_json());
    }
    json j{{"version", mcur::kVersion}, {"passed", h->passed}, {"checks", checks}};
    if (!h->extra.is_null()) j["experiments"] = h->extra;
    h->json_text = j.dump(2);
    *out = h.release();
  });
}

mcur_status mcur_report_passed(const mcur_report* report, int* out) {
  MCUR_REQUIRE(report);
  MCUR_REQUIRE(out);
  *out = report->passed ? 1 : 0;
  return MCUR_OK;
}

mcur_status mcur_report_json(const mcur_report* report, const char** out) {
  MCUR_REQUIRE(report);
  MCUR_REQUIRE(out);
  *out = report->json_text.c_str();
  return MCUR_OK;
}

void mcur_report_free(mcur_report* report) { delete report; }

}  // extern "C"
