// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// The acceptance checks. Each returns one PASS/FAIL record; the acceptance
// test binary and the `verify` command both print them.

#pragma once

#include "config.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mcur::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;

  [[nodiscard]] std::string line() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

using Progress = std::function<void(const std::string&)>;

CheckResult check_telescoping(int batches = 200, std::uint64_t seed = 1);
CheckResult check_oracles(std::uint64_t seed = 2);
CheckResult check_gradients(std::uint64_t seed = 3);
CheckResult check_spot_values();
CheckResult check_protocols(std::uint64_t seed = 5);
/// Smoke pipeline twice through the on-disk formats; compares CSV bytes.
CheckResult check_determinism(const ExperimentConfig& smoke);
CheckResult check_frozen_teacher(const ExperimentConfig& smoke);
CheckResult check_metric_table(const ExperimentConfig& smoke);

/// Criteria 1-6, 9, 10 on the given smoke configuration.
std::vector<CheckResult> run_fast_checks(const ExperimentConfig& smoke, const Progress& progress = {});

struct DirectionalOutcome {
  CheckResult trend;     // uncertainty rises with MR
  CheckResult ablation;  // full model beats every ablation in F1
  nlohmann::json details;
};

/// Trains teacher, full student and the four ablations for every seed in
/// `config.seeds` and evaluates them on the canonical scenarios.
DirectionalOutcome run_directional_checks(const ExperimentConfig& config, const Progress& progress = {});

/// Finite-difference statistics, exposed for unit tests.
struct GradStats {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};
/// Full student objective wrt every parameter of a tiny model.
GradStats gradcheck_student(TaskKind kind, std::uint64_t seed);
/// Loss terms wrt embedding and logit inputs directly.
GradStats gradcheck_loss_inputs(std::uint64_t seed);

/// Number of k with v[k+1] < v[k].
int count_inversions(const std::vector<double>& v);

}  // namespace mcur::verify
