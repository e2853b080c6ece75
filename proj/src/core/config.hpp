// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: strict JSON with an "extends" preset mechanism.
// Unknown keys are rejected; every error names the offending field.

#pragma once

#include "backbone.hpp"
#include "eval.hpp"
#include "synthdata.hpp"
#include "training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mcur {

inline constexpr const char* kVersion = "0.1.0";

struct EvalConfig {
  /// Scenario strings ("fixed:L,A", "random:0.3", "canonical"); empty = canonical.
  std::vector<std::string> scenarios;
  /// Seeds for the random-missing masks.
  std::vector<std::uint64_t> seeds{0, 1, 2};
  ZeroLabelPolicy zero_policy = ZeroLabelPolicy::exclude;
};

struct ExperimentConfig {
  SynthConfig data;
  BackboneConfig model;
  TrainConfig teacher;
  TrainConfig student;
  EvalConfig eval;
  /// Training seeds for multi-seed commands (ablate). Each seed replaces
  /// data, teacher and student seeds.
  std::vector<std::uint64_t> seeds{5576, 5577, 5578};
  std::string output_dir = "runs/default";
  int jobs = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  /// The same experiment with every seed derived from `seed`.
  [[nodiscard]] ExperimentConfig with_seed(std::uint64_t seed) const;
};

[[nodiscard]] nlohmann::json to_json(const SynthConfig& c);
[[nodiscard]] nlohmann::json to_json(const BackboneConfig& c);
[[nodiscard]] nlohmann::json to_json(const TrainConfig& c);
[[nodiscard]] nlohmann::json to_json(const EvalConfig& c);
[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& c);

[[nodiscard]] SynthConfig synth_config_from_json(const nlohmann::json& j, const std::string& where = "data");
[[nodiscard]] BackboneConfig backbone_config_from_json(const nlohmann::json& j, const std::string& where = "model");
[[nodiscard]] TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where);

/// Names accepted by "extends".
[[nodiscard]] std::vector<std::string> preset_names();
/// Fully resolved JSON of a preset; throws ConfigError on an unknown name.
[[nodiscard]] nlohmann::json preset_json(const std::string& name);
[[nodiscard]] ExperimentConfig preset(const std::string& name);

/// Parses config text. "extends" loads a preset and the document is merged on
/// top of it. Syntax errors report line and column.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
[[nodiscard]] std::string config_hash(const ExperimentConfig& c);
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

}  // namespace mcur
