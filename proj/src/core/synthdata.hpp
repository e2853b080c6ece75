// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multimodal datasets and the fixed / random missing-modality
// protocols. Raw tensors stay intact when a modality is dropped; only the
// mask changes, and the backbone zero-fills masked inputs.

#pragma once

#include "datamodel.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mcur {

struct SynthConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 600;
  int modalities = 3;
  TaskKind task = TaskKind::classification;
  /// K for classification; ignored for regression (labels lie in [-3, 3]).
  int num_classes = 4;
  std::vector<double> informativeness{1.0, 0.6, 0.45};
  std::vector<double> noise{1.0, 1.0, 1.0};
  std::vector<int> seq_lens{8, 10, 12};
  std::vector<int> feature_dims{12, 8, 10};
  /// Intensity of extra Gaussian noise added after generation (0 disables).
  double noise_intensity = 0.0;
  std::uint64_t seed = 5576;

  /// Throws InvalidArgument on N = 0, K < 2 (classification), negative
  /// weights, or per-modality vectors whose length differs from m.
  void validate() const;
};

struct Dataset {
  SynthConfig config;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct MissingProtocol {
  enum class Kind { fixed, random };
  Kind kind = Kind::fixed;
  std::optional<CombinationId> fixed_pattern;
  std::optional<double> target_mr;
  std::uint64_t seed = 0;

  static MissingProtocol fixed(CombinationId pattern);
  static MissingProtocol random(double target_mr, std::uint64_t seed);
};

/// Training split of `config` (N = n_train samples, complete masks).
[[nodiscard]] std::vector<Sample> generate(const SynthConfig& config);
/// Both splits. The per-modality linear maps are shared; sample draws use
/// independent streams per split.
[[nodiscard]] Dataset generate_dataset(const SynthConfig& config);

/// Sets every mask to `pattern`.
[[nodiscard]] std::vector<Sample> apply_fixed(std::vector<Sample> samples, CombinationId pattern);

/// Drops exactly round(target_mr * N * m) modality slots, uniformly at random
/// among slots whose removal leaves the sample with at least one modality.
/// Input masks are reset to complete first. Throws when target_mr is outside
/// (0, (m-1)/m].
[[nodiscard]] std::vector<Sample> apply_random(std::vector<Sample> samples, double target_mr, std::uint64_t seed);

[[nodiscard]] std::vector<Sample> apply_protocol(std::vector<Sample> samples, const MissingProtocol& protocol);

/// x <- x + intensity * N(0, I) on every raw tensor.
[[nodiscard]] std::vector<Sample> add_noise(std::vector<Sample> samples, double intensity, std::uint64_t seed);

}  // namespace mcur
