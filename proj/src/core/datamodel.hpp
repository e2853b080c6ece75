// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Core value types shared by every module plus availability-mask arithmetic.
// Modality index convention for m = 3: 0 = language (L), 1 = audio (A),
// 2 = visual (V).

#pragma once

#include "autodiff.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mcur {

using ad::Matrix;

enum class TaskKind { classification, regression };

[[nodiscard]] std::string to_string(TaskKind kind);
[[nodiscard]] TaskKind task_kind_from_string(const std::string& s);

/// Per-modality raw features X_p of shape (t_p, d_p).
struct ModalityTensor {
  int modality = 0;
  Matrix data;

  [[nodiscard]] int seq_len() const { return static_cast<int>(data.rows()); }
  [[nodiscard]] int feature_dim() const { return static_cast<int>(data.cols()); }
  /// Throws unless t_p, d_p >= 1 and every entry is finite.
  void validate() const;
};

/// Availability bits, one per modality. At least one bit is set.
class AvailabilityMask {
 public:
  AvailabilityMask() = default;
  /// Throws on entries outside {0,1} or an all-zero vector.
  explicit AvailabilityMask(std::vector<std::uint8_t> bits);

  static AvailabilityMask complete(int m);
  /// Inverse of combination_id(); throws when id is outside [1, 2^m - 1].
  static AvailabilityMask from_combination(std::uint32_t id, int m);

  [[nodiscard]] int modalities() const { return static_cast<int>(bits_.size()); }
  [[nodiscard]] bool available(int p) const { return bits_.at(static_cast<std::size_t>(p)) != 0; }
  /// a_i: number of available modalities.
  [[nodiscard]] int count() const;
  [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const AvailabilityMask&, const AvailabilityMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// c_i: bit pattern of the mask with modality 0 in the least significant bit.
using CombinationId = std::uint32_t;

[[nodiscard]] CombinationId combination_id(const AvailabilityMask& mask);
/// Largest valid id, 2^m - 1.
[[nodiscard]] CombinationId full_combination(int m);
/// Display form such as "L,A" for m = 3, or "M0,M3" for other m.
[[nodiscard]] std::string combination_label(CombinationId id, int m);
/// Parses "L,A"-style labels (or modality indices "0,1"); throws on unknown names.
[[nodiscard]] CombinationId combination_from_label(const std::string& label, int m);

struct Label {
  TaskKind kind = TaskKind::classification;
  int class_index = 0;
  double value = 0.0;
  int num_classes = 0;

  static Label classification(int class_index, int num_classes);
  static Label regression(double value);
};

struct Sample {
  std::vector<ModalityTensor> modalities;
  AvailabilityMask mask;
  Label label;
  std::int64_t sample_id = 0;
};

/// A non-owning view of B >= 1 samples sharing m, K and label kind.
struct Batch {
  std::vector<const Sample*> samples;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  /// Throws on an empty batch or samples that disagree on m, K or task kind.
  void validate() const;
};

/// MR = 1 - (sum_i a_i) / (N * m). Throws on an empty list or an invalid mask.
[[nodiscard]] double compute_mr(std::span<const AvailabilityMask> masks, int m);
[[nodiscard]] double compute_mr(std::span<const Sample> samples);

}  // namespace mcur
