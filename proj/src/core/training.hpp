// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "backbone.hpp"
#include "datamodel.hpp"
#include "losses.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mcur {

enum class OptimizerKind { adamw, adam };

[[nodiscard]] std::string to_string(OptimizerKind kind);
[[nodiscard]] OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double weight_decay = 0.0;
  std::uint64_t seed = 5576;
  LossWeights weights;
  ContrastiveConfig contrastive;
  SugrConfig sugr;
  /// Indexed by combination id; entry 0 (empty combination) must be 0.
  /// Empty means uniform over the 2^m - 1 non-empty combinations.
  std::vector<double> pattern_distribution;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 5.0;
  /// Feed the teacher the student's masked inputs instead of full modalities.
  bool teacher_sees_student_mask = false;

  void validate(int modalities) const;
  /// The configured distribution, or the uniform one when empty.
  [[nodiscard]] std::vector<double> resolved_distribution(int modalities) const;
};

/// Uniform 1/(2^m - 1) over every non-empty combination, indexed by id.
[[nodiscard]] std::vector<double> uniform_pattern_distribution(int modalities);

class PatternSampler {
 public:
  /// Throws when the distribution has the wrong length, negative entries,
  /// mass on the empty combination, or does not sum to 1.
  PatternSampler(std::vector<double> distribution, int modalities);
  [[nodiscard]] CombinationId operator()(Rng& rng);

 private:
  std::discrete_distribution<std::uint32_t> dist_;
};

[[nodiscard]] CombinationId sample_pattern(const std::vector<double>& distribution, int modalities, Rng& rng);

enum class AblationKey { cl, uncer, logits, mse };

[[nodiscard]] AblationKey ablation_from_string(const std::string& s);
[[nodiscard]] std::string to_string(AblationKey key);
/// Returns `config` with the named term disabled.
[[nodiscard]] TrainConfig ablate(TrainConfig config, AblationKey drop);

/// Adam, or AdamW with decoupled weight decay.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double weight_decay);
  void step(std::vector<ad::Parameter>& params);
  [[nodiscard]] long long steps() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  double wd_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// Scales gradients so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(std::vector<ad::Parameter>& params, double max_norm);

struct Checkpoint {
  Backbone model;
  nlohmann::json config_echo;
  std::string rng_state;
  int epoch = 0;

  [[nodiscard]] Role role() const { return model.role(); }
};

using LogSink = std::function<void(const nlohmann::json&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossReport> epoch_means;
};

/// Teacher pre-training on complete modalities with L_TASK + beta * KL.
[[nodiscard]] TrainResult train_teacher(const std::vector<Sample>& data, const BackboneConfig& backbone,
                                        const TrainConfig& config, const LogSink& log = {});

/// Student distillation. The teacher is read-only; masks are resampled per
/// sample per batch from config.pattern_distribution.
[[nodiscard]] TrainResult train_student(const std::vector<Sample>& data, const Checkpoint& teacher,
                                        const BackboneConfig& backbone, const TrainConfig& config,
                                        const LogSink& log = {});

/// Shape of the backbone a dataset needs.
[[nodiscard]] ModelShape model_shape_for(const std::vector<Sample>& data);

/// Deterministic (mean-mode) logits for `samples`, (N, K).
[[nodiscard]] Matrix predict(Backbone& model, const std::vector<Sample>& samples, std::size_t chunk = 64);
/// Deterministic fused embeddings E, (N, D).
[[nodiscard]] Matrix embed(Backbone& model, const std::vector<Sample>& samples, std::size_t chunk = 64);

}  // namespace mcur
