// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Every per-sample term is a (B, 1) column on the tape;
// the double-valued overloads evaluate the same code on constants.
//
// Combination/category contrastive loss, per anchor i with similarities
// s_ij = <x_i, x_j> / tau:
//   log p(c|x)   = LSE_{M_i} s - LSE_{all} s
//   log p(k|c,x) = LSE_{N_i} s - LSE_{M_i} s
//   log p(c|x,k) = LSE_{N_i} s - LSE_{S_i} s
//   loss_i = -(log p(c|x) + mu1 log p(k|c,x) - mu2 log p(c|x,k))
// M_i: same combination, S_i: same class, N_i = M_i ∩ S_i.

#pragma once

#include "autodiff.hpp"
#include "backbone.hpp"
#include "datamodel.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace mcur {

struct ContrastiveConfig {
  double temperature = 0.2;
  double mu1 = 1.0;
  double mu2 = 1.0;
  bool normalize_embeddings = true;
  bool include_self = true;

  void validate() const;
};

struct ContrastiveIndexSets {
  std::vector<std::vector<int>> same_combination;  // M_i
  std::vector<std::vector<int>> same_both;         // N_i
  std::vector<std::vector<int>> same_class;        // S_i
  ad::BoolMatrix combination_mask;
  ad::BoolMatrix both_mask;
  ad::BoolMatrix class_mask;

  [[nodiscard]] std::size_t size() const { return same_combination.size(); }
  /// False when include_self=false left one of the anchor's sets empty.
  [[nodiscard]] bool usable(std::size_t i) const;
};

[[nodiscard]] ContrastiveIndexSets build_index_sets(std::span<const CombinationId> combinations,
                                                    std::span<const int> classes, bool include_self);

/// Discrete contrastive key: the class index, or the sign bucket
/// {0: negative, 1: non-negative} for regression labels.
[[nodiscard]] int contrastive_class(const Label& label);

struct SugrConfig {
  double alpha = 0.2;
  bool detach_uncertainty_weight = false;
  /// Ablation switches: false replaces the uncertainty weight by 1 / drops
  /// the logits-distillation term.
  bool use_uncertainty = true;
  bool use_logits = true;

  void validate() const;
};

struct LossWeights {
  double gamma = 0.1;
  double zeta = 1.0;
  double beta = 0.01;
  /// Appendix form (true) adds beta * KL to the student total; false gives the
  /// main-text total without it.
  bool include_vib = true;
  bool use_mse = true;

  void validate() const;
};

struct LossReport {
  double cl = 0.0;
  double mse = 0.0;
  double uncer = 0.0;
  double logits = 0.0;
  double task = 0.0;
  double sugr = 0.0;
  double vib = 0.0;
  double all = 0.0;
  /// Every contrastive anchor was skipped; cl is 0 by definition.
  bool cl_degenerate = false;
  std::optional<std::vector<double>> per_sample_uncer;
  std::optional<std::vector<double>> per_sample_task;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws NumericalError when any scalar is non-finite.
  void validate() const;
};

// ---- contrastive terms -------------------------------------------------------

[[nodiscard]] ad::Var similarity_logits(ad::Var embeddings, const ContrastiveConfig& cfg);
[[nodiscard]] Matrix similarity_logits(const Matrix& embeddings, const ContrastiveConfig& cfg);

/// Probabilities for anchor i from a similarity matrix (log-space internally).
/// Throw InvalidArgument when the anchor's numerator or denominator set is empty.
[[nodiscard]] double p_comb_given_x(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets);
[[nodiscard]] double p_class_given_comb_x(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets);
[[nodiscard]] double p_comb_given_x_class(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets);

struct ContrastiveInfo {
  std::size_t used_anchors = 0;
  bool degenerate = false;
  std::vector<double> per_anchor;  // NaN for skipped anchors
};

[[nodiscard]] ad::Var mcbcl_loss(ad::Var embeddings, std::span<const CombinationId> combinations,
                                 std::span<const int> classes, const ContrastiveConfig& cfg,
                                 ContrastiveInfo* info = nullptr);
[[nodiscard]] double mcbcl_loss(const Matrix& embeddings, std::span<const CombinationId> combinations,
                                std::span<const int> classes, const ContrastiveConfig& cfg,
                                ContrastiveInfo* info = nullptr);

// ---- per-sample terms (B, 1) -------------------------------------------------

/// ||E_s - E_t||^2 per row; the teacher side is a constant.
[[nodiscard]] ad::Var rep_mse(ad::Var student, const Matrix& teacher);
/// Entropy of softmax(logits) for classification, (y - y_hat)^2 for regression.
[[nodiscard]] ad::Var prediction_uncertainty(ad::Var logits, std::span<const Label> labels, TaskKind kind);
[[nodiscard]] ad::Var uncertainty_gap(ad::Var teacher_h, ad::Var student_h);
/// Regression: (y_s - y_t)^2. Classification: alpha KL(b_t || b_s) + (1 - alpha) KL(q_t || q_s)
/// with b the target/non-target binary split and q the renormalized
/// non-target distribution.
[[nodiscard]] ad::Var logits_distill(ad::Var student_logits, const Matrix& teacher_logits, std::span<const Label> labels,
                                     TaskKind kind, double alpha);
/// Cross-entropy (classification) or absolute error (regression).
[[nodiscard]] ad::Var task_loss(ad::Var logits, std::span<const Label> labels, TaskKind kind);
/// mean_i U_i * (T_i + L_i). `detach_weight` blocks the gradient through U.
[[nodiscard]] ad::Var sugr_loss(ad::Var uncertainty, ad::Var task, ad::Var logits, bool detach_weight);

// double-valued conveniences for single rows
[[nodiscard]] double prediction_uncertainty(const Eigen::RowVectorXd& logits);
[[nodiscard]] double regression_uncertainty(double prediction, double label);
[[nodiscard]] double uncertainty_gap(double teacher_h, double student_h);
[[nodiscard]] double dkd(const Eigen::RowVectorXd& student_logits, const Eigen::RowVectorXd& teacher_logits, int target,
                         double alpha);
[[nodiscard]] double regression_distill(double student, double teacher);
[[nodiscard]] double cross_entropy(const Eigen::RowVectorXd& logits, int target);
[[nodiscard]] double rep_mse(const Eigen::RowVectorXd& student, const Eigen::RowVectorXd& teacher);
[[nodiscard]] double sugr_loss(std::span<const double> uncertainty, std::span<const double> task,
                               std::span<const double> logits);

// ---- totals ------------------------------------------------------------------

struct StudentComponents {
  double cl = 0.0;
  double vib = 0.0;
  double mse = 0.0;
  double sugr = 0.0;
};

/// gamma * L_CL + beta * L_VIB + L_MSE + zeta * L_Sugr (L_VIB term only in the
/// appendix form; L_MSE only when enabled).
[[nodiscard]] double total_student_loss(const StudentComponents& c, const LossWeights& w);
/// L_TASK + beta * KL.
[[nodiscard]] double total_teacher_loss(double task, double kl, double beta);

// ---- full objectives on a forward pass -------------------------------------

struct TeacherTargets {
  Matrix embedding;  // (B, D)
  Matrix logits;     // (B, K)
};

struct StudentObjective {
  ContrastiveConfig contrastive;
  SugrConfig sugr;
  LossWeights weights;
};

struct ObjectiveResult {
  ad::Var total;
  LossReport report;
};

[[nodiscard]] ObjectiveResult student_objective(const FusionOutput& student, const TeacherTargets& teacher,
                                                std::span<const Label> labels,
                                                std::span<const CombinationId> combinations,
                                                const StudentObjective& objective);
[[nodiscard]] ObjectiveResult teacher_objective(const FusionOutput& out, std::span<const Label> labels, double beta);

}  // namespace mcur
