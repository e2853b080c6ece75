// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared teacher/student network:
//   raw X_p --conv(k=3)+resample--> (T, D) --Perceiver(prompts)--> P_p (D)
//   [P_1..P_m] --transformer encoder--> flatten --MLP--> E_f
//   E_f --VIB--> (mu, sigma, e) --linear--> logits
// All vectors are row vectors; a linear layer computes x W + b with W of
// shape (in, out).

#pragma once

#include "autodiff.hpp"
#include "datamodel.hpp"
#include "rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcur {

enum class Role { teacher, student };
enum class VibMode { sample, mean };

[[nodiscard]] std::string to_string(Role role);
[[nodiscard]] Role role_from_string(const std::string& s);

struct BackboneConfig {
  int seq_len = 8;                  // T
  int dim = 16;                     // D
  std::vector<int> prompt_lens{2, 2, 2};
  int encoder_layers = 1;
  int fusion_layers = 2;
  int ffn_mult = 2;
  bool fusion_relu = true;
  /// Learnable per-modality token embedding before the fusion transformer.
  bool modality_embedding = true;
  /// Log-variance clamp for the VIB scale.
  double logvar_min = -10.0;
  double logvar_max = 10.0;

  void validate(int modalities) const;
};

/// Input/output shapes a backbone is built for.
struct ModelShape {
  int modalities = 3;
  std::vector<int> feature_dims;
  TaskKind task = TaskKind::classification;
  /// K for classification, 1 for regression.
  int output_size = 4;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct FusionOutput {
  std::vector<ad::Var> encoded;  // P_p per sample is stacked: m entries of (B, D)
  ad::Var fused;                 // E_f (B, D)
  ad::Var mu;                    // (B, D)
  ad::Var logvar;                // (B, D), clamped
  ad::Var sigma;                 // (B, D), positive
  ad::Var code;                  // e (B, D)
  ad::Var embedding;             // E used by the representation losses (== code)
  ad::Var logits;                // (B, K) or (B, 1)
};

// ---- building blocks -------------------------------------------------------

/// Linear resampling matrix (T, t) mapping t rows onto T rows.
[[nodiscard]] Matrix resample_matrix(int from_len, int to_len);
/// Rows [x_{t-1} | x_t | x_{t+1}] with zero padding: (t, 3d).
[[nodiscard]] Matrix conv_patches(const Matrix& x);

/// Kernel-3, stride-1, same-padded 1D convolution followed by linear
/// resampling to T rows. weight: (3 d_p, D), bias: (1, D).
[[nodiscard]] ad::Var conv_standardize(ad::Tape& tape, const Matrix& x, ad::Var weight, ad::Var bias, int seq_len);

struct PerceiverLayerVars {
  ad::Var w_q;
  ad::Var w_h;
  ad::Var w_v;
};

/// One prompt-query cross attention: Softmax(Q W_q W_h^T X^T / sqrt(D)) X W_v.
/// When `weights_out` is set it receives the (l_p, T) attention matrix.
[[nodiscard]] ad::Var cross_attention(ad::Var queries, ad::Var features, const PerceiverLayerVars& w,
                                      Matrix* weights_out = nullptr);
/// Stacked cross-attention layers fed by the prompts; returns the mean over
/// the final layer's prompt outputs, (1, D).
[[nodiscard]] ad::Var perceiver_encode(ad::Var features, ad::Var prompts, const std::vector<PerceiverLayerVars>& layers,
                                       std::vector<Matrix>* weights_out = nullptr);

struct EncoderLayerVars {
  ad::Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  ad::Var ln1_gamma, ln1_beta;
  ad::Var w_f1, b_f1, w_f2, b_f2;
  ad::Var ln2_gamma, ln2_beta;
};

struct FusionVars {
  std::optional<ad::Var> modality_embedding;  // (m, D)
  std::vector<EncoderLayerVars> layers;
  ad::Var w1, b1, w2, b2;
  bool relu = true;
};

/// Post-LN transformer encoder layer on a (tokens, D) matrix.
[[nodiscard]] ad::Var encoder_layer(ad::Var tokens, const EncoderLayerVars& w);
/// E_f = W_2 act(W_1 flatten(TE([P_1..P_m])) + b_1) + b_2, one (1, D) row.
[[nodiscard]] ad::Var fuse(const std::vector<ad::Var>& encoded, const FusionVars& w);

struct VibOutput {
  ad::Var mu;
  ad::Var logvar;
  ad::Var sigma;
  ad::Var code;
};

/// mu = E_f W_3 + b_3; log-variance = clamp(E_f W_4 + b_4); sigma = exp(logvar / 2).
/// Sample mode draws e = mu + eps * sigma with eps ~ N(0, I) from `rng`.
[[nodiscard]] VibOutput vib_head(ad::Var fused, ad::Var w_mu, ad::Var b_mu, ad::Var w_logvar, ad::Var b_logvar,
                                 VibMode mode, Rng* rng, double logvar_min = -10.0, double logvar_max = 10.0);

/// Per-row KL(N(mu, sigma^2) || N(0, I)) from mu and clamped log-variance, (B, 1).
[[nodiscard]] ad::Var vib_kl_rows(ad::Var mu, ad::Var logvar);
/// 0.5 * sum_d (mu_d^2 + sigma_d^2 - 1 - 2 ln sigma_d). Throws when any sigma <= 0.
[[nodiscard]] double vib_kl(const Eigen::RowVectorXd& mu, const Eigen::RowVectorXd& sigma);

[[nodiscard]] ad::Var classify(ad::Var code, ad::Var weight, ad::Var bias);

// ---- the full model --------------------------------------------------------

class Backbone {
 public:
  Backbone(BackboneConfig config, ModelShape shape, Role role, std::uint64_t init_seed);

  [[nodiscard]] const BackboneConfig& config() const { return config_; }
  [[nodiscard]] const ModelShape& shape() const { return shape_; }
  [[nodiscard]] Role role() const { return role_; }

  [[nodiscard]] std::vector<ad::Parameter>& parameters() { return params_; }
  [[nodiscard]] const std::vector<ad::Parameter>& parameters() const { return params_; }
  [[nodiscard]] ad::Parameter& parameter(const std::string& name);
  [[nodiscard]] std::size_t parameter_count() const;
  void zero_grad();

  /// Forward pass over a batch; masked modalities are zero-filled. `rng` is
  /// required in sample mode. When `override_masks` is set it replaces the
  /// samples' own masks.
  [[nodiscard]] FusionOutput forward(ad::Tape& tape, const Batch& batch, VibMode mode, Rng* rng,
                                     const std::vector<AvailabilityMask>* override_masks = nullptr);

  /// Last-layer attention matrices of every Perceiver for one sample
  /// (diagnostics and tests).
  [[nodiscard]] std::vector<std::vector<Matrix>> attention_weights(const Sample& sample);

 private:
  ad::Parameter& add(std::string name, Matrix value);
  PerceiverLayerVars perceiver_layer(ad::Tape& tape, int modality, int layer);
  FusionVars fusion_vars(ad::Tape& tape);

  BackboneConfig config_;
  ModelShape shape_;
  Role role_;
  std::vector<ad::Parameter> params_;
};

}  // namespace mcur
