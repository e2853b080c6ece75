// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "backbone.hpp"

#include "errors.hpp"

#include <cmath>
#include <random>

namespace mcur {

using ad::Tape;
using ad::Var;

std::string to_string(Role role) { return role == Role::teacher ? "teacher" : "student"; }

Role role_from_string(const std::string& s) {
  if (s == "teacher") return Role::teacher;
  if (s == "student") return Role::student;
  throw InvalidArgument("unknown role '" + s + "'");
}

void BackboneConfig::validate(int modalities) const {
  if (seq_len < 1) throw InvalidArgument("model.seq_len must be >= 1");
  if (dim < 1) throw InvalidArgument("model.dim must be >= 1");
  if (static_cast<int>(prompt_lens.size()) != modalities) {
    throw InvalidArgument("model.prompt_lens must have one entry per modality");
  }
  for (int l : prompt_lens) {
    if (l < 1) throw InvalidArgument("model.prompt_lens entries must be >= 1");
  }
  if (encoder_layers < 1) throw InvalidArgument("model.encoder_layers must be >= 1");
  if (fusion_layers < 0) throw InvalidArgument("model.fusion_layers must be >= 0");
  if (ffn_mult < 1) throw InvalidArgument("model.ffn_mult must be >= 1");
  if (!(logvar_min < logvar_max)) throw InvalidArgument("model.logvar_min must be below logvar_max");
}

Matrix resample_matrix(int from_len, int to_len) {
  if (from_len < 1 || to_len < 1) throw InvalidArgument("resample_matrix: lengths must be >= 1");
  Matrix r = Matrix::Zero(to_len, from_len);
  for (int i = 0; i < to_len; ++i) {
    if (from_len == 1) {
      r(i, 0) = 1.0;
      continue;
    }
    const double pos = to_len == 1 ? 0.0 : static_cast<double>(i) * (from_len - 1) / (to_len - 1);
    const int lo = std::min(static_cast<int>(std::floor(pos)), from_len - 1);
    const double frac = pos - lo;
    r(i, lo) += 1.0 - frac;
    if (frac > 0.0) r(i, lo + 1) += frac;
  }
  return r;
}

Matrix conv_patches(const Matrix& x) {
  const auto t = x.rows(), d = x.cols();
  Matrix out = Matrix::Zero(t, 3 * d);
  for (Eigen::Index r = 0; r < t; ++r) {
    if (r > 0) out.block(r, 0, 1, d) = x.row(r - 1);
    out.block(r, d, 1, d) = x.row(r);
    if (r + 1 < t) out.block(r, 2 * d, 1, d) = x.row(r + 1);
  }
  return out;
}

Var conv_standardize(Tape& tape, const Matrix& x, Var weight, Var bias, int seq_len) {
  if (x.rows() < 1) throw InvalidArgument("conv_standardize: sequence length must be >= 1");
  if (weight.rows() != 3 * x.cols()) throw InvalidArgument("conv_standardize: weight rows must be 3 * d_p");
  if (!x.allFinite()) throw NumericalError("conv_standardize: non-finite input");
  // Resampling is linear, so it is folded into the constant patch matrix.
  Matrix patches = resample_matrix(static_cast<int>(x.rows()), seq_len) * conv_patches(x);
  return ad::add_row(ad::matmul(tape.constant(std::move(patches)), weight), bias);
}

namespace {

Var attend(Var projected_queries, Var features, Var w_v, Matrix* weights_out) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(features.cols()));
  Var scores = ad::scale(ad::matmul_nt(projected_queries, features), inv_sqrt);
  Var attn = ad::softmax_rows(scores);
  if (weights_out != nullptr) *weights_out = attn.value();
  return ad::matmul(ad::matmul(attn, features), w_v);
}

void check_finite(Var v, const char* what) {
  if (!v.value().allFinite()) throw NumericalError(std::string(what) + ": non-finite value");
}

}  // namespace

Var cross_attention(Var queries, Var features, const PerceiverLayerVars& w, Matrix* weights_out) {
  check_finite(features, "cross_attention features");
  check_finite(queries, "cross_attention queries");
  Var projected = ad::matmul_nt(ad::matmul(queries, w.w_q), w.w_h);
  return attend(projected, features, w.w_v, weights_out);
}

Var perceiver_encode(Var features, Var prompts, const std::vector<PerceiverLayerVars>& layers,
                     std::vector<Matrix>* weights_out) {
  if (layers.empty()) throw InvalidArgument("perceiver_encode: no layers");
  Var h = prompts;
  for (const auto& layer : layers) {
    Matrix w;
    h = cross_attention(h, features, layer, weights_out != nullptr ? &w : nullptr);
    if (weights_out != nullptr) weights_out->push_back(std::move(w));
  }
  Var out = ad::mean_rows(h);
  check_finite(out, "perceiver_encode");
  return out;
}

Var encoder_layer(Var tokens, const EncoderLayerVars& w) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(tokens.cols()));
  Var q = ad::add_row(ad::matmul(tokens, w.w_q), w.b_q);
  Var k = ad::add_row(ad::matmul(tokens, w.w_k), w.b_k);
  Var v = ad::add_row(ad::matmul(tokens, w.w_v), w.b_v);
  Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
  Var h = ad::add_row(ad::matmul(ad::matmul(attn, v), w.w_o), w.b_o);
  Var z1 = ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(tokens, h)), w.ln1_gamma), w.ln1_beta);
  Var f = ad::add_row(ad::matmul(ad::relu(ad::add_row(ad::matmul(z1, w.w_f1), w.b_f1)), w.w_f2), w.b_f2);
  return ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(z1, f)), w.ln2_gamma), w.ln2_beta);
}

Var fuse(const std::vector<Var>& encoded, const FusionVars& w) {
  if (encoded.empty()) throw InvalidArgument("fuse: no modality vectors");
  const auto m = static_cast<Eigen::Index>(encoded.size());
  if (w.w1.rows() != m * encoded.front().cols()) {
    throw InvalidArgument("fuse: expected " + std::to_string(w.w1.rows() / encoded.front().cols()) +
                          " modality vectors, got " + std::to_string(m));
  }
  Var tokens = ad::concat_rows(encoded);
  if (w.modality_embedding) tokens = ad::add(tokens, *w.modality_embedding);
  for (const auto& layer : w.layers) tokens = encoder_layer(tokens, layer);
  Var hidden = ad::add_row(ad::matmul(ad::flatten(tokens), w.w1), w.b1);
  if (w.relu) hidden = ad::relu(hidden);
  return ad::add_row(ad::matmul(hidden, w.w2), w.b2);
}

VibOutput vib_head(Var fused, Var w_mu, Var b_mu, Var w_logvar, Var b_logvar, VibMode mode, Rng* rng,
                   double logvar_min, double logvar_max) {
  check_finite(fused, "vib_head input");
  VibOutput out;
  out.mu = ad::add_row(ad::matmul(fused, w_mu), b_mu);
  Var raw = ad::add_row(ad::matmul(fused, w_logvar), b_logvar);
  check_finite(raw, "vib_head log-variance");
  out.logvar = ad::clamp(raw, logvar_min, logvar_max);
  out.sigma = ad::exp(ad::scale(out.logvar, 0.5));
  if (mode == VibMode::mean) {
    out.code = out.mu;
    return out;
  }
  if (rng == nullptr) throw InvalidArgument("vib_head: sample mode needs a random generator");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix eps(out.mu.rows(), out.mu.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(*rng);
  out.code = ad::add(out.mu, ad::mul(fused.tape->constant(std::move(eps)), out.sigma));
  return out;
}

Var vib_kl_rows(Var mu, Var logvar) {
  // 0.5 * sum(mu^2 + exp(lv) - 1 - lv)
  Var terms = ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
  return ad::scale(ad::sum_cols(terms), 0.5);
}

double vib_kl(const Eigen::RowVectorXd& mu, const Eigen::RowVectorXd& sigma) {
  if (mu.size() != sigma.size()) throw InvalidArgument("vib_kl: mu and sigma differ in length");
  double kl = 0.0;
  for (Eigen::Index d = 0; d < mu.size(); ++d) {
    if (!(sigma(d) > 0.0)) throw InvalidArgument("vib_kl: sigma must be positive");
    kl += mu(d) * mu(d) + sigma(d) * sigma(d) - 1.0 - 2.0 * std::log(sigma(d));
  }
  return 0.5 * kl;
}

Var classify(Var code, Var weight, Var bias) {
  check_finite(code, "classify input");
  return ad::add_row(ad::matmul(code, weight), bias);
}

// ---- Backbone --------------------------------------------------------------

namespace {

Matrix xavier(Rng& rng, int in, int out) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return w;
}

Matrix gaussian(Rng& rng, int rows, int cols, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  return w;
}

// Initial log-variance bias; keeps early samples close to the mean.
constexpr double kInitLogvarBias = -4.0;

}  // namespace

Backbone::Backbone(BackboneConfig config, ModelShape shape, Role role, std::uint64_t init_seed)
    : config_(std::move(config)), shape_(std::move(shape)), role_(role) {
  config_.validate(shape_.modalities);
  if (static_cast<int>(shape_.feature_dims.size()) != shape_.modalities) {
    throw InvalidArgument("model shape: feature_dims must have one entry per modality");
  }
  if (shape_.output_size < 1) throw InvalidArgument("model shape: output size must be >= 1");
  const int d = config_.dim;
  const int m = shape_.modalities;
  auto rng = make_rng(init_seed, 100);
  params_.reserve(256);

  for (int p = 0; p < m; ++p) {
    const std::string pre = "conv." + std::to_string(p);
    add(pre + ".weight", xavier(rng, 3 * shape_.feature_dims[static_cast<std::size_t>(p)], d));
    add(pre + ".bias", Matrix::Zero(1, d));
  }
  for (int p = 0; p < m; ++p) {
    const std::string pre = "perceiver." + std::to_string(p);
    add(pre + ".prompts", gaussian(rng, config_.prompt_lens[static_cast<std::size_t>(p)], d, 1.0));
    for (int l = 0; l < config_.encoder_layers; ++l) {
      const std::string lp = pre + ".layer" + std::to_string(l);
      add(lp + ".w_q", xavier(rng, d, d));
      add(lp + ".w_h", xavier(rng, d, d));
      add(lp + ".w_v", xavier(rng, d, d));
    }
  }
  if (config_.modality_embedding) add("fusion.modality_embedding", gaussian(rng, m, d, 0.1));
  const int hidden = config_.ffn_mult * d;
  for (int l = 0; l < config_.fusion_layers; ++l) {
    const std::string lp = "fusion.layer" + std::to_string(l);
    for (const char* n : {"q", "k", "v", "o"}) {
      add(lp + ".w_" + n, xavier(rng, d, d));
      add(lp + ".b_" + n, Matrix::Zero(1, d));
    }
    add(lp + ".ln1_gamma", Matrix::Ones(1, d));
    add(lp + ".ln1_beta", Matrix::Zero(1, d));
    add(lp + ".w_f1", xavier(rng, d, hidden));
    add(lp + ".b_f1", Matrix::Zero(1, hidden));
    add(lp + ".w_f2", xavier(rng, hidden, d));
    add(lp + ".b_f2", Matrix::Zero(1, d));
    add(lp + ".ln2_gamma", Matrix::Ones(1, d));
    add(lp + ".ln2_beta", Matrix::Zero(1, d));
  }
  add("mlp.w1", xavier(rng, m * d, d));
  add("mlp.b1", Matrix::Zero(1, d));
  add("mlp.w2", xavier(rng, d, d));
  add("mlp.b2", Matrix::Zero(1, d));
  add("vib.w_mu", xavier(rng, d, d));
  add("vib.b_mu", Matrix::Zero(1, d));
  add("vib.w_logvar", xavier(rng, d, d) * 0.1);
  add("vib.b_logvar", Matrix::Constant(1, d, kInitLogvarBias));
  add("head.weight", xavier(rng, d, shape_.output_size));
  add("head.bias", Matrix::Zero(1, shape_.output_size));
}

ad::Parameter& Backbone::add(std::string name, Matrix value) {
  if (params_.size() == params_.capacity()) throw Error("Backbone: parameter table overflow");
  params_.push_back(ad::Parameter{std::move(name), std::move(value), {}});
  return params_.back();
}

ad::Parameter& Backbone::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("no parameter named '" + name + "'");
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Backbone::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

PerceiverLayerVars Backbone::perceiver_layer(Tape& tape, int modality, int layer) {
  const std::string lp = "perceiver." + std::to_string(modality) + ".layer" + std::to_string(layer);
  return {tape.param(parameter(lp + ".w_q")), tape.param(parameter(lp + ".w_h")), tape.param(parameter(lp + ".w_v"))};
}

FusionVars Backbone::fusion_vars(Tape& tape) {
  FusionVars w;
  if (config_.modality_embedding) w.modality_embedding = tape.param(parameter("fusion.modality_embedding"));
  for (int l = 0; l < config_.fusion_layers; ++l) {
    const std::string lp = "fusion.layer" + std::to_string(l);
    auto P = [&](const std::string& n) { return tape.param(parameter(lp + "." + n)); };
    w.layers.push_back(EncoderLayerVars{P("w_q"), P("b_q"), P("w_k"), P("b_k"), P("w_v"), P("b_v"), P("w_o"),
                                        P("b_o"), P("ln1_gamma"), P("ln1_beta"), P("w_f1"), P("b_f1"), P("w_f2"),
                                        P("b_f2"), P("ln2_gamma"), P("ln2_beta")});
  }
  w.w1 = tape.param(parameter("mlp.w1"));
  w.b1 = tape.param(parameter("mlp.b1"));
  w.w2 = tape.param(parameter("mlp.w2"));
  w.b2 = tape.param(parameter("mlp.b2"));
  w.relu = config_.fusion_relu;
  return w;
}

FusionOutput Backbone::forward(Tape& tape, const Batch& batch, VibMode mode, Rng* rng,
                               const std::vector<AvailabilityMask>* override_masks) {
  batch.validate();
  const int m = shape_.modalities;
  const auto b = batch.size();
  if (override_masks != nullptr && override_masks->size() != b) {
    throw InvalidArgument("forward: mask override length differs from batch size");
  }

  // Per-modality weights are shared across the batch; the first-layer query
  // projection depends only on the prompts and is computed once.
  std::vector<Var> conv_w, conv_b, first_queries;
  std::vector<std::vector<PerceiverLayerVars>> layers(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p) {
    conv_w.push_back(tape.param(parameter("conv." + std::to_string(p) + ".weight")));
    conv_b.push_back(tape.param(parameter("conv." + std::to_string(p) + ".bias")));
    for (int l = 0; l < config_.encoder_layers; ++l) layers[static_cast<std::size_t>(p)].push_back(perceiver_layer(tape, p, l));
    Var prompts = tape.param(parameter("perceiver." + std::to_string(p) + ".prompts"));
    const auto& l0 = layers[static_cast<std::size_t>(p)].front();
    first_queries.push_back(ad::matmul_nt(ad::matmul(prompts, l0.w_q), l0.w_h));
  }
  const FusionVars fusion = fusion_vars(tape);

  FusionOutput out;
  std::vector<std::vector<Var>> per_modality(static_cast<std::size_t>(m));
  std::vector<Var> fused_rows;
  fused_rows.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = *batch.samples[i];
    if (static_cast<int>(s.modalities.size()) != m) throw IncompatibleError("forward: sample modality count differs");
    const AvailabilityMask& mask = override_masks != nullptr ? (*override_masks)[i] : s.mask;
    std::vector<Var> encoded;
    encoded.reserve(static_cast<std::size_t>(m));
    for (int p = 0; p < m; ++p) {
      const auto up = static_cast<std::size_t>(p);
      const Matrix& raw = s.modalities[up].data;
      if (raw.cols() != shape_.feature_dims[up]) throw IncompatibleError("forward: feature dimension mismatch");
      Var x = mask.available(p) ? conv_standardize(tape, raw, conv_w[up], conv_b[up], config_.seq_len)
                                : conv_standardize(tape, Matrix::Zero(raw.rows(), raw.cols()), conv_w[up],
                                                   conv_b[up], config_.seq_len);
      Var h = attend(first_queries[up], x, layers[up].front().w_v, nullptr);
      for (std::size_t l = 1; l < layers[up].size(); ++l) h = cross_attention(h, x, layers[up][l]);
      Var enc = ad::mean_rows(h);
      check_finite(enc, "perceiver output");
      per_modality[up].push_back(enc);
      encoded.push_back(enc);
    }
    fused_rows.push_back(fuse(encoded, fusion));
  }
  for (auto& rows : per_modality) out.encoded.push_back(ad::concat_rows(rows));
  out.fused = ad::concat_rows(fused_rows);
  VibOutput vib = vib_head(out.fused, tape.param(parameter("vib.w_mu")), tape.param(parameter("vib.b_mu")),
                           tape.param(parameter("vib.w_logvar")), tape.param(parameter("vib.b_logvar")), mode, rng,
                           config_.logvar_min, config_.logvar_max);
  out.mu = vib.mu;
  out.logvar = vib.logvar;
  out.sigma = vib.sigma;
  out.code = vib.code;
  out.embedding = vib.code;
  out.logits = classify(out.code, tape.param(parameter("head.weight")), tape.param(parameter("head.bias")));
  return out;
}

std::vector<std::vector<Matrix>> Backbone::attention_weights(const Sample& sample) {
  Tape tape;
  std::vector<std::vector<Matrix>> out;
  for (int p = 0; p < shape_.modalities; ++p) {
    const auto up = static_cast<std::size_t>(p);
    Matrix raw = sample.mask.available(p) ? sample.modalities[up].data
                                          : Matrix::Zero(sample.modalities[up].data.rows(), sample.modalities[up].data.cols());
    Var x = conv_standardize(tape, raw, tape.param(parameter("conv." + std::to_string(p) + ".weight")),
                             tape.param(parameter("conv." + std::to_string(p) + ".bias")), config_.seq_len);
    std::vector<PerceiverLayerVars> layers;
    for (int l = 0; l < config_.encoder_layers; ++l) layers.push_back(perceiver_layer(tape, p, l));
    std::vector<Matrix> weights;
    (void)perceiver_encode(x, tape.param(parameter("perceiver." + std::to_string(p) + ".prompts")), layers, &weights);
    out.push_back(std::move(weights));
  }
  return out;
}

}  // namespace mcur
