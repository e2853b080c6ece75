// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations written as explicit scalar loops over plain
// vectors. They share no code with the library and exist only to check it.

#pragma once

#include <cstdint>
#include <vector>

namespace mcur::verify {

using Rows = std::vector<std::vector<double>>;

/// s_ij = <x_i, x_j> / tau, rows optionally L2-normalized.
Rows oracle_similarity(const Rows& e, double tau, bool normalize);

/// Per-anchor combination/category contrastive loss from its three
/// conditional probabilities, each floored at 1e-12. Anchors with an empty set
/// (possible only without self pairs) are NaN.
std::vector<double> oracle_contrastive_per_anchor(const Rows& e, const std::vector<std::uint32_t>& combos,
                                                  const std::vector<int>& classes, double tau, double mu1, double mu2,
                                                  bool normalize, bool include_self);
/// Mean over the non-NaN anchors (0 when all are NaN).
double oracle_contrastive(const Rows& e, const std::vector<std::uint32_t>& combos, const std::vector<int>& classes,
                          double tau, double mu1, double mu2, bool normalize, bool include_self);

/// -log(sum over same-class / sum over the batch), self included.
std::vector<double> oracle_supcon_per_anchor(const Rows& e, const std::vector<int>& classes, double tau,
                                             bool normalize);

std::vector<double> oracle_softmax(const std::vector<double>& z);
double oracle_entropy(const std::vector<double>& z);
/// alpha KL(b_t || b_s) + (1 - alpha) KL(q_t || q_s) from logits.
double oracle_dkd(const std::vector<double>& zs, const std::vector<double>& zt, int target, double alpha);
double oracle_kl_categorical(const std::vector<double>& p, const std::vector<double>& q);
double oracle_sugr(const std::vector<double>& u, const std::vector<double>& task, const std::vector<double>& logits);
double oracle_vib_kl(const std::vector<double>& mu, const std::vector<double>& sigma);

double oracle_brier(const std::vector<double>& p, const std::vector<double>& y);
double oracle_nll(const std::vector<double>& p, const std::vector<double>& y);
/// One-vs-all Brier / NLL of softmax(logits) against one-hot labels.
double oracle_multiclass_brier(const Rows& logits, const std::vector<int>& labels);
double oracle_multiclass_nll(const Rows& logits, const std::vector<int>& labels);

}  // namespace mcur::verify
