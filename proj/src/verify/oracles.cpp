// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcur::verify {

namespace {

constexpr double kFloor = 1e-12;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// log of sum_j exp(row[j]) over the selected j, shifted by the row maximum.
double log_sum(const std::vector<double>& row, const std::vector<bool>& take) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (take[j]) mx = std::max(mx, row[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (take[j]) s += std::exp(row[j] - mx);
  }
  return mx + std::log(s);
}

}  // namespace

Rows oracle_similarity(const Rows& e, double tau, bool normalize) {
  Rows x = e;
  if (normalize) {
    for (auto& row : x) {
      const double n = std::sqrt(dot(row, row));
      if (n == 0.0) throw std::domain_error("zero row");
      for (double& v : row) v /= n;
    }
  }
  Rows s(x.size(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) s[i][j] = dot(x[i], x[j]) / tau;
  }
  return s;
}

std::vector<double> oracle_contrastive_per_anchor(const Rows& e, const std::vector<std::uint32_t>& combos,
                                                  const std::vector<int>& classes, double tau, double mu1, double mu2,
                                                  bool normalize, bool include_self) {
  const Rows s = oracle_similarity(e, tau, normalize);
  const std::size_t b = e.size();
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<bool> all(b), m(b), n(b), c(b);
    std::size_t nm = 0, nn = 0, nc = 0;
    for (std::size_t j = 0; j < b; ++j) {
      const bool allowed = include_self || j != i;
      all[j] = allowed;
      m[j] = allowed && combos[j] == combos[i];
      c[j] = allowed && classes[j] == classes[i];
      n[j] = m[j] && c[j];
      nm += m[j];
      nn += n[j];
      nc += c[j];
    }
    if (nm == 0 || nn == 0 || nc == 0) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double l_all = log_sum(s[i], all), l_m = log_sum(s[i], m), l_n = log_sum(s[i], n), l_c = log_sum(s[i], c);
    const double p_comb = std::max(std::exp(l_m - l_all), kFloor);
    const double p_class_given_comb = std::max(std::exp(l_n - l_m), kFloor);
    const double p_comb_given_class = std::max(std::exp(l_n - l_c), kFloor);
    out[i] = -(std::log(p_comb) + mu1 * std::log(p_class_given_comb) - mu2 * std::log(p_comb_given_class));
  }
  return out;
}

double oracle_contrastive(const Rows& e, const std::vector<std::uint32_t>& combos, const std::vector<int>& classes,
                          double tau, double mu1, double mu2, bool normalize, bool include_self) {
  const auto per = oracle_contrastive_per_anchor(e, combos, classes, tau, mu1, mu2, normalize, include_self);
  double s = 0.0;
  std::size_t n = 0;
  for (double v : per) {
    if (!std::isnan(v)) {
      s += v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

std::vector<double> oracle_supcon_per_anchor(const Rows& e, const std::vector<int>& classes, double tau,
                                             bool normalize) {
  const Rows s = oracle_similarity(e, tau, normalize);
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      const double v = std::exp(s[i][j]);
      den += v;
      if (classes[j] == classes[i]) num += v;
    }
    out[i] = -std::log(num / den);
  }
  return out;
}

std::vector<double> oracle_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - mx);
    s += p[k];
  }
  for (double& v : p) v /= s;
  return p;
}

double oracle_entropy(const std::vector<double>& z) {
  const auto p = oracle_softmax(z);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double oracle_kl_categorical(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) s += p[k] * std::log(p[k] / q[k]);
  }
  return s;
}

double oracle_dkd(const std::vector<double>& zs, const std::vector<double>& zt, int target, double alpha) {
  const auto ps = oracle_softmax(zs);
  const auto pt = oracle_softmax(zt);
  const auto t = static_cast<std::size_t>(target);
  const std::vector<double> bs{ps[t], 1.0 - ps[t]};
  const std::vector<double> bt{pt[t], 1.0 - pt[t]};
  std::vector<double> qs, qt;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    if (k == t) continue;
    qs.push_back(ps[k] / (1.0 - ps[t]));
    qt.push_back(pt[k] / (1.0 - pt[t]));
  }
  return alpha * oracle_kl_categorical(bt, bs) + (1.0 - alpha) * oracle_kl_categorical(qt, qs);
}

double oracle_sugr(const std::vector<double>& u, const std::vector<double>& task, const std::vector<double>& logits) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * (task[i] + logits[i]);
  return s / static_cast<double>(u.size());
}

double oracle_vib_kl(const std::vector<double>& mu, const std::vector<double>& sigma) {
  double s = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    s += mu[d] * mu[d] + sigma[d] * sigma[d] - 1.0 - 2.0 * std::log(sigma[d]);
  }
  return 0.5 * s;
}

double oracle_brier(const std::vector<double>& p, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return s / static_cast<double>(p.size());
}

double oracle_nll(const std::vector<double>& p, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(p[i], kFloor), 1.0 - kFloor);
    s += y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return -s / static_cast<double>(p.size());
}

double oracle_multiclass_brier(const Rows& logits, const std::vector<int>& labels) {
  std::vector<double> p, y;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto probs = oracle_softmax(logits[i]);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      p.push_back(probs[k]);
      y.push_back(static_cast<int>(k) == labels[i] ? 1.0 : 0.0);
    }
  }
  return oracle_brier(p, y);
}

double oracle_multiclass_nll(const Rows& logits, const std::vector<int>& labels) {
  std::vector<double> p, y;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto probs = oracle_softmax(logits[i]);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      p.push_back(probs[k]);
      y.push_back(static_cast<int>(k) == labels[i] ? 1.0 : 0.0);
    }
  }
  return oracle_nll(p, y);
}

}  // namespace mcur::verify
