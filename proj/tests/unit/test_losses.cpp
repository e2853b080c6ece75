// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"
#include "errors.hpp"
#include "losses.hpp"
#include "oracles.hpp"
#include "rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace mcur;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

verify::Rows to_rows(const Matrix& m) {
  verify::Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

Eigen::RowVectorXd row(std::initializer_list<double> v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

Eigen::RowVectorXd log_of(std::initializer_list<double> p) { return row(p).array().log(); }

std::vector<Label> class_labels(std::initializer_list<int> k, int num_classes) {
  std::vector<Label> out;
  for (int c : k) out.push_back(Label::classification(c, num_classes));
  return out;
}

}  // namespace

TEST_CASE("similarity logits") {
  ContrastiveConfig cfg;
  cfg.temperature = 1.0;
  const Matrix same = similarity_logits(rows({{1, 2}, {2, 4}, {0.5, 1}}), cfg);
  CHECK((same.array() - 1.0).abs().maxCoeff() < 1e-12);

  cfg.temperature = 0.5;
  const Matrix orth = similarity_logits(rows({{3, 0}, {0, 2}}), cfg);
  CHECK(orth(0, 1) == doctest::Approx(0.0));
  CHECK(orth(0, 0) == doctest::Approx(2.0));

  const double r = 1.0 / std::sqrt(2.0);
  const Matrix s = similarity_logits(rows({{1, 0}, {r, r}}), cfg);
  CHECK(s(0, 1) == doctest::Approx(1.41421356).epsilon(1e-8));

  CHECK_THROWS_AS((void)similarity_logits(rows({{1, 0}, {0, 0}}), cfg), NumericalError);
}

TEST_CASE("conditional probabilities on degenerate sets") {
  const Matrix equal = Matrix::Zero(2, 2);
  {
    const std::vector<CombinationId> c{3, 3};
    const std::vector<int> k{0, 1};
    const auto sets = build_index_sets(c, k, true);
    CHECK(p_comb_given_x(0, equal, sets) == doctest::Approx(1.0));
    CHECK(p_class_given_comb_x(0, equal, sets) == doctest::Approx(0.5));
    // the anchor is alone in its class
    CHECK(p_comb_given_x_class(0, equal, sets) == doctest::Approx(1.0));
  }
  {
    const std::vector<CombinationId> c{1, 2};
    const std::vector<int> k{0, 0};
    const auto sets = build_index_sets(c, k, true);
    CHECK(p_comb_given_x(0, equal, sets) == doctest::Approx(0.5));
    CHECK(p_comb_given_x_class(0, equal, sets) == doctest::Approx(0.5));
  }
  {
    const std::vector<CombinationId> c{1, 1, 1};
    const std::vector<int> k{2, 2, 2};
    const auto sets = build_index_sets(c, k, true);
    ContrastiveConfig cfg;
    Rng rng = make_rng(1, 0);
    std::normal_distribution<double> n;
    Matrix e(3, 4);
    for (auto& v : e.reshaped()) v = n(rng);
    CHECK(p_class_given_comb_x(1, similarity_logits(e, cfg), sets) == doctest::Approx(1.0));
    CHECK(std::abs(mcbcl_loss(e, c, k, cfg)) < 1e-12);
  }
}

TEST_CASE("contrastive loss against the loop oracle") {
  Rng rng = make_rng(99, 0);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> combo(1, 7), cls(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix e(8, 4);
    for (auto& v : e.reshaped()) v = n(rng);
    std::vector<CombinationId> c(8);
    std::vector<int> k(8);
    for (int i = 0; i < 8; ++i) {
      c[static_cast<std::size_t>(i)] = static_cast<CombinationId>(combo(rng));
      k[static_cast<std::size_t>(i)] = cls(rng);
    }
    ContrastiveConfig cfg;
    cfg.mu1 = 0.5;
    cfg.mu2 = 0.3;
    cfg.normalize_embeddings = trial % 2 == 0;
    cfg.include_self = trial % 3 != 0;
    const double got = mcbcl_loss(e, c, k, cfg);
    const double want = verify::oracle_contrastive(to_rows(e), c, k, cfg.temperature, cfg.mu1, cfg.mu2,
                                                   cfg.normalize_embeddings, cfg.include_self);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("unit weights reduce the contrastive loss to the supervised form") {
  Rng rng = make_rng(3, 0);
  std::normal_distribution<double> n;
  Matrix e(6, 5);
  for (auto& v : e.reshaped()) v = n(rng);
  const std::vector<CombinationId> c{1, 3, 3, 7, 1, 6};
  const std::vector<int> k{0, 1, 0, 1, 1, 0};
  ContrastiveConfig cfg;
  ContrastiveInfo info;
  (void)mcbcl_loss(e, c, k, cfg, &info);
  const auto sup = verify::oracle_supcon_per_anchor(to_rows(e), k, cfg.temperature, true);
  for (std::size_t i = 0; i < sup.size(); ++i) CHECK(info.per_anchor[i] == doctest::Approx(sup[i]).epsilon(1e-9));
}

TEST_CASE("normalized contrastive loss ignores row scale") {
  Rng rng = make_rng(4, 0);
  std::normal_distribution<double> n;
  Matrix e(5, 3);
  for (auto& v : e.reshaped()) v = n(rng);
  const std::vector<CombinationId> c{1, 1, 2, 2, 3};
  const std::vector<int> k{0, 1, 0, 1, 0};
  ContrastiveConfig cfg;
  cfg.mu1 = 0.7;
  cfg.mu2 = 0.4;
  Matrix scaled = e;
  scaled.row(2) *= 13.0;
  scaled.row(4) *= 0.01;
  CHECK(mcbcl_loss(scaled, c, k, cfg) == doctest::Approx(mcbcl_loss(e, c, k, cfg)).epsilon(1e-10));
}

TEST_CASE("self exclusion skips anchors with empty sets") {
  const Matrix e = rows({{1, 0}, {0, 1}, {1, 1}});
  const std::vector<CombinationId> c{1, 2, 4};
  const std::vector<int> k{0, 0, 1};
  ContrastiveConfig cfg;
  cfg.include_self = false;
  ContrastiveInfo info;
  CHECK(mcbcl_loss(e, c, k, cfg, &info) == 0.0);
  CHECK(info.used_anchors == 0);
  CHECK(info.degenerate);
}

TEST_CASE("per-sample terms") {
  CHECK(rep_mse(row({3, 4}), row({0, 0})) == doctest::Approx(25.0));
  CHECK(rep_mse(row({1, 2}), row({1, 2})) == 0.0);

  CHECK(prediction_uncertainty(row({0, 0, 0, 0})) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const double p1 = 1.0 / (1.0 + std::exp(-1.0));
  const double h = -(p1 * std::log(p1) + (1.0 - p1) * std::log(1.0 - p1));
  CHECK(prediction_uncertainty(row({1, 0})) == doctest::Approx(h).epsilon(1e-14));
  CHECK(h == doctest::Approx(0.5822).epsilon(1e-4));
  CHECK(regression_uncertainty(0.3, 0.3) == 0.0);

  CHECK(uncertainty_gap(0.5, 0.2) == doctest::Approx(0.3));
  CHECK(uncertainty_gap(0.2, 0.5) == uncertainty_gap(0.5, 0.2));
  CHECK(uncertainty_gap(0.4, 0.4) == 0.0);

  CHECK(regression_distill(0.5, -0.5) == doctest::Approx(1.0));
  CHECK(dkd(row({0.3, -1, 2}), row({0.3, -1, 2}), 1, 0.2) == doctest::Approx(0.0));
  const double kl_binary = 0.6 * std::log(0.6 / 0.5) + 0.4 * std::log(0.4 / 0.5);
  const double kl_rest = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  CHECK(dkd(log_of({0.5, 0.25, 0.25}), log_of({0.6, 0.3, 0.1}), 0, 0.2) ==
        doctest::Approx(0.2 * kl_binary + 0.8 * kl_rest).epsilon(1e-12));
  CHECK_THROWS((void)dkd(row({1.0}), row({1.0}), 0, 0.2));

  CHECK(cross_entropy(row({0.0, 0.0}), 1) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS((void)cross_entropy(row({0.0, 0.0}), 2));
}

TEST_CASE("distillation is minimized at matching logits") {
  Rng rng = make_rng(8, 0);
  std::normal_distribution<double> n;
  const Eigen::RowVectorXd t = row({0.4, -1.2, 0.9, 0.1});
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::RowVectorXd s = t;
    for (auto& v : s) v += 0.1 * n(rng);
    if ((s - t).array().abs().maxCoeff() < 1e-6) continue;
    // DKD only sees probabilities, so a uniform shift is not a perturbation.
    s.array() -= s.mean() - t.mean();
    CHECK(dkd(s, t, 2, 0.2) > 0.0);
  }
}

TEST_CASE("task loss") {
  ad::Tape tape;
  const auto reg = std::vector<Label>{Label::regression(-0.5), Label::regression(0.25)};
  const auto t = task_loss(tape.constant(rows({{1.5}, {0.25}})), reg, TaskKind::regression);
  CHECK(t.value()(0, 0) == doctest::Approx(2.0));
  CHECK(t.value()(1, 0) == 0.0);
  const auto k = class_labels({0, 1}, 2);
  const auto ce = task_loss(tape.constant(Matrix::Zero(2, 2)), k, TaskKind::classification);
  CHECK(ce.value()(1, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("uncertainty-guided regularizer") {
  const std::vector<double> u{0.3}, task{1.0}, lg{0.5};
  CHECK(sugr_loss(u, task, lg) == doctest::Approx(0.45));
  const std::vector<double> zero(4, 0.0), big{3, 5, 7, 9};
  CHECK(sugr_loss(zero, big, big) == 0.0);

  Rng rng = make_rng(12, 0);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  std::vector<double> a(5), b(5), c(5);
  for (std::size_t i = 0; i < 5; ++i) {
    a[i] = unif(rng);
    b[i] = unif(rng);
    c[i] = unif(rng);
  }
  CHECK(sugr_loss(a, b, c) == doctest::Approx(verify::oracle_sugr(a, b, c)).epsilon(1e-14));
  CHECK_THROWS((void)sugr_loss(std::vector<double>{1, 2}, std::vector<double>{1}, std::vector<double>{1, 2}));

  for (bool detach : {false, true}) {
    ad::Tape tape;
    auto uv = tape.leaf(rows({{0.3}, {0.7}}));
    auto tv = tape.leaf(rows({{1.0}, {2.0}}));
    auto lv = tape.leaf(rows({{0.5}, {0.1}}));
    auto s = sugr_loss(uv, tv, lv, detach);
    tape.backward(s);
    const Matrix gu = tape.grad(uv);
    if (detach) {
      CHECK(gu.isZero());
    } else {
      CHECK(gu(0, 0) == doctest::Approx(0.75));
      CHECK(gu(1, 0) == doctest::Approx(1.05));
    }
    CHECK(tape.grad(tv)(1, 0) == doctest::Approx(0.35));
  }
}

TEST_CASE("weighted totals") {
  LossWeights w;
  w.gamma = 0.2;
  w.beta = 0.01;
  w.zeta = 5.0;
  CHECK(total_student_loss({2.0, 10.0, 1.0, 0.4}, w) == doctest::Approx(3.5).epsilon(1e-14));
  CHECK(total_student_loss({}, w) == 0.0);

  LossWeights iso;
  iso.gamma = iso.zeta = iso.beta = 0.0;
  CHECK(total_student_loss({2.0, 10.0, 1.25, 0.4}, iso) == 1.25);

  w.include_vib = false;
  CHECK(total_student_loss({2.0, 10.0, 1.0, 0.4}, w) == doctest::Approx(3.4).epsilon(1e-14));

  CHECK(total_teacher_loss(0.7, 2.0, 0.01) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(total_teacher_loss(0.7, 2.0, 0.0) == 0.7);

  LossWeights bad;
  bad.gamma = -0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
