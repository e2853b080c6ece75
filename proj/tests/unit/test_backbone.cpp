// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"
#include "backbone.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mcur;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (auto& v : m.reshaped()) v = n(rng);
  return m;
}

Sample make_sample(const std::vector<int>& lens, const std::vector<int>& dims, std::uint64_t seed, int k) {
  Sample s;
  for (std::size_t p = 0; p < lens.size(); ++p) {
    s.modalities.push_back({static_cast<int>(p), random_matrix(lens[p], dims[p], seed + p)});
  }
  s.mask = AvailabilityMask::complete(static_cast<int>(lens.size()));
  s.label = Label::classification(0, k);
  return s;
}

}  // namespace

TEST_CASE("conv standardization is affine in the input") {
  ad::Tape tape;
  const Matrix x = random_matrix(17, 5, 1);
  auto w = tape.constant(random_matrix(15, 32, 2));
  auto b = tape.constant(random_matrix(1, 32, 3));
  const Matrix o0 = conv_standardize(tape, Matrix::Zero(17, 5), w, b, 16).value();
  const Matrix o1 = conv_standardize(tape, x, w, b, 16).value();
  const Matrix o2 = conv_standardize(tape, 2.0 * x, w, b, 16).value();
  CHECK(o1.rows() == 16);
  CHECK(o1.cols() == 32);
  CHECK(((o2 - o0) - 2.0 * (o1 - o0)).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index r = 0; r < o0.rows(); ++r) CHECK((o0.row(r) - b.value()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS((void)conv_standardize(tape, x, tape.constant(Matrix::Zero(3, 32)), b, 16), InvalidArgument);
}

TEST_CASE("resampling preserves constant sequences") {
  for (int from : {1, 3, 8, 17}) {
    for (int to : {1, 4, 16}) {
      const Matrix r = resample_matrix(from, to);
      CHECK((r.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
  }
  CHECK(resample_matrix(5, 5).isIdentity());
}

TEST_CASE("cross attention over identical rows returns the value projection") {
  ad::Tape tape;
  Matrix feats(4, 3);
  feats.rowwise() = random_matrix(1, 3, 5).row(0);
  PerceiverLayerVars w{tape.constant(random_matrix(3, 3, 6)), tape.constant(random_matrix(3, 3, 7)),
                       tape.constant(random_matrix(3, 3, 8))};
  const Matrix out = cross_attention(tape.constant(random_matrix(2, 3, 9)), tape.constant(feats), w).value();
  const Matrix expect = feats.row(0) * w.w_v.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK((out.row(r) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross attention hand case") {
  ad::Tape tape;
  const Matrix eye = Matrix::Identity(2, 2);
  PerceiverLayerVars w{tape.constant(eye), tape.constant(eye), tape.constant(eye)};
  Matrix q(1, 2);
  q << 1.0, 0.0;
  Matrix out_weights;
  const Matrix out = cross_attention(tape.constant(q), tape.constant(eye), w, &out_weights).value();
  // scores (1/sqrt 2, 0); softmax weight on the first row:
  const double a = std::exp(1.0 / std::sqrt(2.0)) / (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
  CHECK(out(0, 0) == doctest::Approx(a).epsilon(1e-14));
  CHECK(out(0, 1) == doctest::Approx(1.0 - a).epsilon(1e-14));
  CHECK(out_weights(0, 0) == doctest::Approx(a).epsilon(1e-14));
}

TEST_CASE("VIB head") {
  ad::Tape tape;
  auto fused = tape.constant(random_matrix(3, 4, 10));
  auto w_mu = tape.constant(random_matrix(4, 4, 11));
  auto b_mu = tape.constant(random_matrix(1, 4, 12));
  auto zero_w = tape.constant(Matrix::Zero(4, 4));
  auto zero_b = tape.constant(Matrix::Zero(1, 4));

  const auto mean = vib_head(fused, w_mu, b_mu, zero_w, zero_b, VibMode::mean, nullptr);
  CHECK(mean.code.value() == mean.mu.value());
  CHECK((mean.sigma.value().array() - 1.0).abs().maxCoeff() == 0.0);

  Rng r1 = make_rng(5, 1), r2 = make_rng(5, 1);
  const auto s1 = vib_head(fused, w_mu, b_mu, zero_w, zero_b, VibMode::sample, &r1);
  const auto s2 = vib_head(fused, w_mu, b_mu, zero_w, zero_b, VibMode::sample, &r2);
  CHECK(s1.code.value() == s2.code.value());
  CHECK(s1.code.value() != s1.mu.value());
  CHECK_THROWS((void)vib_head(fused, w_mu, b_mu, zero_w, zero_b, VibMode::sample, nullptr));

  auto huge_b = tape.constant(Matrix::Constant(1, 4, 1e3));
  const auto clamped = vib_head(fused, w_mu, b_mu, zero_w, huge_b, VibMode::mean, nullptr);
  CHECK(clamped.logvar.value().maxCoeff() == 10.0);
  CHECK(clamped.sigma.value().allFinite());
}

TEST_CASE("VIB KL closed forms") {
  Eigen::RowVectorXd mu(1), sigma(1);
  mu << 0.0;
  sigma << 1.0;
  CHECK(vib_kl(mu, sigma) == 0.0);
  mu << 1.0;
  CHECK(vib_kl(mu, sigma) == doctest::Approx(0.5).epsilon(1e-15));
  mu << 0.0;
  sigma << 2.0;
  CHECK(vib_kl(mu, sigma) == doctest::Approx(0.5 * (4.0 - 1.0 - 2.0 * std::log(2.0))).epsilon(1e-15));
  CHECK(vib_kl(mu, sigma) == doctest::Approx(0.8069).epsilon(1e-4));
  sigma << 0.0;
  CHECK_THROWS((void)vib_kl(mu, sigma));
}

TEST_CASE("classifier head") {
  ad::Tape tape;
  auto e = tape.constant(random_matrix(2, 3, 13));
  auto bias = tape.constant(random_matrix(1, 3, 14));
  const Matrix z = classify(e, tape.constant(Matrix::Zero(3, 3)), bias).value();
  for (Eigen::Index r = 0; r < 2; ++r) CHECK(z.row(r) == bias.value().row(0));
  const Matrix id = classify(e, tape.constant(Matrix::Identity(3, 3)), tape.constant(Matrix::Zero(1, 3))).value();
  CHECK(id == e.value());
}

TEST_CASE("full forward shapes") {
  BackboneConfig cfg;
  cfg.seq_len = 6;
  cfg.dim = 32;
  ModelShape shape{3, {5, 4, 3}, TaskKind::classification, 4};
  Backbone model(cfg, shape, Role::student, 1);
  const Sample a = make_sample({7, 8, 9}, {5, 4, 3}, 20, 4);
  const Sample b = make_sample({7, 8, 9}, {5, 4, 3}, 30, 4);
  Batch batch{{&a, &b}};
  ad::Tape tape;
  const auto out = model.forward(tape, batch, VibMode::mean, nullptr);
  CHECK(out.encoded.size() == 3);
  CHECK(out.encoded[0].cols() == 32);
  CHECK(out.fused.rows() == 2);
  CHECK(out.fused.cols() == 32);
  CHECK(out.logits.cols() == 4);
  CHECK(out.code.value() == out.mu.value());
  CHECK((out.sigma.value().array() > 0.0).all());
}

TEST_CASE("masked modalities do not influence the output") {
  BackboneConfig cfg;
  cfg.seq_len = 4;
  cfg.dim = 8;
  ModelShape shape{3, {3, 3, 3}, TaskKind::classification, 3};
  Backbone model(cfg, shape, Role::student, 2);
  Sample a = make_sample({4, 4, 4}, {3, 3, 3}, 40, 3);
  a.mask = AvailabilityMask({1, 0, 1});
  Sample b = a;
  b.modalities[1].data = random_matrix(4, 3, 99);
  ad::Tape t1, t2;
  const Matrix za = model.forward(t1, Batch{{&a}}, VibMode::mean, nullptr).logits.value();
  const Matrix zb = model.forward(t2, Batch{{&b}}, VibMode::mean, nullptr).logits.value();
  CHECK(za == zb);
}

TEST_CASE("single-modality model is defined") {
  BackboneConfig cfg;
  cfg.seq_len = 3;
  cfg.dim = 4;
  cfg.prompt_lens = {2};
  ModelShape shape{1, {2}, TaskKind::classification, 2};
  Backbone model(cfg, shape, Role::teacher, 3);
  const Sample s = make_sample({5}, {2}, 50, 2);
  ad::Tape tape;
  const auto out = model.forward(tape, Batch{{&s}}, VibMode::mean, nullptr);
  CHECK(out.fused.cols() == 4);
  CHECK(out.logits.value().allFinite());
}

TEST_CASE("initialization is seeded") {
  BackboneConfig cfg;
  ModelShape shape{3, {4, 4, 4}, TaskKind::regression, 1};
  Backbone a(cfg, shape, Role::student, 7), b(cfg, shape, Role::student, 7), c(cfg, shape, Role::student, 8);
  REQUIRE(a.parameters().size() == b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    differs = differs || a.parameters()[i].value != c.parameters()[i].value;
  }
  CHECK(differs);
}
