// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "datamodel.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "synthdata.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace mcur;

namespace {

std::vector<Sample> small_set(std::size_t n, std::uint64_t seed = 7) {
  SynthConfig c;
  c.n_train = n;
  c.n_test = 1;
  c.seq_lens = {3, 4, 5};
  c.feature_dims = {4, 3, 2};
  c.seed = seed;
  return generate(c);
}

/// Nearest-class-mean probe on time-averaged features of one modality,
/// fitted on the first half and scored on the second.
double probe_accuracy(const std::vector<Sample>& data, int modality, int k) {
  const std::size_t half = data.size() / 2;
  const auto d = data[0].modalities[static_cast<std::size_t>(modality)].feature_dim();
  std::vector<Eigen::RowVectorXd> mean(static_cast<std::size_t>(k), Eigen::RowVectorXd::Zero(d));
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  const auto feat = [&](const Sample& s) -> Eigen::RowVectorXd {
    return s.modalities[static_cast<std::size_t>(modality)].data.colwise().mean();
  };
  for (std::size_t i = 0; i < half; ++i) {
    const auto c = static_cast<std::size_t>(data[i].label.class_index);
    mean[c] += feat(data[i]);
    ++count[c];
  }
  for (std::size_t c = 0; c < mean.size(); ++c) mean[c] /= std::max(count[c], 1);
  int correct = 0;
  for (std::size_t i = half; i < data.size(); ++i) {
    const auto f = feat(data[i]);
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if ((f - mean[static_cast<std::size_t>(c)]).squaredNorm() < (f - mean[static_cast<std::size_t>(best)]).squaredNorm())
        best = c;
    }
    correct += best == data[i].label.class_index;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size() - half);
}

}  // namespace

TEST_CASE("combination ids are bit patterns with modality 0 lowest") {
  CHECK(combination_id(AvailabilityMask({1, 1, 1})) == 7);
  CHECK(combination_id(AvailabilityMask({1, 0, 0})) == 1);
  CHECK(combination_id(AvailabilityMask({0, 1, 1})) == 6);
  for (std::uint32_t id = 1; id < 8; ++id) {
    CHECK(combination_id(AvailabilityMask::from_combination(id, 3)) == id);
  }
  CHECK(combination_label(3, 3) == "L,A");
  CHECK(combination_from_label("A,V", 3) == 6);
}

TEST_CASE("masks reject empty and non-binary vectors") {
  CHECK_THROWS_AS(AvailabilityMask({0, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(AvailabilityMask({1, 2, 0}), InvalidArgument);
  CHECK_THROWS_AS(AvailabilityMask::from_combination(0, 3), InvalidArgument);
  CHECK_THROWS_AS(AvailabilityMask::from_combination(8, 3), InvalidArgument);
}

TEST_CASE("missing rate counts absent slots") {
  const std::vector<AvailabilityMask> full(5, AvailabilityMask::complete(3));
  CHECK(compute_mr(full, 3) == 0.0);
  const std::vector<AvailabilityMask> mixed{AvailabilityMask({1, 1, 1}), AvailabilityMask({1, 0, 0}),
                                            AvailabilityMask({1, 1, 0})};
  CHECK(compute_mr(mixed, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const std::vector<AvailabilityMask> single{AvailabilityMask({1, 0, 0}), AvailabilityMask({0, 0, 1})};
  CHECK(compute_mr(single, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS(compute_mr(std::vector<AvailabilityMask>{}, 3));
}

TEST_CASE("generation is deterministic and complete") {
  const auto a = small_set(40, 3), b = small_set(40, 3), c = small_set(40, 4);
  REQUIRE(a.size() == 40);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mask == AvailabilityMask::complete(3));
    CHECK(a[i].label.class_index == b[i].label.class_index);
    for (std::size_t p = 0; p < 3; ++p) {
      CHECK(a[i].modalities[p].data == b[i].modalities[p].data);
      differs = differs || a[i].modalities[p].data != c[i].modalities[p].data;
    }
  }
  CHECK(differs);
  CHECK(a[0].modalities[0].data.rows() == 3);
  CHECK(a[0].modalities[2].data.cols() == 2);
}

TEST_CASE("generator rejects invalid configs") {
  SynthConfig c;
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SynthConfig{};
  c.n_train = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SynthConfig{};
  c.informativeness = {1.0, -0.1, 0.5};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SynthConfig{};
  c.seq_lens = {4, 4};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("informativeness orders modality probes") {
  SynthConfig c;
  c.n_train = 2000;
  c.informativeness = {1.0, 0.2, 0.2};
  c.seed = 11;
  const auto data = generate(c);
  const double l = probe_accuracy(data, 0, c.num_classes);
  const double a = probe_accuracy(data, 1, c.num_classes);
  CHECK(l > a);

  c.informativeness = {0.0, 0.0, 0.0};
  const auto none = generate(c);
  for (int p = 0; p < 3; ++p) CHECK(std::abs(probe_accuracy(none, p, c.num_classes) - 0.25) < 0.06);
}

TEST_CASE("fixed protocol sets every mask") {
  const auto data = small_set(9);
  const auto full = apply_fixed(data, 7);
  for (const auto& s : full) CHECK(s.mask == AvailabilityMask::complete(3));
  const auto l_only = apply_fixed(data, 1);
  for (const auto& s : l_only) CHECK(s.mask == AvailabilityMask({1, 0, 0}));
  CHECK(compute_mr(apply_fixed(data, 3)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS((void)apply_fixed(data, 0), InvalidArgument);
}

TEST_CASE("random protocol drops the exact slot count") {
  const auto data = small_set(1000);
  const auto dropped = apply_random(data, 0.3, 42);
  int absent = 0;
  for (const auto& s : dropped) {
    absent += 3 - s.mask.count();
    CHECK(s.mask.count() >= 1);
  }
  CHECK(absent == 900);
  CHECK(compute_mr(dropped) == doctest::Approx(0.3).epsilon(1e-15));

  const auto again = apply_random(data, 0.3, 42);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(again[i].mask == dropped[i].mask);

  const auto saturated = apply_random(data, 2.0 / 3.0 - 1e-9, 5);
  int extra = 0;
  for (const auto& s : saturated) extra += s.mask.count() - 1;
  CHECK(extra <= 1);

  CHECK_THROWS_AS((void)apply_random(data, 0.7, 1), InvalidArgument);
  CHECK_THROWS_AS((void)apply_random(data, -0.1, 1), InvalidArgument);
}

TEST_CASE("random protocol never empties a mask") {
  const auto data = small_set(50);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (const auto& s : apply_random(data, 0.6, seed)) CHECK(s.mask.count() >= 1);
  }
}
