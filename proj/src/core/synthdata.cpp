// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthdata.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mcur {

void SynthConfig::validate() const {
  if (n_train == 0) throw InvalidArgument("data.n_train must be >= 1");
  if (n_test == 0) throw InvalidArgument("data.n_test must be >= 1");
  if (modalities < 1 || modalities > 16) throw InvalidArgument("data.modalities must be in [1, 16]");
  if (task == TaskKind::classification && num_classes < 2) {
    throw InvalidArgument("data.num_classes must be >= 2 for classification");
  }
  const auto m = static_cast<std::size_t>(modalities);
  auto check_len = [m](std::size_t n, const char* field) {
    if (n != m) throw InvalidArgument(std::string("data.") + field + " must have one entry per modality");
  };
  check_len(informativeness.size(), "informativeness");
  check_len(noise.size(), "noise");
  check_len(seq_lens.size(), "seq_lens");
  check_len(feature_dims.size(), "feature_dims");
  for (double w : informativeness) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("data.informativeness entries must be >= 0");
  }
  for (double s : noise) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("data.noise entries must be >= 0");
  }
  for (int t : seq_lens) {
    if (t < 1) throw InvalidArgument("data.seq_lens entries must be >= 1");
  }
  for (int d : feature_dims) {
    if (d < 1) throw InvalidArgument("data.feature_dims entries must be >= 1");
  }
  if (!(noise_intensity >= 0.0)) throw InvalidArgument("data.noise_intensity must be >= 0");
}

MissingProtocol MissingProtocol::fixed(CombinationId pattern) {
  MissingProtocol p;
  p.kind = Kind::fixed;
  p.fixed_pattern = pattern;
  return p;
}

MissingProtocol MissingProtocol::random(double target_mr, std::uint64_t seed) {
  MissingProtocol p;
  p.kind = Kind::random;
  p.target_mr = target_mr;
  p.seed = seed;
  return p;
}

namespace {

constexpr std::uint64_t kMapStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kTestStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

/// Latent width: K for classification, 1 for regression.
int latent_dim(const SynthConfig& c) { return c.task == TaskKind::classification ? c.num_classes : 1; }

std::vector<Matrix> make_maps(const SynthConfig& c) {
  auto rng = make_rng(c.seed, kMapStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> maps;
  for (int p = 0; p < c.modalities; ++p) {
    Matrix a(c.feature_dims[static_cast<std::size_t>(p)], latent_dim(c));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    maps.push_back(std::move(a));
  }
  return maps;
}

std::vector<Sample> draw(const SynthConfig& c, const std::vector<Matrix>& maps, std::size_t n,
                         std::uint64_t stream, std::int64_t id_offset) {
  auto rng = make_rng(c.seed, stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> klass(0, std::max(c.num_classes - 1, 0));
  std::uniform_real_distribution<double> level(-3.0, 3.0);
  const int z_dim = latent_dim(c);

  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.sample_id = id_offset + static_cast<std::int64_t>(i);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(z_dim);
    if (c.task == TaskKind::classification) {
      const int k = klass(rng);
      z(k) = 1.0;
      z.array() -= 1.0 / c.num_classes;
      s.label = Label::classification(k, c.num_classes);
    } else {
      const double y = level(rng);
      z(0) = y / 3.0;
      s.label = Label::regression(y);
    }
    for (int p = 0; p < c.modalities; ++p) {
      const auto up = static_cast<std::size_t>(p);
      const int t = c.seq_lens[up];
      const int d = c.feature_dims[up];
      Eigen::RowVectorXd signal = (c.informativeness[up] * (maps[up] * z)).transpose();
      Eigen::RowVectorXd offset(d);
      for (int j = 0; j < d; ++j) offset(j) = normal(rng);
      Matrix x(t, d);
      for (int r = 0; r < t; ++r) {
        for (int j = 0; j < d; ++j) x(r, j) = signal(j) + c.noise[up] * (offset(j) + normal(rng));
      }
      s.modalities.push_back(ModalityTensor{p, std::move(x)});
    }
    s.mask = AvailabilityMask::complete(c.modalities);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<Sample> generate(const SynthConfig& config) { return generate_dataset(config).train; }

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  const auto maps = make_maps(config);
  Dataset ds;
  ds.config = config;
  ds.train = draw(config, maps, config.n_train, kTrainStream, 0);
  ds.test = draw(config, maps, config.n_test, kTestStream, static_cast<std::int64_t>(config.n_train));
  if (config.noise_intensity > 0.0) {
    ds.train = add_noise(std::move(ds.train), config.noise_intensity, derive_seed(config.seed, kNoiseStream));
    ds.test = add_noise(std::move(ds.test), config.noise_intensity, derive_seed(config.seed, kNoiseStream + 1));
  }
  return ds;
}

std::vector<Sample> apply_fixed(std::vector<Sample> samples, CombinationId pattern) {
  for (auto& s : samples) s.mask = AvailabilityMask::from_combination(pattern, static_cast<int>(s.modalities.size()));
  return samples;
}

std::vector<Sample> apply_random(std::vector<Sample> samples, double target_mr, std::uint64_t seed) {
  if (samples.empty()) throw InvalidArgument("apply_random on an empty dataset");
  const int m = static_cast<int>(samples.front().modalities.size());
  const double max_mr = static_cast<double>(m - 1) / m;
  if (!(target_mr > 0.0)) throw InvalidArgument("apply_random: target MR must be > 0");
  if (target_mr > max_mr + 1e-12) {
    throw InvalidArgument("apply_random: target MR " + std::to_string(target_mr) + " exceeds (m-1)/m = " +
                          std::to_string(max_mr));
  }
  const std::size_t n = samples.size();
  const std::size_t slots = n * static_cast<std::size_t>(m);
  auto to_drop = static_cast<std::size_t>(std::llround(target_mr * static_cast<double>(slots)));
  to_drop = std::min(to_drop, n * static_cast<std::size_t>(m - 1));

  std::vector<std::size_t> order(slots);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::uint8_t>> bits(n, std::vector<std::uint8_t>(static_cast<std::size_t>(m), 1));
  std::vector<int> remaining(n, m);
  std::size_t dropped = 0;
  // Walking a uniform permutation and skipping slots that would empty a
  // sample is the repair loop: a skipped slot is replaced by the next
  // candidate. Feasibility (to_drop <= N(m-1)) guarantees termination.
  for (std::size_t k = 0; k < slots && dropped < to_drop; ++k) {
    const std::size_t i = order[k] / static_cast<std::size_t>(m);
    const std::size_t p = order[k] % static_cast<std::size_t>(m);
    if (remaining[i] <= 1) continue;
    bits[i][p] = 0;
    --remaining[i];
    ++dropped;
  }
  for (std::size_t i = 0; i < n; ++i) samples[i].mask = AvailabilityMask(std::move(bits[i]));
  return samples;
}

std::vector<Sample> apply_protocol(std::vector<Sample> samples, const MissingProtocol& protocol) {
  if (protocol.kind == MissingProtocol::Kind::fixed) {
    if (!protocol.fixed_pattern || protocol.target_mr) throw InvalidArgument("fixed protocol needs only a pattern");
    return apply_fixed(std::move(samples), *protocol.fixed_pattern);
  }
  if (!protocol.target_mr || protocol.fixed_pattern) throw InvalidArgument("random protocol needs only a target MR");
  return apply_random(std::move(samples), *protocol.target_mr, protocol.seed);
}

std::vector<Sample> add_noise(std::vector<Sample> samples, double intensity, std::uint64_t seed) {
  if (!(intensity >= 0.0)) throw InvalidArgument("noise intensity must be >= 0");
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& s : samples) {
    for (auto& mt : s.modalities) {
      for (Eigen::Index i = 0; i < mt.data.size(); ++i) mt.data.data()[i] += intensity * normal(rng);
    }
  }
  return samples;
}

}  // namespace mcur
