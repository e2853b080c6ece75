// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace mcur {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); streams never share state.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x6d637572U};
  return Rng(seq);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return make_rng(seed, stream)(); }

}  // namespace mcur
