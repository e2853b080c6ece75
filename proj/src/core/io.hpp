// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. Both are a directory holding manifest.json plus flat
// little-endian arrays:
//   dataset:    {split}_x{p}.f64 (N, t_p, d_p), {split}_y.f64 (N),
//               {split}_mask.u8 (N, m), {split}_id.i64 (N)
//   checkpoint: params.bin, every parameter row-major float64 in manifest order

#pragma once

#include "synthdata.hpp"
#include "training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mcur {

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const nlohmann::json& provenance = {});
/// Throws IoError on missing files and IncompatibleError on shape mismatches.
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& dir);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir,
                     const nlohmann::json& provenance = {});
/// Rebuilds the backbone from the manifest and verifies every parameter's
/// name, shape and the stored content hash.
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a 64 over parameter names, shapes and raw bytes, as 16 hex digits.
[[nodiscard]] std::string parameter_hash(const Backbone& model);

[[nodiscard]] nlohmann::json to_json(const ModelShape& shape);
[[nodiscard]] ModelShape model_shape_from_json(const nlohmann::json& j);

}  // namespace mcur
