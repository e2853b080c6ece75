// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "datamodel.hpp"

#include "errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <sstream>

namespace mcur {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw InvalidArgument("unknown task kind '" + s + "'");
}

void ModalityTensor::validate() const {
  if (data.rows() < 1 || data.cols() < 1) {
    throw InvalidArgument("modality " + std::to_string(modality) + ": empty tensor");
  }
  if (!data.allFinite()) throw NumericalError("modality " + std::to_string(modality) + ": non-finite entry");
}

AvailabilityMask::AvailabilityMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw InvalidArgument("availability mask needs at least one modality");
  for (auto b : bits_) {
    if (b > 1) throw InvalidArgument("availability mask entries must be 0 or 1");
  }
  if (count() == 0) throw InvalidArgument("availability mask has no available modality");
}

AvailabilityMask AvailabilityMask::complete(int m) {
  return AvailabilityMask(std::vector<std::uint8_t>(static_cast<std::size_t>(m), 1));
}

AvailabilityMask AvailabilityMask::from_combination(std::uint32_t id, int m) {
  if (m < 1 || m > 16) throw InvalidArgument("modality count must be in [1, 16]");
  if (id < 1 || id > full_combination(m)) {
    throw InvalidArgument("combination id " + std::to_string(id) + " outside [1, " +
                          std::to_string(full_combination(m)) + "]");
  }
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p) bits[static_cast<std::size_t>(p)] = (id >> p) & 1U;
  return AvailabilityMask(std::move(bits));
}

int AvailabilityMask::count() const { return std::accumulate(bits_.begin(), bits_.end(), 0); }

CombinationId combination_id(const AvailabilityMask& mask) {
  if (mask.modalities() == 0 || mask.count() == 0) throw InvalidArgument("combination_id of an empty mask");
  CombinationId id = 0;
  for (int p = 0; p < mask.modalities(); ++p) {
    if (mask.available(p)) id |= (1U << p);
  }
  return id;
}

CombinationId full_combination(int m) { return (1U << m) - 1U; }

namespace {
constexpr std::array<const char*, 3> kLavNames{"L", "A", "V"};

std::string modality_name(int p, int m) {
  if (m == 3) return kLavNames[static_cast<std::size_t>(p)];
  return "M" + std::to_string(p);
}
}  // namespace

std::string combination_label(CombinationId id, int m) {
  std::string out;
  for (int p = 0; p < m; ++p) {
    if ((id >> p) & 1U) {
      if (!out.empty()) out += ",";
      out += modality_name(p, m);
    }
  }
  return out;
}

CombinationId combination_from_label(const std::string& label, int m) {
  CombinationId id = 0;
  std::stringstream ss(label);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }), tok.end());
    int found = -1;
    for (int p = 0; p < m; ++p) {
      if (tok == modality_name(p, m) || tok == std::to_string(p)) found = p;
    }
    if (found < 0) throw InvalidArgument("unknown modality '" + tok + "' in pattern '" + label + "'");
    id |= (1U << found);
  }
  if (id == 0) throw InvalidArgument("empty modality pattern '" + label + "'");
  return id;
}

Label Label::classification(int class_index, int num_classes) {
  if (num_classes < 2) throw InvalidArgument("classification needs K >= 2");
  if (class_index < 0 || class_index >= num_classes) throw InvalidArgument("class index out of range");
  return Label{TaskKind::classification, class_index, 0.0, num_classes};
}

Label Label::regression(double value) { return Label{TaskKind::regression, 0, value, 1}; }

void Batch::validate() const {
  if (samples.empty()) throw InvalidArgument("empty batch");
  const auto& first = *samples.front();
  for (const auto* s : samples) {
    if (s->modalities.size() != first.modalities.size()) throw InvalidArgument("batch mixes modality counts");
    if (s->label.kind != first.label.kind || s->label.num_classes != first.label.num_classes) {
      throw InvalidArgument("batch mixes label kinds or class counts");
    }
  }
}

double compute_mr(std::span<const AvailabilityMask> masks, int m) {
  if (masks.empty()) throw InvalidArgument("compute_mr of an empty mask list");
  if (m < 1) throw InvalidArgument("compute_mr: m must be positive");
  long long available = 0;
  for (const auto& mask : masks) {
    if (mask.modalities() != m) throw InvalidArgument("compute_mr: mask length differs from m");
    if (mask.count() == 0) throw InvalidArgument("compute_mr: all-zero mask");
    available += mask.count();
  }
  return 1.0 - static_cast<double>(available) / (static_cast<double>(masks.size()) * m);
}

double compute_mr(std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("compute_mr of an empty dataset");
  std::vector<AvailabilityMask> masks;
  masks.reserve(samples.size());
  for (const auto& s : samples) masks.push_back(s.mask);
  return compute_mr(masks, masks.front().modalities());
}

}  // namespace mcur
