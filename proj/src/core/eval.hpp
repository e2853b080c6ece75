// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics and the missing-modality scenario sweep. Evaluation always runs the
// VIB head in mean mode, so results are a deterministic function of
// (model, data, scenario, seed).

#pragma once

#include "backbone.hpp"
#include "datamodel.hpp"
#include "synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mcur {

/// How regression labels equal to zero enter binary metrics.
enum class ZeroLabelPolicy { exclude, negative };

[[nodiscard]] std::string to_string(ZeroLabelPolicy policy);
[[nodiscard]] ZeroLabelPolicy zero_label_policy_from_string(const std::string& s);

struct ScenarioSpec {
  MissingProtocol::Kind kind = MissingProtocol::Kind::fixed;
  CombinationId pattern = 0;  // fixed scenarios
  double mr = 0.0;            // random scenarios, as requested (before clamping)
  std::string label;          // "L,A" or "0.3"

  /// "fixed" or "random".
  [[nodiscard]] std::string kind_name() const;
  /// Parseable form, e.g. "fixed:L,A" or "random:0.3".
  [[nodiscard]] std::string key() const;
};

/// The 2^m - 1 fixed patterns (fewest modalities first) followed by MR 0.1 .. 0.7.
[[nodiscard]] std::vector<ScenarioSpec> canonical_scenarios(int modalities);
/// Parses "fixed:<pattern>" or "random:<mr>".
[[nodiscard]] ScenarioSpec parse_scenario(const std::string& text, int modalities);
/// Expands "canonical" and parses everything else; empty input means canonical.
[[nodiscard]] std::vector<ScenarioSpec> parse_scenarios(const std::vector<std::string>& texts, int modalities);

// ---- metrics -----------------------------------------------------------------

struct BinaryMetrics {
  double acc = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
};

/// Positive iff value > 0. Zero labels are dropped (exclude) or counted as
/// negative. Throws MetricError when no sample remains.
[[nodiscard]] BinaryMetrics binary_metrics(std::span<const double> preds, std::span<const double> labels,
                                           ZeroLabelPolicy policy = ZeroLabelPolicy::exclude);

struct MulticlassMetrics {
  double acc = 0.0;
  double f1 = 0.0;
};

/// Support-weighted recall (= accuracy) and support-weighted F1 over argmax
/// predictions. Classes with zero support carry zero weight.
[[nodiscard]] MulticlassMetrics weighted_multiclass_metrics(const Matrix& logits, std::span<const int> labels);
[[nodiscard]] MulticlassMetrics weighted_multiclass_metrics(std::span<const int> predictions,
                                                            std::span<const int> labels, int num_classes);

/// mean (p - y)^2 over paired probabilities and {0,1} targets.
[[nodiscard]] double brier_score(std::span<const double> probs, std::span<const double> targets);
/// -mean [y ln p + (1 - y) ln(1 - p)], p clamped to [1e-12, 1 - 1e-12].
[[nodiscard]] double nll_score(std::span<const double> probs, std::span<const double> targets);

/// Probability/target pairs a model output reduces to: sigmoid of the scalar
/// prediction against the sign of the label (regression), or the one-vs-all
/// expansion of softmax probabilities against the one-hot label.
struct CalibrationPairs {
  std::vector<double> probs;
  std::vector<double> targets;
};
[[nodiscard]] CalibrationPairs calibration_pairs(const Matrix& outputs, std::span<const Label> labels,
                                                 ZeroLabelPolicy policy = ZeroLabelPolicy::exclude);

[[nodiscard]] double brier(const Matrix& outputs, std::span<const Label> labels,
                           ZeroLabelPolicy policy = ZeroLabelPolicy::exclude);
[[nodiscard]] double nll(const Matrix& outputs, std::span<const Label> labels,
                         ZeroLabelPolicy policy = ZeroLabelPolicy::exclude);

struct MetricSet {
  double acc = 0.0;
  double f1 = 0.0;
  double brier = 0.0;
  double nll = 0.0;
};

/// ACC/F1 (binary for regression, weighted for classification) plus Brier/NLL.
[[nodiscard]] MetricSet compute_metrics(const Matrix& outputs, std::span<const Label> labels,
                                        ZeroLabelPolicy policy = ZeroLabelPolicy::exclude);

// ---- the suite -----------------------------------------------------------------

struct ScenarioResult {
  ScenarioSpec scenario;
  std::uint64_t seed = 0;
  MetricSet metrics;
  std::size_t n_eval = 0;
  double achieved_mr = 0.0;
  /// Empty on success; otherwise the metric/runtime error message.
  std::string error;

  [[nodiscard]] bool ok() const { return error.empty(); }
};

struct ScenarioSummary {
  ScenarioSpec scenario;
  MetricSet mean;
  /// Half-width 1.96 * s / sqrt(n) across seeds (0 for a single seed).
  MetricSet ci95;
  std::size_t n_seeds = 0;
  std::vector<std::string> errors;
};

struct EvalOptions {
  std::vector<ScenarioSpec> scenarios;
  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
  ZeroLabelPolicy zero_policy = ZeroLabelPolicy::exclude;
};

struct SuiteResult {
  std::vector<ScenarioResult> rows;          // scenario-major, then seed
  std::vector<ScenarioSummary> scenarios;    // one per scenario
  MetricSet average;                         // unweighted mean of scenario means
  std::vector<std::pair<std::uint64_t, MetricSet>> average_by_seed;
  bool any_failure = false;
};

/// Masks `data` per scenario and seed, evaluates `model` in mean mode, and
/// aggregates. A failing scenario is recorded and the suite continues.
[[nodiscard]] SuiteResult run_suite(const Backbone& model, const std::vector<Sample>& data, const EvalOptions& options);

/// The masked copy of `data` a scenario evaluates on. Random targets above
/// (m-1)/m are clamped to (m-1)/m.
[[nodiscard]] std::vector<Sample> scenario_data(const std::vector<Sample>& data, const ScenarioSpec& scenario,
                                                std::uint64_t seed);

struct Provenance {
  std::string config_hash;
  std::string version;
};

/// scenario,label,seed,acc,f1,brier,nll; one row per scenario x seed, then one
/// Avg. row per seed.
[[nodiscard]] std::string results_csv(const SuiteResult& result);
[[nodiscard]] nlohmann::json results_json(const SuiteResult& result, const Provenance& provenance);
/// Line chart of mean NLL and Brier against MR for the random scenarios.
[[nodiscard]] std::string uncertainty_plot_svg(const SuiteResult& result);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mcur
