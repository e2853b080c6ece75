// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "eval.hpp"

#include "errors.hpp"
#include "training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace mcur {

std::string to_string(ZeroLabelPolicy policy) { return policy == ZeroLabelPolicy::exclude ? "exclude" : "negative"; }

ZeroLabelPolicy zero_label_policy_from_string(const std::string& s) {
  if (s == "exclude") return ZeroLabelPolicy::exclude;
  if (s == "negative") return ZeroLabelPolicy::negative;
  throw InvalidArgument("unknown zero-label policy '" + s + "' (expected exclude or negative)");
}

std::string ScenarioSpec::kind_name() const { return kind == MissingProtocol::Kind::fixed ? "fixed" : "random"; }

std::string ScenarioSpec::key() const { return kind_name() + ":" + label; }

namespace {

std::string mr_label(double mr) {
  std::ostringstream os;
  os << mr;
  return os.str();
}

}  // namespace

std::vector<ScenarioSpec> canonical_scenarios(int modalities) {
  const CombinationId full = full_combination(modalities);
  std::vector<CombinationId> ids;
  for (CombinationId c = 1; c <= full; ++c) ids.push_back(c);
  std::stable_sort(ids.begin(), ids.end(),
                   [](CombinationId a, CombinationId b) { return std::popcount(a) < std::popcount(b); });
  std::vector<ScenarioSpec> out;
  for (CombinationId c : ids) {
    out.push_back({MissingProtocol::Kind::fixed, c, 0.0, combination_label(c, modalities)});
  }
  for (int k = 1; k <= 7; ++k) {
    const double mr = k / 10.0;
    out.push_back({MissingProtocol::Kind::random, 0, mr, mr_label(mr)});
  }
  return out;
}

ScenarioSpec parse_scenario(const std::string& text, int modalities) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw InvalidArgument("scenario '" + text + "' must look like fixed:<pattern> or random:<mr>");
  }
  const std::string kind = text.substr(0, colon);
  const std::string body = text.substr(colon + 1);
  if (kind == "fixed") {
    const CombinationId c = combination_from_label(body, modalities);
    return {MissingProtocol::Kind::fixed, c, 0.0, combination_label(c, modalities)};
  }
  if (kind == "random") {
    std::size_t used = 0;
    double mr = 0.0;
    try {
      mr = std::stod(body, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != body.size() || body.empty()) throw InvalidArgument("scenario '" + text + "': MR is not a number");
    if (!(mr > 0.0) || mr >= 1.0) throw InvalidArgument("scenario '" + text + "': MR must lie in (0, 1)");
    return {MissingProtocol::Kind::random, 0, mr, mr_label(mr)};
  }
  throw InvalidArgument("scenario '" + text + "': unknown kind '" + kind + "' (expected fixed or random)");
}

std::vector<ScenarioSpec> parse_scenarios(const std::vector<std::string>& texts, int modalities) {
  if (texts.empty()) return canonical_scenarios(modalities);
  std::vector<ScenarioSpec> out;
  for (const auto& t : texts) {
    if (t == "canonical") {
      auto c = canonical_scenarios(modalities);
      out.insert(out.end(), c.begin(), c.end());
    } else {
      out.push_back(parse_scenario(t, modalities));
    }
  }
  return out;
}

// ---- metrics -----------------------------------------------------------------

BinaryMetrics binary_metrics(std::span<const double> preds, std::span<const double> labels, ZeroLabelPolicy policy) {
  if (preds.size() != labels.size()) throw InvalidArgument("binary_metrics: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0, n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isfinite(preds[i])) throw NumericalError("binary_metrics: non-finite prediction");
    if (labels[i] == 0.0 && policy == ZeroLabelPolicy::exclude) continue;
    const bool p = preds[i] > 0.0;
    const bool y = labels[i] > 0.0;
    ++n;
    if (p == y) ++correct;
    if (p && y) ++tp;
    if (p && !y) ++fp;
    if (!p && y) ++fn;
  }
  if (n == 0) throw MetricError("binary metrics undefined: every sample was excluded");
  BinaryMetrics m;
  m.n = n;
  m.acc = static_cast<double>(correct) / static_cast<double>(n);
  const double denom = static_cast<double>(2 * tp + fp + fn);
  m.f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  return m;
}

MulticlassMetrics weighted_multiclass_metrics(std::span<const int> predictions, std::span<const int> labels,
                                              int num_classes) {
  if (predictions.size() != labels.size()) throw InvalidArgument("multiclass metrics: length mismatch");
  if (num_classes < 2) throw InvalidArgument("multiclass metrics need K >= 2");
  if (labels.empty()) throw MetricError("multiclass metrics on an empty set");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0), support(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes) throw InvalidArgument("class index out of range");
    support[static_cast<std::size_t>(y)] += 1.0;
    if (p == y) {
      tp[static_cast<std::size_t>(y)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
      fn[static_cast<std::size_t>(y)] += 1.0;
    }
  }
  const double n = static_cast<double>(labels.size());
  MulticlassMetrics m;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0.0) continue;
    const double w = support[c] / n;
    m.acc += w * tp[c] / support[c];
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    m.f1 += w * (denom > 0.0 ? 2.0 * tp[c] / denom : 0.0);
  }
  return m;
}

MulticlassMetrics weighted_multiclass_metrics(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw InvalidArgument("multiclass metrics: row mismatch");
  std::vector<int> preds(labels.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!logits.row(i).allFinite()) throw NumericalError("multiclass metrics: non-finite logits");
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    preds[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return weighted_multiclass_metrics(preds, labels, static_cast<int>(logits.cols()));
}

double brier_score(std::span<const double> probs, std::span<const double> targets) {
  if (probs.size() != targets.size()) throw InvalidArgument("brier: length mismatch");
  if (probs.empty()) throw MetricError("brier on an empty evaluation set");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += (probs[i] - targets[i]) * (probs[i] - targets[i]);
  return s / static_cast<double>(probs.size());
}

double nll_score(std::span<const double> probs, std::span<const double> targets) {
  if (probs.size() != targets.size()) throw InvalidArgument("nll: length mismatch");
  if (probs.empty()) throw MetricError("nll on an empty evaluation set");
  constexpr double kEps = 1e-12;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kEps, 1.0 - kEps);
    s -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log1p(-p);
  }
  return s / static_cast<double>(probs.size());
}

CalibrationPairs calibration_pairs(const Matrix& outputs, std::span<const Label> labels, ZeroLabelPolicy policy) {
  if (static_cast<std::size_t>(outputs.rows()) != labels.size()) throw InvalidArgument("calibration: row mismatch");
  if (labels.empty()) throw MetricError("calibration metrics on an empty set");
  if (!outputs.allFinite()) throw NumericalError("calibration: non-finite model outputs");
  CalibrationPairs out;
  const TaskKind kind = labels.front().kind;
  if (kind == TaskKind::regression) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double y = labels[i].value;
      if (y == 0.0 && policy == ZeroLabelPolicy::exclude) continue;
      const double z = outputs(static_cast<Eigen::Index>(i), 0);
      out.probs.push_back(1.0 / (1.0 + std::exp(-z)));
      out.targets.push_back(y > 0.0 ? 1.0 : 0.0);
    }
    if (out.probs.empty()) throw MetricError("calibration undefined: every sample was excluded");
    return out;
  }
  const Eigen::Index k = outputs.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::RowVectorXd row = outputs.row(static_cast<Eigen::Index>(i));
    const Eigen::RowVectorXd e = (row.array() - row.maxCoeff()).exp();
    const Eigen::RowVectorXd p = e / e.sum();
    const int y = labels[i].class_index;
    if (y < 0 || y >= k) throw InvalidArgument("class index out of range");
    for (Eigen::Index c = 0; c < k; ++c) {
      out.probs.push_back(p(c));
      out.targets.push_back(c == y ? 1.0 : 0.0);
    }
  }
  return out;
}

double brier(const Matrix& outputs, std::span<const Label> labels, ZeroLabelPolicy policy) {
  const auto pairs = calibration_pairs(outputs, labels, policy);
  return brier_score(pairs.probs, pairs.targets);
}

double nll(const Matrix& outputs, std::span<const Label> labels, ZeroLabelPolicy policy) {
  const auto pairs = calibration_pairs(outputs, labels, policy);
  return nll_score(pairs.probs, pairs.targets);
}

MetricSet compute_metrics(const Matrix& outputs, std::span<const Label> labels, ZeroLabelPolicy policy) {
  if (labels.empty()) throw MetricError("metrics on an empty evaluation set");
  MetricSet m;
  if (labels.front().kind == TaskKind::regression) {
    std::vector<double> preds(labels.size()), ys(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      preds[i] = outputs(static_cast<Eigen::Index>(i), 0);
      ys[i] = labels[i].value;
    }
    const auto b = binary_metrics(preds, ys, policy);
    m.acc = b.acc;
    m.f1 = b.f1;
  } else {
    std::vector<int> ys(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) ys[i] = labels[i].class_index;
    const auto w = weighted_multiclass_metrics(outputs, ys);
    m.acc = w.acc;
    m.f1 = w.f1;
  }
  const auto pairs = calibration_pairs(outputs, labels, policy);
  m.brier = brier_score(pairs.probs, pairs.targets);
  m.nll = nll_score(pairs.probs, pairs.targets);
  return m;
}

// ---- suite -----------------------------------------------------------------------

std::vector<Sample> scenario_data(const std::vector<Sample>& data, const ScenarioSpec& scenario, std::uint64_t seed) {
  if (data.empty()) throw InvalidArgument("empty evaluation set");
  if (scenario.kind == MissingProtocol::Kind::fixed) return apply_fixed(data, scenario.pattern);
  const int m = static_cast<int>(data.front().modalities.size());
  const double target = std::min(scenario.mr, static_cast<double>(m - 1) / m);
  const auto stream = static_cast<std::uint64_t>(std::llround(scenario.mr * 1000.0)) + 0x5ce0;
  return apply_random(data, target, derive_seed(seed, stream));
}

namespace {

ScenarioResult evaluate_one(Backbone& model, const std::vector<Sample>& data, const ScenarioSpec& scenario,
                            std::uint64_t seed, ZeroLabelPolicy policy) {
  ScenarioResult r;
  r.scenario = scenario;
  r.seed = seed;
  try {
    const auto masked = scenario_data(data, scenario, seed);
    r.achieved_mr = compute_mr(masked);
    const Matrix out = predict(model, masked);
    std::vector<Label> labels;
    labels.reserve(masked.size());
    for (const auto& s : masked) labels.push_back(s.label);
    r.metrics = compute_metrics(out, labels, policy);
    r.n_eval = masked.size();
  } catch (const std::exception& e) {
    r.error = e.what();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.metrics = {nan, nan, nan, nan};
  }
  return r;
}

MetricSet mean_of(const std::vector<MetricSet>& v) {
  MetricSet m;
  if (v.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan};
  }
  for (const auto& x : v) {
    m.acc += x.acc;
    m.f1 += x.f1;
    m.brier += x.brier;
    m.nll += x.nll;
  }
  const double n = static_cast<double>(v.size());
  return {m.acc / n, m.f1 / n, m.brier / n, m.nll / n};
}

MetricSet ci_of(const std::vector<MetricSet>& v, const MetricSet& mean) {
  if (v.size() < 2) return {};
  MetricSet s;
  for (const auto& x : v) {
    s.acc += (x.acc - mean.acc) * (x.acc - mean.acc);
    s.f1 += (x.f1 - mean.f1) * (x.f1 - mean.f1);
    s.brier += (x.brier - mean.brier) * (x.brier - mean.brier);
    s.nll += (x.nll - mean.nll) * (x.nll - mean.nll);
  }
  const double n = static_cast<double>(v.size());
  const double k = 1.96 / std::sqrt(n);
  return {k * std::sqrt(s.acc / (n - 1)), k * std::sqrt(s.f1 / (n - 1)), k * std::sqrt(s.brier / (n - 1)),
          k * std::sqrt(s.nll / (n - 1))};
}

}  // namespace

SuiteResult run_suite(const Backbone& model, const std::vector<Sample>& data, const EvalOptions& options) {
  if (data.empty()) throw InvalidArgument("empty evaluation set");
  if (options.seeds.empty()) throw InvalidArgument("at least one evaluation seed is required");
  const ModelShape shape = model_shape_for(data);
  if (!(shape == model.shape())) throw IncompatibleError("model and dataset shapes differ (m, feature dims or K)");
  const auto scenarios = options.scenarios.empty() ? canonical_scenarios(shape.modalities) : options.scenarios;

  const std::size_t n_tasks = scenarios.size() * options.seeds.size();
  SuiteResult result;
  result.rows.resize(n_tasks);
  const auto run_range = [&](std::size_t worker, std::size_t workers) {
    Backbone local = model;
    for (std::size_t t = worker; t < n_tasks; t += workers) {
      const auto& sc = scenarios[t / options.seeds.size()];
      const auto seed = options.seeds[t % options.seeds.size()];
      result.rows[t] = evaluate_one(local, data, sc, seed, options.zero_policy);
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(options.jobs, 1, 64));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
    for (auto& th : pool) th.join();
  }

  std::vector<MetricSet> scenario_means;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    ScenarioSummary summary;
    summary.scenario = scenarios[s];
    std::vector<MetricSet> ok;
    for (std::size_t k = 0; k < options.seeds.size(); ++k) {
      const auto& row = result.rows[s * options.seeds.size() + k];
      if (row.ok()) {
        ok.push_back(row.metrics);
      } else {
        summary.errors.push_back(row.error);
        result.any_failure = true;
      }
    }
    summary.n_seeds = ok.size();
    summary.mean = mean_of(ok);
    summary.ci95 = ci_of(ok, summary.mean);
    if (!ok.empty()) scenario_means.push_back(summary.mean);
    result.scenarios.push_back(std::move(summary));
  }
  result.average = mean_of(scenario_means);
  for (std::size_t k = 0; k < options.seeds.size(); ++k) {
    std::vector<MetricSet> per_seed;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const auto& row = result.rows[s * options.seeds.size() + k];
      if (row.ok()) per_seed.push_back(row.metrics);
    }
    result.average_by_seed.emplace_back(options.seeds[k], mean_of(per_seed));
  }
  return result;
}

// ---- writers -------------------------------------------------------------------

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json metrics_json(const MetricSet& m) {
  const auto v = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
  return {{"acc", v(m.acc)}, {"f1", v(m.f1)}, {"brier", v(m.brier)}, {"nll", v(m.nll)}};
}

}  // namespace

std::string results_csv(const SuiteResult& result) {
  std::string out = "scenario,label,seed,acc,f1,brier,nll\n";
  const auto line = [&](const std::string& kind, const std::string& label, std::uint64_t seed, const MetricSet& m) {
    out += kind + "," + csv_field(label) + "," + std::to_string(seed) + "," + num(m.acc) + "," + num(m.f1) + "," +
           num(m.brier) + "," + num(m.nll) + "\n";
  };
  for (const auto& r : result.rows) line(r.scenario.kind_name(), r.scenario.label, r.seed, r.metrics);
  for (const auto& [seed, m] : result.average_by_seed) line("avg", "Avg.", seed, m);
  return out;
}

nlohmann::json results_json(const SuiteResult& result, const Provenance& provenance) {
  nlohmann::json scenarios = nlohmann::json::array();
  for (const auto& s : result.scenarios) {
    scenarios.push_back({{"scenario", s.scenario.key()},
                         {"kind", s.scenario.kind_name()},
                         {"label", s.scenario.label},
                         {"n_seeds", s.n_seeds},
                         {"mean", metrics_json(s.mean)},
                         {"ci95", metrics_json(s.ci95)},
                         {"errors", s.errors}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    nlohmann::json row = {{"scenario", r.scenario.key()}, {"seed", r.seed},       {"n_eval", r.n_eval},
                          {"achieved_mr", r.achieved_mr}, {"metrics", metrics_json(r.metrics)}};
    if (!r.ok()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  return {{"version", provenance.version},
          {"config_hash", provenance.config_hash},
          {"scenarios", std::move(scenarios)},
          {"average", metrics_json(result.average)},
          {"rows", std::move(rows)},
          {"any_failure", result.any_failure}};
}

std::string uncertainty_plot_svg(const SuiteResult& result) {
  std::vector<std::pair<double, MetricSet>> points;
  for (const auto& s : result.scenarios) {
    if (s.scenario.kind == MissingProtocol::Kind::random && s.n_seeds > 0) points.emplace_back(s.scenario.mr, s.mean);
  }
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const double w = 480, h = 300, left = 50, right = 20, top = 20, bottom = 40;
  double ymax = 1e-9;
  for (const auto& [mr, m] : points) ymax = std::max({ymax, m.nll, m.brier});
  ymax *= 1.1;
  const auto px = [&](double mr) { return left + (mr / 0.8) * (w - left - right); };
  const auto py = [&](double v) { return top + (1.0 - v / ymax) * (h - top - bottom); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\" font-size=\"12\">MR</text>\n";
  for (const auto& [mr, m] : points) {
    os << "<text x=\"" << px(mr) << "\" y=\"" << h - bottom + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << mr_label(mr) << "</text>\n";
  }
  const auto series = [&](const char* name, const char* color, auto pick, int row) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [mr, m] : points) os << px(mr) << "," << py(pick(m)) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 * row << "\" fill=\"" << color
       << "\" font-size=\"12\">" << name << "</text>\n";
  };
  series("NLL", "#c0392b", [](const MetricSet& m) { return m.nll; }, 1);
  series("Brier", "#2c3e50", [](const MetricSet& m) { return m.brier; }, 2);
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace mcur
