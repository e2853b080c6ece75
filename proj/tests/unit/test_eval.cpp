// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "synthdata.hpp"
#include "training.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mcur;

namespace {

struct Trained {
  Dataset data;
  Checkpoint student;
};

const Trained& trained() {
  static const Trained t = [] {
    ExperimentConfig c = preset("smoke");
    c.data.n_train = 96;
    c.data.n_test = 60;
    c.teacher.epochs = 2;
    c.student.epochs = 2;
    Dataset d = generate_dataset(c.data);
    auto teacher = train_teacher(d.train, c.model, c.teacher);
    auto student = train_student(d.train, teacher.checkpoint, c.model, c.student);
    return Trained{std::move(d), std::move(student.checkpoint)};
  }();
  return t;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("binary metrics") {
  const std::vector<double> p1{0.5, -0.2}, y1{1.3, -2.0};
  const auto m1 = binary_metrics(p1, y1);
  CHECK(m1.acc == 1.0);
  CHECK(m1.f1 == 1.0);

  const std::vector<double> p2{1, 1, 1, 1}, y2{1, 1, -1, -1};
  const auto m2 = binary_metrics(p2, y2);
  CHECK(m2.acc == 0.5);
  CHECK(m2.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS((void)binary_metrics(p1, zeros), MetricError);
  CHECK(binary_metrics(p1, zeros, ZeroLabelPolicy::negative).n == 2);
}

TEST_CASE("weighted multiclass metrics") {
  const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(weighted_multiclass_metrics(y, y, 2).f1 == 1.0);
  // confusion [[3, 1], [2, 2]]
  const std::vector<int> p{0, 0, 0, 1, 0, 0, 1, 1};
  const auto m = weighted_multiclass_metrics(p, y, 2);
  CHECK(m.acc == doctest::Approx(5.0 / 8.0));
  const double f0 = 2.0 * 0.6 * 0.75 / (0.6 + 0.75), f1 = 2.0 * (2.0 / 3.0) * 0.5 / (2.0 / 3.0 + 0.5);
  CHECK(m.f1 == doctest::Approx(0.5 * f0 + 0.5 * f1).epsilon(1e-14));
  CHECK(m.f1 == doctest::Approx(0.6190).epsilon(1e-4));

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> k(0, 3);
  std::vector<int> yy(20000), pp(20000);
  for (std::size_t i = 0; i < yy.size(); ++i) {
    yy[i] = static_cast<int>(i % 4);
    pp[i] = k(rng);
  }
  CHECK(std::abs(weighted_multiclass_metrics(pp, yy, 4).acc - 0.25) < 0.03);
  CHECK_THROWS_AS((void)weighted_multiclass_metrics(std::vector<int>{}, std::vector<int>{}, 4), MetricError);
}

TEST_CASE("calibration scores") {
  const std::vector<double> y{1, 0, 1};
  CHECK(brier_score(y, y) == 0.0);
  const std::vector<double> half{0.5, 0.5, 0.5};
  CHECK(brier_score(half, y) == 0.25);
  CHECK(brier_score(std::vector<double>{0.8, 0.3}, std::vector<double>{1, 0}) == doctest::Approx(0.065));
  CHECK(nll_score(half, y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(nll_score(std::vector<double>{0.9}, std::vector<double>{1}) == doctest::Approx(0.1054).epsilon(1e-3));
  const double perfect = nll_score(y, y);
  CHECK(perfect > 0.0);
  CHECK(perfect < 1e-11);
  CHECK_THROWS_AS((void)brier_score(std::vector<double>{}, std::vector<double>{}), MetricError);
  CHECK_THROWS_AS((void)nll_score(std::vector<double>{}, std::vector<double>{}), MetricError);
}

TEST_CASE("regression outputs reduce to signs") {
  Matrix out(3, 1);
  out << 0.0, 2.0, -1.0;
  const std::vector<Label> labels{Label::regression(1.0), Label::regression(0.0), Label::regression(-0.5)};
  const auto pairs = calibration_pairs(out, labels);
  REQUIRE(pairs.probs.size() == 2);
  CHECK(pairs.probs[0] == 0.5);
  CHECK(pairs.targets[0] == 1.0);
  CHECK(pairs.targets[1] == 0.0);
}

TEST_CASE("canonical scenarios") {
  const auto s = canonical_scenarios(3);
  REQUIRE(s.size() == 14);
  const std::vector<std::string> want{"L", "A", "V", "L,A", "L,V", "A,V", "L,A,V",
                                      "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7"};
  for (std::size_t i = 0; i < 14; ++i) CHECK(s[i].label == want[i]);
  CHECK(parse_scenario("fixed:L,A", 3).pattern == 3);
  CHECK(parse_scenario("random:0.3", 3).mr == 0.3);
  CHECK(parse_scenarios({"canonical"}, 3).size() == 14);
  CHECK(parse_scenarios({}, 3).size() == 14);
  CHECK_THROWS_AS((void)parse_scenario("fixed:X", 3), InvalidArgument);
  CHECK_THROWS_AS((void)parse_scenario("random:1.5", 3), InvalidArgument);
  CHECK_THROWS_AS((void)parse_scenario("sometimes:L", 3), InvalidArgument);
}

TEST_CASE("the highest random MR is clamped to one modality per sample") {
  const auto& t = trained();
  const auto masked = scenario_data(t.data.test, parse_scenario("random:0.7", 3), 0);
  for (const auto& s : masked) CHECK(s.mask.count() == 1);
}

TEST_CASE("suite table shape and average row") {
  const auto& t = trained();
  EvalOptions o;
  o.scenarios = canonical_scenarios(3);
  o.seeds = {0, 1};
  const auto r = run_suite(t.student.model, t.data.test, o);
  CHECK_FALSE(r.any_failure);
  REQUIRE(r.scenarios.size() == 14);
  CHECK(r.rows.size() == 28);
  double f1 = 0.0, nll = 0.0;
  for (const auto& s : r.scenarios) {
    f1 += s.mean.f1 / 14.0;
    nll += s.mean.nll / 14.0;
  }
  CHECK(std::abs(r.average.f1 - f1) < 1e-12);
  CHECK(std::abs(r.average.nll - nll) < 1e-12);

  const auto csv = lines(results_csv(r));
  CHECK(csv.front() == "scenario,label,seed,acc,f1,brier,nll");
  CHECK(csv.size() == 1 + 28 + 2);
  CHECK(csv.back().rfind("avg,Avg.,1,", 0) == 0);
  CHECK(csv[7].rfind("fixed,\"L,A\",0,", 0) == 0);

  const auto j = results_json(r, {"abc", kVersion});
  CHECK(j["config_hash"] == "abc");
  CHECK(j["scenarios"].size() == 14);
  CHECK(j["scenarios"][0].contains("ci95"));
}

TEST_CASE("suite is deterministic and independent of the job count") {
  const auto& t = trained();
  EvalOptions o;
  o.scenarios = parse_scenarios({"fixed:A", "random:0.4", "random:0.6"}, 3);
  o.seeds = {3, 4};
  const std::string a = results_csv(run_suite(t.student.model, t.data.test, o));
  const std::string b = results_csv(run_suite(t.student.model, t.data.test, o));
  o.jobs = 3;
  const std::string c = results_csv(run_suite(t.student.model, t.data.test, o));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("a failing scenario is recorded and the rest still run") {
  SynthConfig c = preset("smoke").data;
  c.task = TaskKind::regression;
  c.n_train = 8;
  c.n_test = 8;
  Dataset d = generate_dataset(c);
  for (auto& s : d.test) s.label = Label::regression(0.0);
  Backbone model(preset("smoke").model, model_shape_for(d.test), Role::student, 1);
  EvalOptions o;
  o.scenarios = parse_scenarios({"fixed:L", "random:0.3"}, 3);
  const auto r = run_suite(model, d.test, o);
  CHECK(r.any_failure);
  REQUIRE(r.rows.size() == 2);
  CHECK_FALSE(r.rows[0].ok());
  CHECK(r.rows[0].error.find("excluded") != std::string::npos);
  CHECK(results_json(r, {"x", kVersion})["any_failure"] == true);
}

TEST_CASE("a model built for another shape is rejected") {
  const auto& t = trained();
  ModelShape other = t.student.model.shape();
  other.output_size += 1;
  Backbone wrong(t.student.model.config(), other, Role::student, 1);
  EvalOptions o;
  o.scenarios = parse_scenarios({"fixed:L"}, 3);
  CHECK_THROWS_AS((void)run_suite(wrong, t.data.test, o), IncompatibleError);
}
