// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "losses.hpp"
#include "rng.hpp"
#include "synthdata.hpp"
#include "training.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace mcur;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c = preset("smoke");
  c.data.n_train = 64;
  c.data.n_test = 32;
  c.teacher.epochs = 2;
  c.student.epochs = 2;
  return c;
}

std::vector<Label> labels_of(const std::vector<Sample>& s) {
  std::vector<Label> out;
  for (const auto& x : s) out.push_back(x.label);
  return out;
}

double teacher_batch_loss(Backbone& model, const Batch& batch, const std::vector<Label>& labels) {
  ad::Tape tape;
  const auto out = model.forward(tape, batch, VibMode::mean, nullptr);
  return teacher_objective(out, labels, 0.01).total.scalar();
}

}  // namespace

TEST_CASE("pattern sampler") {
  Rng rng = make_rng(1, 0);
  const auto uniform = uniform_pattern_distribution(3);
  CHECK(uniform.size() == 8);
  CHECK(uniform[0] == 0.0);
  PatternSampler sampler(uniform, 3);
  std::vector<int> counts(8, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sampler(rng)];
  CHECK(counts[0] == 0);
  for (int id = 1; id < 8; ++id) CHECK(std::abs(counts[static_cast<std::size_t>(id)] / double(n) - 1.0 / 7.0) < 0.005);

  std::vector<double> point(8, 0.0);
  point[1] = 1.0;
  for (int i = 0; i < 100; ++i) CHECK(sample_pattern(point, 3, rng) == 1);

  std::vector<double> bad(8, 1.0 / 8.0);
  CHECK_THROWS_AS(PatternSampler(bad, 3), InvalidArgument);
  CHECK_THROWS_AS(PatternSampler(std::vector<double>(7, 1.0 / 7.0), 3), InvalidArgument);
  std::vector<double> negative = uniform;
  negative[1] = -negative[1];
  negative[2] += 2.0 / 7.0;
  CHECK_THROWS_AS(PatternSampler(negative, 3), InvalidArgument);
}

TEST_CASE("ablation switches") {
  const TrainConfig base;
  CHECK(ablate(base, AblationKey::cl).weights.gamma == 0.0);
  CHECK_FALSE(ablate(base, AblationKey::uncer).sugr.use_uncertainty);
  CHECK_FALSE(ablate(base, AblationKey::logits).sugr.use_logits);
  CHECK_FALSE(ablate(base, AblationKey::mse).weights.use_mse);
  CHECK(ablation_from_string("L_CL") == AblationKey::cl);
  CHECK(ablation_from_string("L_MSE") == AblationKey::mse);
  CHECK_THROWS_AS((void)ablation_from_string("L_TASK"), InvalidArgument);
}

TEST_CASE("optimizer and clipping") {
  std::vector<ad::Parameter> p(1);
  p[0].value = Matrix::Constant(1, 2, 1.0);
  p[0].grad = Matrix::Constant(1, 2, 2.0);
  Optimizer adam(OptimizerKind::adam, 0.1, 0.0);
  adam.step(p);
  // The first bias-corrected Adam step moves every entry by lr in the sign direction.
  CHECK(p[0].value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));

  p[0].grad = Matrix::Constant(1, 2, 3.0);
  p[0].grad(0, 1) = 4.0;
  CHECK(clip_grad_norm(p, 1.0) == doctest::Approx(5.0));
  CHECK(p[0].grad.norm() == doctest::Approx(1.0));
  p[0].grad(0, 0) = std::nan("");
  CHECK_THROWS_AS((void)clip_grad_norm(p, 1.0), NumericalError);

  std::vector<ad::Parameter> q(1);
  q[0].value = Matrix::Constant(1, 1, 1.0);
  q[0].grad = Matrix::Zero(1, 1);
  Optimizer adamw(OptimizerKind::adamw, 0.1, 0.5);
  adamw.step(q);
  CHECK(q[0].value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
}

TEST_CASE("a small gradient step does not increase the batch loss") {
  const auto data = generate(tiny().data);
  BackboneConfig cfg = tiny().model;
  Backbone model(cfg, model_shape_for(data), Role::teacher, 3);
  Batch batch;
  std::vector<Sample> head(data.begin(), data.begin() + 8);
  for (const auto& s : head) batch.samples.push_back(&s);
  const auto labels = labels_of(head);

  const double before = teacher_batch_loss(model, batch, labels);
  ad::Tape tape;
  const auto out = model.forward(tape, batch, VibMode::mean, nullptr);
  const auto obj = teacher_objective(out, labels, 0.01);
  model.zero_grad();
  tape.backward(obj.total);
  for (auto& p : model.parameters()) p.value -= 1e-4 * p.grad;
  CHECK(teacher_batch_loss(model, batch, labels) <= before);
}

TEST_CASE("teacher training is deterministic and rejects missing modalities") {
  const auto c = tiny();
  const auto data = generate(c.data);
  const auto a = train_teacher(data, c.model, c.teacher);
  const auto b = train_teacher(data, c.model, c.teacher);
  REQUIRE(a.epoch_means.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) CHECK(a.epoch_means[e].all == b.epoch_means[e].all);
  CHECK(parameter_hash(a.checkpoint.model) == parameter_hash(b.checkpoint.model));
  CHECK(a.checkpoint.role() == Role::teacher);

  const auto masked = apply_fixed(data, 3);
  CHECK_THROWS_AS((void)train_teacher(masked, c.model, c.teacher), InvalidArgument);
}

TEST_CASE("student training leaves the teacher untouched") {
  const auto c = tiny();
  const auto data = generate(c.data);
  const auto teacher = train_teacher(data, c.model, c.teacher);
  const std::string before = parameter_hash(teacher.checkpoint.model);
  std::vector<nlohmann::json> log;
  const auto student = train_student(data, teacher.checkpoint, c.model, c.student,
                                     [&](const nlohmann::json& j) { log.push_back(j); });
  CHECK(parameter_hash(teacher.checkpoint.model) == before);
  CHECK(student.checkpoint.role() == Role::student);
  REQUIRE_FALSE(log.empty());
  CHECK(log.front()["role"] == "student");
  CHECK(log.front()["losses"].contains("L_Sugr"));
  CHECK(log.back().contains("epoch_mean"));

  BackboneConfig other = c.model;
  other.dim = c.model.dim * 2;
  CHECK_THROWS_AS((void)train_student(data, teacher.checkpoint, other, c.student), IncompatibleError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const auto c = tiny();
  const auto data = generate(c.data);
  const auto teacher = train_teacher(data, c.model, c.teacher);
  const auto dir = std::filesystem::temp_directory_path() / "mcur_unit_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(teacher.checkpoint, dir, {{"config_hash", config_hash(c)}});
  const auto loaded = load_checkpoint(dir);
  CHECK(parameter_hash(loaded.model) == parameter_hash(teacher.checkpoint.model));
  REQUIRE(loaded.model.parameters().size() == teacher.checkpoint.model.parameters().size());
  for (std::size_t i = 0; i < loaded.model.parameters().size(); ++i) {
    CHECK(loaded.model.parameters()[i].value == teacher.checkpoint.model.parameters()[i].value);
  }
  CHECK(loaded.role() == Role::teacher);
  CHECK(loaded.epoch == teacher.checkpoint.epoch);

  // a flipped byte in the parameter file fails the content hash
  {
    std::fstream f(dir / "params.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(16);
    f.put('\x7f');
  }
  CHECK_THROWS((void)load_checkpoint(dir));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS((void)load_checkpoint(dir), IoError);
}

TEST_CASE("datasets round-trip") {
  auto c = tiny();
  const auto d = generate_dataset(c.data);
  const auto dir = std::filesystem::temp_directory_path() / "mcur_unit_data";
  std::filesystem::remove_all(dir);
  save_dataset(d, dir);
  const auto back = load_dataset(dir);
  REQUIRE(back.train.size() == d.train.size());
  REQUIRE(back.test.size() == d.test.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(back.train[i].label.class_index == d.train[i].label.class_index);
    CHECK(back.train[i].sample_id == d.train[i].sample_id);
    CHECK(back.train[i].mask == d.train[i].mask);
    for (std::size_t p = 0; p < 3; ++p) CHECK(back.train[i].modalities[p].data == d.train[i].modalities[p].data);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("student beats the teacher under missing modalities") {
  ExperimentConfig c = preset("default");
  c.teacher.epochs = 15;
  c.student.epochs = 15;
  const auto d = generate_dataset(c.data);
  const auto teacher = train_teacher(d.train, c.model, c.teacher);
  const auto student = train_student(d.train, teacher.checkpoint, c.model, c.student);
  EvalOptions o;
  o.scenarios = {parse_scenario("random:0.5", 3)};
  o.seeds = {0, 1, 2};
  const auto t = run_suite(teacher.checkpoint.model, d.test, o);
  const auto s = run_suite(student.checkpoint.model, d.test, o);
  CHECK(s.average.f1 > t.average.f1);
}
