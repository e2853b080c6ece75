// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"
#include "errors.hpp"

#include <doctest.h>

#include <string>

using namespace mcur;

namespace {

std::string error_of(const std::string& text) {
  try {
    (void)parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("every preset validates") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    CHECK_NOTHROW(preset(name).validate());
  }
  CHECK_THROWS_AS((void)preset("nope"), ConfigError);
}

TEST_CASE("reference preset carries the published training settings") {
  const auto c = preset("paper-defaults");
  CHECK(c.teacher.optimizer == OptimizerKind::adam);
  CHECK(c.teacher.learning_rate == 1e-3);
  CHECK(c.student.learning_rate == 8e-4);
  CHECK(c.student.weights.gamma == 0.1);
  CHECK(c.student.weights.zeta == 100.0);
  CHECK(c.student.weights.beta == 0.01);
  CHECK(c.student.sugr.alpha == 0.2);
}

TEST_CASE("schema errors name the field") {
  CHECK(error_of(R"({"data": {"num_classes": 1}})").find("data.num_classes") != std::string::npos);
  CHECK(error_of(R"({"data": {"num_clases": 4}})").find("data.num_clases: unknown key") != std::string::npos);
  CHECK(error_of(R"({"student": {"weights": {"zeta": -1}}})").find("student") != std::string::npos);
  CHECK(error_of(R"({"student": {"weights": {"gama": 1}}})").find("student.weights.gama") != std::string::npos);
  CHECK(error_of(R"({"teacher": {"epochs": "ten"}})").find("teacher.epochs") != std::string::npos);
  CHECK(error_of(R"({"eval": {"scenarios": ["fixed:Q"]}})").find("eval") != std::string::npos);
  CHECK(error_of(R"({"extends": "huge"})").find("extends") != std::string::npos);
  CHECK(error_of("[1, 2]").find("top level") != std::string::npos);
}

TEST_CASE("syntax errors carry a line and column") {
  const std::string e = error_of("{\n  \"data\": {\n    \"n_train\": 5,,\n  }\n}");
  CHECK(e.rfind("cfg.json:3:", 0) == 0);
}

TEST_CASE("extends merges onto a preset") {
  const auto c = parse_config(R"({"extends": "smoke", "model": {"dim": 12}})");
  CHECK(c.model.dim == 12);
  CHECK(c.data.n_train == preset("smoke").data.n_train);
  CHECK(c.model.seq_len == preset("smoke").model.seq_len);
}

TEST_CASE("a top-level seed reseeds data and both trainings") {
  const auto c = parse_config(R"({"seed": 77})");
  CHECK(c.data.seed == 77);
  CHECK(c.teacher.seed == 77);
  CHECK(c.student.seed == 77);
  CHECK(config_hash(c) != config_hash(preset("default")));
}

TEST_CASE("serialization round-trips and the hash is stable") {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    const auto back = parse_config(to_json(c).dump());
    CHECK(config_hash(back) == config_hash(c));
    CHECK(to_json(back) == to_json(c));
  }
  CHECK(config_hash(preset("default")).size() == 16);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
