// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--fast | --experiments] [--config PATH] [--json PATH]
// --config replaces the default preset for the experiments.

#include "checks.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"

#include <cstring>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  bool fast = true, experiments = true;
  std::string json_path, config_path;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--fast") == 0) {
      experiments = false;
    } else if (std::strcmp(argv[i], "--experiments") == 0) {
      fast = false;
    } else if (std::strcmp(argv[i], "--json") == 0 && i + 1 < argc) {
      json_path = argv[++i];
    } else if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) {
      config_path = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--fast | --experiments] [--config PATH] [--json PATH]\n";
      return 1;
    }
  }
  using namespace mcur;
  std::vector<verify::CheckResult> results;
  nlohmann::json details;
  const auto print = [](const std::string& s) { std::cout << s << std::endl; };
  if (fast) {
    for (auto& r : verify::run_fast_checks(preset("smoke"), print)) results.push_back(std::move(r));
  }
  if (experiments) {
    ExperimentConfig config;
    try {
      config = config_path.empty() ? preset("default") : load_config(config_path);
    } catch (const Error& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    auto out = verify::run_directional_checks(config, [](const std::string& s) {
      std::cout << "  " << s << std::endl;
    });
    print(out.trend.line());
    print(out.ablation.line());
    results.push_back(out.trend);
    results.push_back(out.ablation);
    details = out.details;
  }
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << results.size()
            << " criteria)" << std::endl;
  if (!json_path.empty()) {
    nlohmann::json j;
    for (const auto& r : results) j["criteria"].push_back(r.to_json());
    j["details"] = details;
    write_text(json_path, j.dump(2) + "\n");
  }
  return failed == 0 ? 0 : 3;
}
