// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// mcur: gen, train, eval, ablate and verify on top of the C API.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
// 3 acceptance failure (verify).

#include "mcur/mcur.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

/// Carries a C API failure up to main().
struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(mcur_status s) {
  return s == MCUR_ERR_CONFIG || s == MCUR_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}

void check(mcur_status s, const std::string& what) {
  if (s != MCUR_OK) throw Failure{exit_code_for(s), what + ": " + mcur_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<mcur_config, Deleter<mcur_config, mcur_config_free>>;
using Dataset = std::unique_ptr<mcur_dataset, Deleter<mcur_dataset, mcur_dataset_free>>;
using Model = std::unique_ptr<mcur_model, Deleter<mcur_model, mcur_model_free>>;
using Results = std::unique_ptr<mcur_results, Deleter<mcur_results, mcur_results_free>>;
using Report = std::unique_ptr<mcur_report, Deleter<mcur_report, mcur_report_free>>;

struct CommonOptions {
  std::string config_path;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_seed = true) {
  auto* c = cmd->add_option("-c,--config", o.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset_name, "Built-in preset: default, paper-defaults, smoke")->excludes(c);
  if (with_seed) cmd->add_option("--seed", o.seed, "Override the data, teacher and student seeds");
  cmd->add_option("-o,--out", o.out, "Output directory");
}

Config load(const CommonOptions& o) {
  mcur_config* raw = nullptr;
  if (!o.config_path.empty()) {
    check(mcur_config_load(o.config_path.c_str(), &raw), "config");
  } else {
    check(mcur_config_preset(o.preset_name.empty() ? "default" : o.preset_name.c_str(), &raw), "preset");
  }
  Config c(raw);
  if (o.seed) check(mcur_config_set_seed(c.get(), *o.seed), "--seed");
  return c;
}

/// Relative output paths live under $MCUR_OUTPUT_ROOT when it is set.
fs::path output_path(const fs::path& p) {
  const char* root = std::getenv("MCUR_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || p.is_absolute()) return p;
  return fs::path(root) / p;
}

fs::path default_out(const mcur_config* c, const std::string& sub) {
  const char* dir = nullptr;
  check(mcur_config_output_dir(c, &dir), "config");
  return fs::path(dir) / sub;
}

fs::path resolve_out(const CommonOptions& o, const mcur_config* c, const std::string& sub) {
  return output_path(o.out.empty() ? default_out(c, sub) : fs::path(o.out));
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Failure{kExitRuntime, path.string() + ": cannot open for writing"};
  f << text;
  if (!f) throw Failure{kExitRuntime, path.string() + ": write failed"};
}

std::string config_hash(const mcur_config* c) {
  const char* h = nullptr;
  check(mcur_config_hash(c, &h), "config");
  return h;
}

Dataset dataset_for(const std::string& data_dir, const mcur_config* c) {
  mcur_dataset* raw = nullptr;
  if (!data_dir.empty()) {
    check(mcur_dataset_load(data_dir.c_str(), &raw), "--data");
  } else {
    check(mcur_dataset_generate(c, &raw), "generate");
  }
  return Dataset(raw);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- gen ----------------------------------------------------------------------------

int run_gen(const CommonOptions& o) {
  Config c = load(o);
  const fs::path out = resolve_out(o, c.get(), "data");
  Dataset d = dataset_for("", c.get());
  check(mcur_dataset_save(d.get(), out.string().c_str(), c.get()), "save dataset");
  std::cout << out.string() << "\n";
  return kExitOk;
}

// ---- train --------------------------------------------------------------------------

struct TrainOptions {
  CommonOptions common;
  std::string role;
  std::string teacher_ckpt;
  std::string data;
};

struct LogState {
  std::ofstream* file;
  json last_epoch;
  bool quiet;
};

void on_log(const char* line, void* user) {
  auto* st = static_cast<LogState*>(user);
  *st->file << line << '\n';
  json j = json::parse(line, nullptr, false);
  if (!j.is_discarded() && j.contains("epoch_mean")) {
    st->last_epoch = j;
    if (!st->quiet) {
      std::cerr << j.value("role", "") << " epoch " << j.value("epoch", 0) << ": " << j["epoch_mean"].dump() << "\n";
    }
  }
}

std::uint64_t seed_of(const mcur_config* c, const std::string& role) {
  const char* text = nullptr;
  check(mcur_config_json(c, &text), "config");
  return json::parse(text)[role]["seed"].get<std::uint64_t>();
}

int run_train(const TrainOptions& o, bool quiet) {
  if (o.role == "student" && o.teacher_ckpt.empty()) {
    std::cerr << "train: --role student requires --teacher-ckpt\n";
    return kExitUsage;
  }
  if (o.role == "teacher" && !o.teacher_ckpt.empty()) {
    std::cerr << "train: --teacher-ckpt applies only to --role student\n";
    return kExitUsage;
  }
  Config c = load(o.common);
  const fs::path out = resolve_out(o.common, c.get(), o.role);
  Model teacher;
  if (!o.teacher_ckpt.empty()) {
    mcur_model* raw = nullptr;
    check(mcur_model_load(o.teacher_ckpt.c_str(), &raw), "--teacher-ckpt");
    teacher.reset(raw);
  }
  Dataset d = dataset_for(o.data, c.get());

  fs::create_directories(out);
  std::ofstream log_file(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log_file) throw Failure{kExitRuntime, (out / "train_log.jsonl").string() + ": cannot open for writing"};
  const std::string hash = config_hash(c.get());
  const std::uint64_t seed = seed_of(c.get(), o.role);
  log_file << json{{"event", "start"}, {"role", o.role}, {"seed", seed}, {"config_hash", hash},
                   {"version", mcur_version()}}.dump()
           << '\n';
  LogState st{&log_file, {}, quiet};

  mcur_model* raw = nullptr;
  if (o.role == "teacher") {
    check(mcur_train_teacher(c.get(), d.get(), on_log, &st, &raw), "train teacher");
  } else {
    check(mcur_train_student(c.get(), d.get(), teacher.get(), on_log, &st, &raw), "train student");
  }
  Model m(raw);
  const fs::path ckpt = out / "checkpoint";
  check(mcur_model_save(m.get(), ckpt.string().c_str(), c.get()), "save checkpoint");

  const char* param_hash = nullptr;
  check(mcur_model_hash(m.get(), &param_hash), "model");
  json summary{{"role", o.role},
               {"seed", seed},
               {"config_hash", hash},
               {"version", mcur_version()},
               {"checkpoint", ckpt.string()},
               {"parameter_hash", param_hash},
               {"final_epoch", st.last_epoch}};
  if (teacher) {
    const char* th = nullptr;
    check(mcur_model_hash(teacher.get(), &th), "teacher");
    summary["teacher_parameter_hash"] = th;
  }
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << ckpt.string() << "\n";
  return kExitOk;
}

// ---- eval ---------------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string ckpt;
  std::string data;
  std::vector<std::string> scenarios;
  std::string seeds;
  int jobs = 0;
  bool plot = false;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s, const std::string& flag) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(s, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{kExitUsage, flag + ": '" + item + "' is not a non-negative integer"};
    }
  }
  if (out.empty()) throw Failure{kExitUsage, flag + ": no seeds given"};
  return out;
}

/// Scenario flags may repeat or hold several entries separated by ';'.
std::vector<std::string> parse_scenario_flags(const std::vector<std::string>& flags) {
  std::vector<std::string> out;
  for (const auto& f : flags) {
    for (auto& s : split(f, ';')) out.push_back(s);
  }
  return out;
}

void apply_eval_overrides(mcur_config* c, const std::vector<std::string>& scenarios, const std::string& seeds,
                          int jobs) {
  if (!scenarios.empty()) {
    std::vector<const char*> ptrs;
    for (const auto& s : scenarios) ptrs.push_back(s.c_str());
    check(mcur_config_set_scenarios(c, ptrs.data(), ptrs.size()), "--scenarios");
  }
  if (!seeds.empty()) {
    const auto v = parse_seeds(seeds, "--seeds");
    check(mcur_config_set_eval_seeds(c, v.data(), v.size()), "--seeds");
  }
  if (jobs > 0) check(mcur_config_set_jobs(c, jobs), "--jobs");
}

int run_eval(const EvalOptions& o) {
  Config c = load(o.common);
  apply_eval_overrides(c.get(), parse_scenario_flags(o.scenarios), o.seeds, o.jobs);
  const fs::path out = resolve_out(o.common, c.get(), "eval");
  mcur_model* raw_model = nullptr;
  check(mcur_model_load(o.ckpt.c_str(), &raw_model), "--ckpt");
  Model m(raw_model);
  Dataset d = dataset_for(o.data, c.get());

  mcur_results* raw = nullptr;
  check(mcur_evaluate(c.get(), m.get(), d.get(), &raw), "evaluate");
  Results r(raw);
  const char* csv = nullptr;
  const char* summary = nullptr;
  check(mcur_results_csv(r.get(), &csv), "results");
  check(mcur_results_json(r.get(), &summary), "results");
  write_file(out / "results.csv", csv);
  write_file(out / "summary.json", std::string(summary) + "\n");
  if (o.plot) {
    const char* svg = nullptr;
    check(mcur_results_plot_svg(r.get(), &svg), "plot");
    write_file(out / "uncertainty_vs_mr.svg", svg);
  }
  std::cout << csv;
  int failed = 0;
  check(mcur_results_any_failure(r.get(), &failed), "results");
  if (failed != 0) {
    std::cerr << "eval: one or more scenarios failed; see " << (out / "summary.json").string() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ---- ablate -------------------------------------------------------------------------

struct AblateOptions {
  CommonOptions common;
  std::string drop;
  std::string seeds;
  int jobs = 0;
};

struct Metrics {
  double acc = 0.0, f1 = 0.0, brier = 0.0, nll = 0.0;
};

json metrics_json(const Metrics& m) {
  return {{"acc", m.acc}, {"f1", m.f1}, {"brier", m.brier}, {"nll", m.nll}};
}

Metrics evaluate_average(const mcur_config* c, const mcur_model* m, const mcur_dataset* d) {
  mcur_results* raw = nullptr;
  check(mcur_evaluate(c, m, d, &raw), "evaluate");
  Results r(raw);
  int failed = 0;
  check(mcur_results_any_failure(r.get(), &failed), "results");
  if (failed != 0) throw Failure{kExitRuntime, "ablate: a scenario failed during evaluation"};
  Metrics out;
  check(mcur_results_average(r.get(), &out.acc, &out.f1, &out.brier, &out.nll), "results");
  return out;
}

int run_ablate(const AblateOptions& o, bool quiet) {
  const auto drops = split(o.drop, ',');
  if (drops.empty()) {
    std::cerr << "ablate: --drop needs at least one of L_CL, L_Uncer, L_Logits, L_MSE\n";
    return kExitUsage;
  }
  Config base = load(o.common);
  if (!o.seeds.empty()) {
    const auto v = parse_seeds(o.seeds, "--seeds");
    check(mcur_config_set_seeds(base.get(), v.data(), v.size()), "--seeds");
  }
  apply_eval_overrides(base.get(), {}, "", o.jobs);
  // Validate every key before any training.
  for (const auto& key : drops) {
    mcur_config* probe = nullptr;
    check(mcur_config_clone(base.get(), &probe), "config");
    Config p(probe);
    check(mcur_config_ablate(p.get(), key.c_str()), "--drop");
  }
  const fs::path out = resolve_out(o.common, base.get(), "ablation");
  std::size_t n_seeds = 0;
  check(mcur_config_seed_count(base.get(), &n_seeds), "config");

  std::vector<std::string> variants{"full"};
  for (const auto& key : drops) variants.push_back("w/o " + key);
  std::vector<std::vector<Metrics>> per_variant(variants.size());
  json per_seed = json::array();

  for (std::size_t s = 0; s < n_seeds; ++s) {
    std::uint64_t seed = 0;
    check(mcur_config_seed_at(base.get(), s, &seed), "config");
    mcur_config* raw = nullptr;
    check(mcur_config_clone(base.get(), &raw), "config");
    Config c(raw);
    check(mcur_config_set_seed(c.get(), seed), "seed");
    Dataset d = dataset_for("", c.get());
    mcur_model* t = nullptr;
    if (!quiet) std::cerr << "seed " << seed << ": teacher\n";
    check(mcur_train_teacher(c.get(), d.get(), nullptr, nullptr, &t), "train teacher");
    Model teacher(t);
    json row{{"seed", seed}};
    for (std::size_t v = 0; v < variants.size(); ++v) {
      mcur_config* vraw = nullptr;
      check(mcur_config_clone(c.get(), &vraw), "config");
      Config vc(vraw);
      if (v > 0) check(mcur_config_ablate(vc.get(), drops[v - 1].c_str()), "--drop");
      if (!quiet) std::cerr << "seed " << seed << ": " << variants[v] << "\n";
      mcur_model* st = nullptr;
      check(mcur_train_student(vc.get(), d.get(), teacher.get(), nullptr, nullptr, &st), "train student");
      Model student(st);
      const Metrics m = evaluate_average(vc.get(), student.get(), d.get());
      per_variant[v].push_back(m);
      row[variants[v]] = metrics_json(m);
    }
    per_seed.push_back(row);
  }

  std::ostringstream csv;
  csv << "variant,n_seeds,acc,f1,brier,nll\n";
  json rows = json::array();
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& ms = per_variant[v];
    const double n = static_cast<double>(ms.size());
    Metrics mean, ci;
    for (const auto& m : ms) {
      mean.acc += m.acc / n;
      mean.f1 += m.f1 / n;
      mean.brier += m.brier / n;
      mean.nll += m.nll / n;
    }
    if (ms.size() > 1) {
      Metrics var;
      for (const auto& m : ms) {
        var.acc += (m.acc - mean.acc) * (m.acc - mean.acc);
        var.f1 += (m.f1 - mean.f1) * (m.f1 - mean.f1);
        var.brier += (m.brier - mean.brier) * (m.brier - mean.brier);
        var.nll += (m.nll - mean.nll) * (m.nll - mean.nll);
      }
      const double k = 1.96 / std::sqrt(n);
      ci = {k * std::sqrt(var.acc / (n - 1)), k * std::sqrt(var.f1 / (n - 1)), k * std::sqrt(var.brier / (n - 1)),
            k * std::sqrt(var.nll / (n - 1))};
    }
    csv << variants[v] << ',' << ms.size() << ',' << num(mean.acc) << ',' << num(mean.f1) << ','
        << num(mean.brier) << ',' << num(mean.nll) << '\n';
    rows.push_back({{"variant", variants[v]}, {"n_seeds", ms.size()}, {"mean", metrics_json(mean)},
                    {"ci95", metrics_json(ci)}});
  }
  json summary{{"version", mcur_version()},
               {"config_hash", config_hash(base.get())},
               {"variants", rows},
               {"per_seed", per_seed}};
  write_file(out / "ablation.csv", csv.str());
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << csv.str();
  return kExitOk;
}

// ---- verify -------------------------------------------------------------------------

struct VerifyOptions {
  bool experiments = false;
  std::string config_path;
  std::string json_path;
};

void print_line(const char* line, void*) { std::cout << line << std::endl; }

int run_verify(const VerifyOptions& o) {
  Config c;
  if (!o.config_path.empty()) {
    mcur_config* raw = nullptr;
    check(mcur_config_load(o.config_path.c_str(), &raw), "config");
    c.reset(raw);
  }
  mcur_report* raw = nullptr;
  check(mcur_verify(o.experiments ? 1 : 0, c.get(), print_line, nullptr, &raw), "verify");
  Report r(raw);
  int passed = 0;
  check(mcur_report_passed(r.get(), &passed), "verify");
  if (!o.json_path.empty()) {
    const char* text = nullptr;
    check(mcur_report_json(r.get(), &text), "verify");
    write_file(output_path(o.json_path), std::string(text) + "\n");
  }
  std::cout << (passed != 0 ? "ALL PASS" : "FAILED") << std::endl;
  return passed != 0 ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCUR missing-modality teacher-student experiments"};
  app.set_version_flag("--version", std::string(mcur_version()));
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress on stderr");

  CommonOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate the synthetic dataset");
  add_common(gen_cmd, gen);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a teacher or a student");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--role", train.role, "teacher or student")
      ->required()
      ->check(CLI::IsMember({"teacher", "student"}));
  train_cmd->add_option("--teacher-ckpt", train.teacher_ckpt, "Teacher checkpoint directory (student role)");
  train_cmd->add_option("--data", train.data, "Dataset directory; generated from the config when omitted");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on missing-modality scenarios");
  add_common(eval_cmd, eval.common, false);
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory; generated from the config when omitted");
  eval_cmd->add_option("--scenarios", eval.scenarios,
                       "Scenarios such as fixed:L,A or random:0.3 or canonical; repeat or separate with ';'");
  eval_cmd->add_option("--seeds", eval.seeds, "Comma-separated mask seeds");
  eval_cmd->add_option("-j,--jobs", eval.jobs, "Worker threads")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--plot", eval.plot, "Also write the uncertainty-vs-MR SVG");

  AblateOptions ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare the full student with loss-term ablations");
  add_common(ablate_cmd, ablate.common, false);
  ablate_cmd->add_option("--drop", ablate.drop, "Comma-separated: L_CL, L_Uncer, L_Logits, L_MSE")->required();
  ablate_cmd->add_option("--seeds", ablate.seeds, "Comma-separated training seeds");
  ablate_cmd->add_option("-j,--jobs", ablate.jobs, "Worker threads for evaluation")->check(CLI::PositiveNumber);

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance checks");
  verify_cmd->add_flag("--experiments", verify.experiments, "Also run the multi-seed directional experiments");
  verify_cmd->add_option("-c,--config", verify.config_path, "Config for the experiments")->check(CLI::ExistingFile);
  verify_cmd->add_option("--json", verify.json_path, "Write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train, quiet);
    if (*eval_cmd) return run_eval(eval);
    if (*ablate_cmd) return run_ablate(ablate, quiet);
    if (*verify_cmd) return run_verify(verify);
  } catch (const Failure& f) {
    std::cerr << "mcur: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "mcur: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
