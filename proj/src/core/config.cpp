// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include "errors.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mcur {

using nlohmann::json;

namespace {

/// Reads the members of one JSON object, remembering which keys were used so
/// leftovers can be reported.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, path(key), out);
  }

  [[nodiscard]] const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key) + ": unknown key");
    }
  }

  static void read(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ConfigError(p + ": expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    const auto x = v.get<long long>();
    if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(p + ": integer out of range");
    out = static_cast<int>(x);
  }
  static void read(const json& v, const std::string& p, std::uint64_t& out) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError(p + ": expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError(p + ": expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError(p + ": expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  static void read(const json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(p + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      read(v[i], p + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
void wrap_validation(const std::string& where, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

// ---- to_json ---------------------------------------------------------------------

json to_json(const SynthConfig& c) {
  return {{"n_train", c.n_train},
          {"n_test", c.n_test},
          {"modalities", c.modalities},
          {"task", to_string(c.task)},
          {"num_classes", c.num_classes},
          {"informativeness", c.informativeness},
          {"noise", c.noise},
          {"seq_lens", c.seq_lens},
          {"feature_dims", c.feature_dims},
          {"noise_intensity", c.noise_intensity},
          {"seed", c.seed}};
}

json to_json(const BackboneConfig& c) {
  return {{"seq_len", c.seq_len},
          {"dim", c.dim},
          {"prompt_lens", c.prompt_lens},
          {"encoder_layers", c.encoder_layers},
          {"fusion_layers", c.fusion_layers},
          {"ffn_mult", c.ffn_mult},
          {"fusion_relu", c.fusion_relu},
          {"modality_embedding", c.modality_embedding},
          {"logvar_min", c.logvar_min},
          {"logvar_max", c.logvar_max}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"optimizer", to_string(c.optimizer)},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"grad_clip", c.grad_clip},
          {"teacher_sees_student_mask", c.teacher_sees_student_mask},
          {"pattern_distribution", c.pattern_distribution},
          {"weights",
           {{"gamma", c.weights.gamma},
            {"zeta", c.weights.zeta},
            {"beta", c.weights.beta},
            {"include_vib", c.weights.include_vib},
            {"use_mse", c.weights.use_mse}}},
          {"contrastive",
           {{"temperature", c.contrastive.temperature},
            {"mu1", c.contrastive.mu1},
            {"mu2", c.contrastive.mu2},
            {"normalize_embeddings", c.contrastive.normalize_embeddings},
            {"include_self", c.contrastive.include_self}}},
          {"sugr",
           {{"alpha", c.sugr.alpha},
            {"detach_uncertainty_weight", c.sugr.detach_uncertainty_weight},
            {"use_uncertainty", c.sugr.use_uncertainty},
            {"use_logits", c.sugr.use_logits}}}};
}

json to_json(const EvalConfig& c) {
  return {{"scenarios", c.scenarios}, {"seeds", c.seeds}, {"zero_label_policy", to_string(c.zero_policy)}};
}

json to_json(const ExperimentConfig& c) {
  return {{"data", to_json(c.data)},       {"model", to_json(c.model)}, {"teacher", to_json(c.teacher)},
          {"student", to_json(c.student)}, {"eval", to_json(c.eval)},   {"seeds", c.seeds},
          {"output_dir", c.output_dir},    {"jobs", c.jobs}};
}

// ---- from_json -------------------------------------------------------------------

SynthConfig synth_config_from_json(const json& j, const std::string& where) {
  SynthConfig c;
  Fields f(j, where);
  f.get("n_train", c.n_train);
  f.get("n_test", c.n_test);
  f.get("modalities", c.modalities);
  std::string task = to_string(c.task);
  f.get("task", task);
  f.get("num_classes", c.num_classes);
  f.get("informativeness", c.informativeness);
  f.get("noise", c.noise);
  f.get("seq_lens", c.seq_lens);
  f.get("feature_dims", c.feature_dims);
  f.get("noise_intensity", c.noise_intensity);
  f.get("seed", c.seed);
  f.finish();
  try {
    c.task = task_kind_from_string(task);
  } catch (const Error& e) {
    throw ConfigError(f.path("task") + ": " + e.what());
  }
  if (c.n_train < 1) throw ConfigError(f.path("n_train") + ": must be >= 1");
  if (c.n_test < 1) throw ConfigError(f.path("n_test") + ": must be >= 1");
  if (c.task == TaskKind::classification && c.num_classes < 2) {
    throw ConfigError(f.path("num_classes") + ": classification needs num_classes >= 2");
  }
  wrap_validation(where, [&] { c.validate(); });
  return c;
}

BackboneConfig backbone_config_from_json(const json& j, const std::string& where) {
  BackboneConfig c;
  Fields f(j, where);
  f.get("seq_len", c.seq_len);
  f.get("dim", c.dim);
  f.get("prompt_lens", c.prompt_lens);
  f.get("encoder_layers", c.encoder_layers);
  f.get("fusion_layers", c.fusion_layers);
  f.get("ffn_mult", c.ffn_mult);
  f.get("fusion_relu", c.fusion_relu);
  f.get("modality_embedding", c.modality_embedding);
  f.get("logvar_min", c.logvar_min);
  f.get("logvar_max", c.logvar_max);
  f.finish();
  return c;
}

TrainConfig train_config_from_json(const json& j, const std::string& where) {
  TrainConfig c;
  Fields f(j, where);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("learning_rate", c.learning_rate);
  std::string opt = to_string(c.optimizer);
  f.get("optimizer", opt);
  f.get("weight_decay", c.weight_decay);
  f.get("seed", c.seed);
  f.get("grad_clip", c.grad_clip);
  f.get("teacher_sees_student_mask", c.teacher_sees_student_mask);
  f.get("pattern_distribution", c.pattern_distribution);
  if (const json* w = f.child("weights")) {
    Fields g(*w, f.path("weights"));
    g.get("gamma", c.weights.gamma);
    g.get("zeta", c.weights.zeta);
    g.get("beta", c.weights.beta);
    g.get("include_vib", c.weights.include_vib);
    g.get("use_mse", c.weights.use_mse);
    g.finish();
  }
  if (const json* w = f.child("contrastive")) {
    Fields g(*w, f.path("contrastive"));
    g.get("temperature", c.contrastive.temperature);
    g.get("mu1", c.contrastive.mu1);
    g.get("mu2", c.contrastive.mu2);
    g.get("normalize_embeddings", c.contrastive.normalize_embeddings);
    g.get("include_self", c.contrastive.include_self);
    g.finish();
  }
  if (const json* w = f.child("sugr")) {
    Fields g(*w, f.path("sugr"));
    g.get("alpha", c.sugr.alpha);
    g.get("detach_uncertainty_weight", c.sugr.detach_uncertainty_weight);
    g.get("use_uncertainty", c.sugr.use_uncertainty);
    g.get("use_logits", c.sugr.use_logits);
    g.finish();
  }
  f.finish();
  try {
    c.optimizer = optimizer_from_string(opt);
  } catch (const Error& e) {
    throw ConfigError(f.path("optimizer") + ": " + e.what());
  }
  return c;
}

namespace {

EvalConfig eval_config_from_json(const json& j, const std::string& where) {
  EvalConfig c;
  Fields f(j, where);
  f.get("scenarios", c.scenarios);
  f.get("seeds", c.seeds);
  std::string policy = to_string(c.zero_policy);
  f.get("zero_label_policy", policy);
  f.finish();
  try {
    c.zero_policy = zero_label_policy_from_string(policy);
  } catch (const Error& e) {
    throw ConfigError(f.path("zero_label_policy") + ": " + e.what());
  }
  return c;
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  Fields f(j, "config");
  if (const json* v = f.child("data")) c.data = synth_config_from_json(*v, "data");
  if (const json* v = f.child("model")) c.model = backbone_config_from_json(*v, "model");
  if (const json* v = f.child("teacher")) c.teacher = train_config_from_json(*v, "teacher");
  if (const json* v = f.child("student")) c.student = train_config_from_json(*v, "student");
  if (const json* v = f.child("eval")) c.eval = eval_config_from_json(*v, "eval");
  f.get("seeds", c.seeds);
  f.get("output_dir", c.output_dir);
  f.get("jobs", c.jobs);
  std::optional<std::uint64_t> seed;
  if (const json* v = f.child("seed")) {
    std::uint64_t s = 0;
    Fields::read(*v, "seed", s);
    seed = s;
  }
  (void)f.child("extends");
  f.finish();
  if (seed) c = c.with_seed(*seed);
  c.validate();
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  wrap_validation("data", [&] { data.validate(); });
  if (data.task == TaskKind::classification && data.num_classes < 2) {
    throw ConfigError("data.num_classes: classification needs num_classes >= 2");
  }
  wrap_validation("model", [&] { model.validate(data.modalities); });
  wrap_validation("teacher", [&] { teacher.validate(data.modalities); });
  wrap_validation("student", [&] { student.validate(data.modalities); });
  wrap_validation("eval", [&] { (void)parse_scenarios(eval.scenarios, data.modalities); });
  if (eval.seeds.empty()) throw ConfigError("eval.seeds: at least one seed is required");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

ExperimentConfig ExperimentConfig::with_seed(std::uint64_t seed) const {
  ExperimentConfig c = *this;
  c.data.seed = seed;
  c.teacher.seed = seed;
  c.student.seed = seed;
  return c;
}

// ---- presets -----------------------------------------------------------------------

std::vector<std::string> preset_names() { return {"default", "paper-defaults", "smoke"}; }

json preset_json(const std::string& name) {
  ExperimentConfig c;
  if (name == "paper-defaults") {
    // Categorical setting of the reference configuration.
    c.data.seed = 1111;
    c.teacher.seed = 1111;
    c.student.seed = 1111;
    c.seeds = {1111, 1112, 1113};
    c.teacher.optimizer = OptimizerKind::adam;
    c.teacher.learning_rate = 1e-3;
    c.student.optimizer = OptimizerKind::adam;
    c.student.learning_rate = 8e-4;
    c.teacher.weights.beta = 0.01;
    c.student.weights = {0.1, 100.0, 0.01, true, true};
    c.student.sugr.alpha = 0.2;
    c.student.contrastive.temperature = 0.2;
    c.output_dir = "runs/paper-defaults";
    return to_json(c);
  }
  // Detaching the weight stops the student from lowering L_Sugr by copying
  // the teacher's entropy instead of fitting the labels.
  c.student.weights.zeta = 10.0;
  c.student.sugr.detach_uncertainty_weight = true;
  if (name == "default") return to_json(c);
  if (name == "smoke") {
    c.data.n_train = 192;
    c.data.n_test = 96;
    c.data.seq_lens = {5, 6, 7};
    c.data.feature_dims = {6, 4, 5};
    c.model.seq_len = 4;
    c.model.dim = 8;
    c.model.fusion_layers = 1;
    c.teacher.epochs = 3;
    c.student.epochs = 3;
    c.eval.seeds = {0};
    c.seeds = {5576};
    c.output_dir = "runs/smoke";
    return to_json(c);
  }
  throw ConfigError("extends: unknown preset '" + name + "'");
}

ExperimentConfig preset(const std::string& name) { return experiment_from_json(preset_json(name)); }

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON syntax error: " +
                      e.what());
  }
  if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");
  json base = preset_json("default");
  if (auto it = doc.find("extends"); it != doc.end()) {
    if (!it->is_string()) throw ConfigError("extends: expected a preset name");
    base = preset_json(it->get<std::string>());
  }
  base.merge_patch(doc);
  return experiment_from_json(base);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace mcur
