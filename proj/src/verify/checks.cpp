// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "checks.hpp"

#include "errors.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "losses.hpp"
#include "oracles.hpp"
#include "synthdata.hpp"
#include "training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

namespace mcur::verify {

namespace fs = std::filesystem;
using nlohmann::json;

std::string CheckResult::line() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.1f s)", seconds);
  return std::string(passed ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + name + ": " + detail + buf;
}

json CheckResult::to_json() const {
  return {{"id", id}, {"name", name}, {"passed", passed}, {"detail", detail}, {"seconds", seconds}};
}

namespace {

class Timer {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Rows random_rows(std::size_t b, std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Rows r(b, std::vector<double>(d));
  for (auto& row : r) {
    for (double& v : row) v = n(rng);
  }
  return r;
}

Matrix to_matrix(const Rows& r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.front().size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
  }
  return m;
}

/// Absolute difference scaled down for large magnitudes.
double scaled_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Sets of samples with 1x1 tensors; enough for mask arithmetic.
std::vector<Sample> tiny_samples(std::size_t n, int m) {
  std::vector<Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int p = 0; p < m; ++p) out[i].modalities.push_back({p, Matrix::Zero(1, 1)});
    out[i].mask = AvailabilityMask::complete(m);
    out[i].label = Label::classification(0, 2);
    out[i].sample_id = static_cast<std::int64_t>(i);
  }
  return out;
}

}  // namespace

// ---- 1: telescoping ---------------------------------------------------------------

CheckResult check_telescoping(int batches, std::uint64_t seed) {
  Timer timer;
  CheckResult r{1, "telescoping identity", false, "", 0.0};
  Rng rng = make_rng(seed, 1);
  std::uniform_int_distribution<int> b_dist(2, 16), d_dist(2, 16), k_dist(2, 4), c_dist(1, 7);
  double worst = 0.0;
  std::size_t anchors = 0;
  try {
    for (int t = 0; t < batches; ++t) {
      const auto b = static_cast<std::size_t>(b_dist(rng));
      const auto d = static_cast<std::size_t>(d_dist(rng));
      const int k = k_dist(rng);
      std::uniform_int_distribution<int> cls(0, k - 1);
      const Rows e = random_rows(b, d, rng);
      std::vector<CombinationId> combos(b);
      std::vector<int> classes(b);
      for (std::size_t i = 0; i < b; ++i) {
        combos[i] = static_cast<CombinationId>(c_dist(rng));
        classes[i] = cls(rng);
      }
      ContrastiveConfig cfg;  // mu1 = mu2 = 1
      ContrastiveInfo info;
      (void)mcbcl_loss(to_matrix(e), combos, classes, cfg, &info);
      const auto ref = oracle_supcon_per_anchor(e, classes, cfg.temperature, cfg.normalize_embeddings);
      for (std::size_t i = 0; i < b; ++i) {
        worst = std::max(worst, std::abs(info.per_anchor[i] - ref[i]));
        ++anchors;
      }
    }
    r.passed = worst <= 1e-6;
    r.detail = "max per-anchor |diff| = " + sci(worst) + " over " + std::to_string(batches) + " batches, " +
               std::to_string(anchors) + " anchors (tol 1e-6)";
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  if (r.seconds >= 10.0) {
    r.passed = false;
    r.detail += "; exceeded the 10 s budget";
  }
  return r;
}

// ---- 2: oracle equivalence ----------------------------------------------------------

CheckResult check_oracles(std::uint64_t seed) {
  Timer timer;
  CheckResult r{2, "loss oracle equivalence", false, "", 0.0};
  Rng rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::map<std::string, double> worst;
  const auto note = [&](const std::string& what, double diff) { worst[what] = std::max(worst[what], diff); };
  try {
    for (int rep = 0; rep < 40; ++rep) {
      for (std::size_t b = 1; b <= 8; ++b) {
        // contrastive with arbitrary mu weights, both self conventions
        const auto d = static_cast<std::size_t>(2 + rep % 6);
        const Rows e = random_rows(b, d, rng);
        std::vector<CombinationId> combos(b);
        std::vector<int> classes(b);
        for (std::size_t i = 0; i < b; ++i) {
          combos[i] = static_cast<CombinationId>(1 + static_cast<int>(unit(rng) * 3.0));
          classes[i] = static_cast<int>(unit(rng) * 2.0);
        }
        for (bool self : {true, false}) {
          for (bool normalize : {true, false}) {
            ContrastiveConfig cfg;
            cfg.mu1 = 0.5;
            cfg.mu2 = 0.3;
            cfg.include_self = self;
            cfg.normalize_embeddings = normalize;
            cfg.temperature = normalize ? 0.2 : 1.0;
            const double got = mcbcl_loss(to_matrix(e), combos, classes, cfg);
            const double want =
                oracle_contrastive(e, combos, classes, cfg.temperature, cfg.mu1, cfg.mu2, normalize, self);
            note("contrastive", scaled_diff(got, want));
          }
        }

        // decoupled logits distillation and regression distillation
        const int k = 2 + static_cast<int>(b % 5);
        std::vector<double> zs(static_cast<std::size_t>(k)), zt(static_cast<std::size_t>(k));
        for (auto& v : zs) v = 2.0 * normal(rng);
        for (auto& v : zt) v = 2.0 * normal(rng);
        const int target = static_cast<int>(unit(rng) * k) % k;
        const double alpha = unit(rng);
        Eigen::RowVectorXd rs = Eigen::Map<Eigen::RowVectorXd>(zs.data(), k);
        Eigen::RowVectorXd rt = Eigen::Map<Eigen::RowVectorXd>(zt.data(), k);
        note("dkd", scaled_diff(dkd(rs, rt, target, alpha), oracle_dkd(zs, zt, target, alpha)));
        const double ys = normal(rng), yt = normal(rng);
        note("regression distill", scaled_diff(regression_distill(ys, yt), (ys - yt) * (ys - yt)));

        // uncertainty-guided product
        std::vector<double> u(b), task(b), lg(b);
        for (std::size_t i = 0; i < b; ++i) {
          u[i] = unit(rng);
          task[i] = 2.0 * unit(rng);
          lg[i] = unit(rng);
        }
        note("sugr", scaled_diff(sugr_loss(u, task, lg), oracle_sugr(u, task, lg)));

        // calibration, binary (regression outputs) and one-vs-all (classification)
        Matrix preds(static_cast<Eigen::Index>(b), 1);
        std::vector<Label> reg_labels;
        std::vector<double> p_ref, y_ref;
        for (std::size_t i = 0; i < b; ++i) {
          const double z = 2.0 * normal(rng);
          double y = normal(rng);
          if (y == 0.0) y = 0.5;
          preds(static_cast<Eigen::Index>(i), 0) = z;
          reg_labels.push_back(Label::regression(y));
          p_ref.push_back(1.0 / (1.0 + std::exp(-z)));
          y_ref.push_back(y > 0.0 ? 1.0 : 0.0);
        }
        note("brier (binary)", scaled_diff(brier(preds, reg_labels), oracle_brier(p_ref, y_ref)));
        note("nll (binary)", scaled_diff(nll(preds, reg_labels), oracle_nll(p_ref, y_ref)));
        const Rows logits = random_rows(b, static_cast<std::size_t>(k), rng);
        std::vector<Label> cls_labels;
        std::vector<int> cls_ref;
        for (std::size_t i = 0; i < b; ++i) {
          const int c = static_cast<int>(unit(rng) * k) % k;
          cls_labels.push_back(Label::classification(c, k));
          cls_ref.push_back(c);
        }
        note("brier (one-vs-all)",
             scaled_diff(brier(to_matrix(logits), cls_labels), oracle_multiclass_brier(logits, cls_ref)));
        note("nll (one-vs-all)", scaled_diff(nll(to_matrix(logits), cls_labels), oracle_multiclass_nll(logits, cls_ref)));
      }
    }
    double overall = 0.0;
    std::string detail;
    for (const auto& [name, v] : worst) {
      overall = std::max(overall, v);
      detail += (detail.empty() ? "" : ", ") + name + " " + sci(v);
    }
    r.passed = overall <= 1e-8;
    r.detail = "max diff " + sci(overall) + " (tol 1e-8; " + detail + ")";
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  if (r.seconds >= 10.0) {
    r.passed = false;
    r.detail += "; exceeded the 10 s budget";
  }
  return r;
}

// ---- 3: gradients -----------------------------------------------------------------------

namespace {

constexpr double kStep = 1e-5;
// Central differences carry ~1e-10 of roundoff at this step; exactly-zero
// gradients (e.g. attention key biases) are compared against this floor.
constexpr double kRelFloor = 1e-5;

void compare(GradStats& s, double analytic, double numeric, const std::string& what) {
  const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
  ++s.checked;
  if (rel > s.max_rel_error) {
    s.max_rel_error = rel;
    s.worst = what + " (analytic " + sci(analytic) + ", numeric " + sci(numeric) + ")";
  }
}

struct TinySetup {
  Dataset data;
  std::vector<AvailabilityMask> masks;
  std::vector<CombinationId> combos;
  std::vector<Label> labels;
  TeacherTargets targets;
  StudentObjective objective;
};

TinySetup tiny_setup(TaskKind kind, std::uint64_t seed, const BackboneConfig& bc) {
  TinySetup t;
  SynthConfig sc;
  sc.n_train = 4;
  sc.n_test = 1;
  sc.task = kind;
  sc.num_classes = 4;
  sc.seq_lens = {5, 4, 6};
  sc.feature_dims = {3, 2, 3};
  sc.seed = seed;
  t.data = generate_dataset(sc);
  // Mixed availability so zero-filled modalities are exercised.
  t.combos = {7, 3, 1, 6};
  for (auto c : t.combos) t.masks.push_back(AvailabilityMask::from_combination(c, 3));
  for (const auto& s : t.data.train) t.labels.push_back(s.label);
  Rng rng = make_rng(seed, 9);
  std::normal_distribution<double> n(0.0, 1.0);
  const int k = kind == TaskKind::classification ? 4 : 1;
  t.targets.embedding = Matrix::NullaryExpr(4, bc.dim, [&] { return n(rng); });
  t.targets.logits = Matrix::NullaryExpr(4, k, [&] { return n(rng); });
  t.objective.weights = {0.5, 1.0, 0.01, true, true};
  return t;
}

}  // namespace

GradStats gradcheck_student(TaskKind kind, std::uint64_t seed) {
  BackboneConfig bc;
  bc.seq_len = 4;
  bc.dim = 8;
  bc.prompt_lens = {2, 2, 2};
  const TinySetup t = tiny_setup(kind, seed, bc);
  ModelShape shape = model_shape_for(t.data.train);
  Backbone model(bc, shape, Role::student, seed);
  Batch batch;
  for (const auto& s : t.data.train) batch.samples.push_back(&s);

  const auto loss = [&](bool backward) {
    ad::Tape tape;
    Rng noise = make_rng(seed, 33);  // identical reparameterization noise on every call
    FusionOutput out = model.forward(tape, batch, VibMode::sample, &noise, &t.masks);
    ObjectiveResult obj = student_objective(out, t.targets, t.labels, t.combos, t.objective);
    if (backward) {
      model.zero_grad();
      tape.backward(obj.total);
    }
    return obj.total.scalar();
  };
  (void)loss(true);
  GradStats stats;
  for (auto& p : model.parameters()) {
    const Matrix analytic = p.grad;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& w = p.value.data()[i];
      const double orig = w;
      w = orig + kStep;
      const double up = loss(false);
      w = orig - kStep;
      const double down = loss(false);
      w = orig;
      compare(stats, analytic.data()[i], (up - down) / (2.0 * kStep), p.name + "[" + std::to_string(i) + "]");
    }
  }
  return stats;
}

GradStats gradcheck_loss_inputs(std::uint64_t seed) {
  Rng rng = make_rng(seed, 44);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Index b = 6, d = 5, k = 4;
  Matrix e = Matrix::NullaryExpr(b, d, [&] { return n(rng); });
  Matrix z = Matrix::NullaryExpr(b, k, [&] { return n(rng); });
  const Matrix et = Matrix::NullaryExpr(b, d, [&] { return n(rng); });
  const Matrix zt = Matrix::NullaryExpr(b, k, [&] { return n(rng); });
  const std::vector<CombinationId> combos{7, 7, 3, 3, 1, 7};
  std::vector<Label> labels;
  std::vector<int> classes;
  for (Eigen::Index i = 0; i < b; ++i) {
    labels.push_back(Label::classification(static_cast<int>(i % k), static_cast<int>(k)));
    classes.push_back(static_cast<int>(i % 2));
  }
  ContrastiveConfig cfg;
  cfg.mu1 = 0.7;
  cfg.mu2 = 0.4;
  const auto value = [&](Matrix* grad_e, Matrix* grad_z) {
    ad::Tape tape;
    ad::Var ev = tape.leaf(e);
    ad::Var zv = tape.leaf(z);
    ad::Var cl = mcbcl_loss(ev, combos, classes, cfg);
    ad::Var mse = ad::mean(rep_mse(ev, et));
    ad::Var hs = prediction_uncertainty(zv, labels, TaskKind::classification);
    ad::Var ht = tape.constant(prediction_uncertainty(tape.constant(zt), labels, TaskKind::classification).value());
    ad::Var sg = sugr_loss(uncertainty_gap(ht, hs), task_loss(zv, labels, TaskKind::classification),
                           logits_distill(zv, zt, labels, TaskKind::classification, 0.2), false);
    ad::Var total = ad::add(ad::add(ad::scale(cl, 0.5), mse), sg);
    if (grad_e != nullptr) {
      tape.backward(total);
      *grad_e = tape.grad(ev);
      *grad_z = tape.grad(zv);
    }
    return total.scalar();
  };
  Matrix ge, gz;
  (void)value(&ge, &gz);
  GradStats stats;
  for (auto [m, g, name] : {std::tuple{&e, &ge, "embedding"}, std::tuple{&z, &gz, "logits"}}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      double& w = m->data()[i];
      const double orig = w;
      w = orig + kStep;
      const double up = value(nullptr, nullptr);
      w = orig - kStep;
      const double down = value(nullptr, nullptr);
      w = orig;
      compare(stats, g->data()[i], (up - down) / (2.0 * kStep), std::string(name) + "[" + std::to_string(i) + "]");
    }
  }
  return stats;
}

CheckResult check_gradients(std::uint64_t seed) {
  Timer timer;
  CheckResult r{3, "gradient checks", false, "", 0.0};
  try {
    const GradStats cls = gradcheck_student(TaskKind::classification, seed);
    const GradStats reg = gradcheck_student(TaskKind::regression, seed + 1);
    const GradStats inputs = gradcheck_loss_inputs(seed);
    const double worst = std::max({cls.max_rel_error, reg.max_rel_error, inputs.max_rel_error});
    r.passed = worst < 1e-4;
    r.detail = "max rel err " + sci(worst) + " (tol 1e-4) over " +
               std::to_string(cls.checked + reg.checked + inputs.checked) +
               " entries; classification " + sci(cls.max_rel_error) + ", regression " + sci(reg.max_rel_error) +
               ", loss inputs " + sci(inputs.max_rel_error);
    if (!r.passed) {
      r.detail += "; worst: classification " + cls.worst + ", regression " + reg.worst + ", inputs " + inputs.worst;
    }
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  if (r.seconds >= 120.0) {
    r.passed = false;
    r.detail += "; exceeded the 2 min budget";
  }
  return r;
}

// ---- 4: spot values -------------------------------------------------------------------

CheckResult check_spot_values() {
  Timer timer;
  CheckResult r{4, "closed-form spot values", false, "", 0.0};
  try {
    Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
    Eigen::RowVectorXd y(4);
    y << 0.3, -1.2, 2.5, 0.0;
    const std::vector<double> half{0.5}, pos{1.0}, neg{0.0};
    const std::vector<std::pair<std::string, double>> errs{
        {"vib_kl(1,1)", std::abs(vib_kl(one, one) - 0.5)},
        {"entropy uniform K=4", std::abs(prediction_uncertainty(Eigen::RowVectorXd::Zero(4)) - std::log(4.0))},
        {"nll p=0.5 y=1", std::abs(nll_score(half, pos) - std::log(2.0))},
        {"nll p=0.5 y=0", std::abs(nll_score(half, neg) - std::log(2.0))},
        {"dkd(y,y)", std::abs(dkd(y, y, 2, 0.2))},
        {"regression uncertainty y=y", std::abs(regression_uncertainty(0.7, 0.7))}};
    double worst = 0.0;
    std::string detail;
    for (const auto& [name, e] : errs) {
      worst = std::max(worst, e);
      detail += (detail.empty() ? "" : ", ") + name + " " + sci(e);
    }
    r.passed = worst <= 1e-10;
    r.detail = "max |diff| " + sci(worst) + " (tol 1e-10; " + detail + ")";
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  return r;
}

// ---- 5: protocols -----------------------------------------------------------------------

CheckResult check_protocols(std::uint64_t seed) {
  Timer timer;
  CheckResult r{5, "protocol properties", false, "", 0.0};
  try {
    Rng rng = make_rng(seed, 5);
    std::uniform_int_distribution<int> n_dist(1, 40), m_dist(2, 4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t zero_masks = 0, mr_violations = 0;
    double worst_gap = 0.0;
    for (int draw = 0; draw < 10000; ++draw) {
      const auto n = static_cast<std::size_t>(n_dist(rng));
      const int m = m_dist(rng);
      const double max_mr = static_cast<double>(m - 1) / m;
      const double target = std::max(1e-9, unit(rng) * max_mr);
      const auto out = apply_random(tiny_samples(n, m), target, rng());
      std::size_t kept = 0;
      for (const auto& s : out) {
        if (s.mask.count() == 0) ++zero_masks;
        kept += static_cast<std::size_t>(s.mask.count());
      }
      const double mr = 1.0 - static_cast<double>(kept) / static_cast<double>(n * static_cast<std::size_t>(m));
      const double gap = std::abs(mr - target);
      const double bound = 1.0 / static_cast<double>(n * static_cast<std::size_t>(m));
      worst_gap = std::max(worst_gap, gap / bound);
      if (gap > bound + 1e-12) ++mr_violations;
    }

    PatternSampler sampler(uniform_pattern_distribution(3), 3);
    Rng prng = make_rng(seed, 6);
    const int draws = 100000;
    std::vector<int> counts(8, 0);
    for (int i = 0; i < draws; ++i) ++counts[sampler(prng)];
    const double p = 1.0 / 7.0;
    const double sigma = std::sqrt(p * (1.0 - p) / draws);
    double worst_z = 0.0;
    for (int c = 1; c <= 7; ++c) worst_z = std::max(worst_z, std::abs(counts[static_cast<std::size_t>(c)] / double(draws) - p) / sigma);
    r.passed = zero_masks == 0 && mr_violations == 0 && counts[0] == 0 && worst_z <= 3.0;
    r.detail = "10^4 random draws: " + std::to_string(zero_masks) + " empty masks, " + std::to_string(mr_violations) +
               " MR violations (worst gap " + sci(worst_gap) + " of 1/(N m)); 10^5 pattern draws: empty " +
               std::to_string(counts[0]) + ", worst |z| " + sci(worst_z) + " (limit 3)";
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  return r;
}

// ---- 6, 9, 10: smoke pipeline ---------------------------------------------------------

namespace {

fs::path scratch_dir(const std::string& tag) {
  const fs::path base = fs::temp_directory_path() / ("mcur-verify-" + std::to_string(::getpid()) + "-" + tag);
  fs::remove_all(base);
  fs::create_directories(base);
  return base;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

EvalOptions eval_options(const ExperimentConfig& c) {
  EvalOptions o;
  o.scenarios = parse_scenarios(c.eval.scenarios, c.data.modalities);
  o.seeds = c.eval.seeds;
  o.jobs = 1;
  o.zero_policy = c.eval.zero_policy;
  return o;
}

std::string pipeline_csv(const ExperimentConfig& c, const fs::path& dir) {
  save_dataset(generate_dataset(c.data), dir / "data");
  const Dataset ds = load_dataset(dir / "data");
  save_checkpoint(train_teacher(ds.train, c.model, c.teacher).checkpoint, dir / "teacher");
  const Checkpoint teacher = load_checkpoint(dir / "teacher");
  save_checkpoint(train_student(ds.train, teacher, c.model, c.student).checkpoint, dir / "student");
  const Checkpoint student = load_checkpoint(dir / "student");
  write_text(dir / "results.csv", results_csv(run_suite(student.model, ds.test, eval_options(c))));
  return read_file(dir / "results.csv");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CheckResult check_determinism(const ExperimentConfig& smoke) {
  Timer timer;
  CheckResult r{6, "determinism", false, "", 0.0};
  try {
    const fs::path dir = scratch_dir("determinism");
    const std::string a = pipeline_csv(smoke, dir / "run1");
    const std::string b = pipeline_csv(smoke, dir / "run2");
    const bool data_same = read_file(dir / "run1/data/train_x0.f64") == read_file(dir / "run2/data/train_x0.f64");
    r.passed = a == b && data_same && !a.empty();
    r.detail = std::string("smoke pipeline twice: CSV ") + (a == b ? "byte-identical" : "DIFFERS") + " (" +
               std::to_string(a.size()) + " bytes), dataset " + (data_same ? "byte-identical" : "DIFFERS");
    fs::remove_all(dir);
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  if (r.seconds >= 300.0) {
    r.passed = false;
    r.detail += "; exceeded the 5 min budget";
  }
  return r;
}

CheckResult check_frozen_teacher(const ExperimentConfig& smoke) {
  Timer timer;
  CheckResult r{9, "frozen teacher", false, "", 0.0};
  try {
    const Dataset ds = generate_dataset(smoke.data);
    const Checkpoint teacher = train_teacher(ds.train, smoke.model, smoke.teacher).checkpoint;
    std::vector<Matrix> before;
    for (const auto& p : teacher.model.parameters()) before.push_back(p.value);
    const std::string hash_before = parameter_hash(teacher.model);
    const auto student = train_student(ds.train, teacher, smoke.model, smoke.student);
    bool bytes_equal = true;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const auto& now = teacher.model.parameters()[i].value;
      bytes_equal = bytes_equal && std::memcmp(now.data(), before[i].data(),
                                               static_cast<std::size_t>(now.size()) * sizeof(double)) == 0;
    }
    const std::string hash_after = parameter_hash(teacher.model);
    r.passed = bytes_equal && hash_before == hash_after && parameter_hash(student.checkpoint.model) != hash_before;
    r.detail = "teacher hash " + hash_before + " before, " + hash_after + " after; parameter bytes " +
               (bytes_equal ? "identical" : "CHANGED");
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  return r;
}

CheckResult check_metric_table(const ExperimentConfig& smoke) {
  Timer timer;
  CheckResult r{10, "metric-table shape", false, "", 0.0};
  try {
    const Dataset ds = generate_dataset(smoke.data);
    const Checkpoint teacher = train_teacher(ds.train, smoke.model, smoke.teacher).checkpoint;
    const Checkpoint student = train_student(ds.train, teacher, smoke.model, smoke.student).checkpoint;
    EvalOptions o;
    o.seeds = {smoke.eval.seeds.front()};
    const std::string csv = results_csv(run_suite(student.model, ds.test, o));

    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    const bool header_ok = line == "scenario,label,seed,acc,f1,brier,nll";
    std::vector<std::vector<double>> rows;
    std::vector<double> avg;
    std::size_t avg_rows = 0;
    while (std::getline(in, line)) {
      const auto f = split_csv_line(line);
      if (f.size() != 7) throw MetricError("malformed CSV line: " + line);
      std::vector<double> v;
      for (std::size_t k = 3; k < 7; ++k) v.push_back(std::strtod(f[k].c_str(), nullptr));
      if (f[0] == "avg") {
        ++avg_rows;
        avg = v;
      } else {
        rows.push_back(v);
      }
    }
    double worst = 0.0;
    if (avg.size() == 4 && !rows.empty()) {
      for (std::size_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (const auto& row : rows) s += row[k];
        worst = std::max(worst, std::abs(s / static_cast<double>(rows.size()) - avg[k]));
      }
    }
    r.passed = header_ok && rows.size() == 14 && avg_rows == 1 && worst <= 1e-12;
    r.detail = std::to_string(rows.size()) + " scenario rows + " + std::to_string(avg_rows) +
               " Avg. row; max |Avg. - mean| = " + sci(worst) + " (tol 1e-12)" + (header_ok ? "" : "; bad header");
  } catch (const std::exception& e) {
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = timer.seconds();
  return r;
}

std::vector<CheckResult> run_fast_checks(const ExperimentConfig& smoke, const Progress& progress) {
  std::vector<CheckResult> out;
  const auto add = [&](CheckResult r) {
    if (progress) progress(r.line());
    out.push_back(std::move(r));
  };
  add(check_telescoping());
  add(check_oracles());
  add(check_gradients());
  add(check_spot_values());
  add(check_protocols());
  add(check_determinism(smoke));
  add(check_frozen_teacher(smoke));
  add(check_metric_table(smoke));
  return out;
}

// ---- 7, 8: directional experiments --------------------------------------------------

int count_inversions(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    if (v[k + 1] < v[k]) ++n;
  }
  return n;
}

DirectionalOutcome run_directional_checks(const ExperimentConfig& config, const Progress& progress) {
  Timer timer;
  DirectionalOutcome out;
  out.trend = {7, "uncertainty rises with MR", false, "", 0.0};
  out.ablation = {8, "full model beats each ablation", false, "", 0.0};
  const std::vector<AblationKey> keys{AblationKey::cl, AblationKey::uncer, AblationKey::logits, AblationKey::mse};
  try {
    const auto scenarios = canonical_scenarios(config.data.modalities);
    std::vector<double> mrs;
    for (const auto& s : scenarios) {
      if (s.kind == MissingProtocol::Kind::random) mrs.push_back(s.mr);
    }
    std::vector<double> nll_sum(mrs.size(), 0.0), brier_sum(mrs.size(), 0.0);
    std::map<std::string, double> f1_sum;
    json per_seed = json::array();
    for (const auto seed : config.seeds) {
      const ExperimentConfig c = config.with_seed(seed);
      const Dataset ds = generate_dataset(c.data);
      const Checkpoint teacher = train_teacher(ds.train, c.model, c.teacher).checkpoint;
      EvalOptions o;
      o.scenarios = scenarios;
      o.seeds = c.eval.seeds;
      o.zero_policy = c.eval.zero_policy;
      const SuiteResult teacher_res = run_suite(teacher.model, ds.test, o);
      json seed_json = {{"seed", seed}, {"teacher_avg_f1", teacher_res.average.f1}};

      const auto run_variant = [&](const std::string& name, const TrainConfig& tc) {
        const Checkpoint student = train_student(ds.train, teacher, c.model, tc).checkpoint;
        SuiteResult res = run_suite(student.model, ds.test, o);
        f1_sum[name] += res.average.f1;
        seed_json["avg_f1"][name] = res.average.f1;
        if (progress) progress("seed " + std::to_string(seed) + " " + name + ": avg F1 " + sci(res.average.f1));
        return res;
      };
      const SuiteResult full = run_variant("full", c.student);
      std::size_t k = 0;
      for (const auto& s : full.scenarios) {
        if (s.scenario.kind != MissingProtocol::Kind::random) continue;
        nll_sum[k] += s.mean.nll;
        brier_sum[k] += s.mean.brier;
        seed_json["nll_by_mr"].push_back(s.mean.nll);
        seed_json["brier_by_mr"].push_back(s.mean.brier);
        ++k;
      }
      for (const auto key : keys) (void)run_variant("w/o " + to_string(key), ablate(c.student, key));
      per_seed.push_back(std::move(seed_json));
    }
    const double n = static_cast<double>(config.seeds.size());
    std::vector<double> nll_mean, brier_mean;
    for (std::size_t k = 0; k < mrs.size(); ++k) {
      nll_mean.push_back(nll_sum[k] / n);
      brier_mean.push_back(brier_sum[k] / n);
    }
    const int inv_nll = count_inversions(nll_mean), inv_brier = count_inversions(brier_mean);
    out.trend.passed = inv_nll <= 1 && inv_brier <= 1 && config.seeds.size() >= 3;
    std::ostringstream t;
    t << config.seeds.size() << " seeds; NLL over MR 0.1..0.7:";
    for (double v : nll_mean) t << " " << sci(v);
    t << " (" << inv_nll << " inversions); Brier:";
    for (double v : brier_mean) t << " " << sci(v);
    t << " (" << inv_brier << " inversions); limit 1 each";
    out.trend.detail = t.str();

    const double full = f1_sum["full"] / n;
    bool all_ok = config.seeds.size() >= 3;
    std::ostringstream a;
    a << "scenario-averaged F1 over " << config.seeds.size() << " seeds: full " << sci(full);
    for (const auto key : keys) {
      const double v = f1_sum["w/o " + to_string(key)] / n;
      a << ", w/o " << to_string(key) << " " << sci(v) << (full >= v ? "" : " (higher)");
      all_ok = all_ok && full >= v;
    }
    out.ablation.passed = all_ok;
    out.ablation.detail = a.str();
    out.details = {{"seeds", per_seed}, {"mr", mrs}, {"nll_mean", nll_mean}, {"brier_mean", brier_mean}};
    for (const auto& [name, v] : f1_sum) out.details["avg_f1_mean"][name] = v / n;
  } catch (const std::exception& e) {
    out.trend.detail = out.ablation.detail = std::string("error: ") + e.what();
  }
  out.trend.seconds = out.ablation.seconds = timer.seconds();
  return out;
}

}  // namespace mcur::verify
