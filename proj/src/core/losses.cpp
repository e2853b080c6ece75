// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "losses.hpp"

#include "errors.hpp"

#include <cmath>
#include <limits>

namespace mcur {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kProbFloor = 1e-12;
const double kLogProbFloor = std::log(kProbFloor);

double lse_over(const Matrix& logits, std::size_t i, const std::vector<int>& set) {
  if (set.empty()) throw InvalidArgument("contrastive set is empty for anchor " + std::to_string(i));
  const auto r = static_cast<Eigen::Index>(i);
  double mx = -std::numeric_limits<double>::infinity();
  for (int j : set) mx = std::max(mx, logits(r, j));
  double s = 0.0;
  for (int j : set) s += std::exp(logits(r, j) - mx);
  return mx + std::log(s);
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t j = 0; j < n; ++j) v[j] = static_cast<int>(j);
  return v;
}

Matrix label_column(std::span<const Label> labels) {
  Matrix y(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), 0) = labels[i].value;
  return y;
}

std::vector<int> class_indices(std::span<const Label> labels, Eigen::Index k) {
  std::vector<int> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].kind != TaskKind::classification) throw InvalidArgument("expected classification labels");
    if (labels[i].class_index < 0 || labels[i].class_index >= k) {
      throw InvalidArgument("class index " + std::to_string(labels[i].class_index) + " out of range for K=" +
                            std::to_string(k));
    }
    idx[i] = labels[i].class_index;
  }
  return idx;
}

void check_rows(Var v, std::size_t n, const char* what) {
  if (v.rows() != static_cast<Eigen::Index>(n)) throw InvalidArgument(std::string(what) + ": row count mismatch");
}

void check_finite_logits(Var logits, const char* what) {
  if (!logits.value().allFinite()) throw NumericalError(std::string(what) + ": non-finite logits");
}

}  // namespace

// ---- configs -----------------------------------------------------------------

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) throw InvalidArgument("mu1 and mu2 must be >= 0");
}

void SugrConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
}

void LossWeights::validate() const {
  if (!(gamma >= 0.0) || !(zeta >= 0.0) || !(beta >= 0.0)) throw InvalidArgument("loss weights must be >= 0");
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j{{"L_CL", cl},       {"L_MSE", mse}, {"L_Uncer", uncer}, {"L_Logits", logits},
                   {"L_TASK", task},   {"L_Sugr", sugr}, {"L_VIB", vib},  {"L_all", all}};
  if (cl_degenerate) j["cl_degenerate"] = true;
  return j;
}

void LossReport::validate() const {
  for (double v : {cl, mse, uncer, logits, task, sugr, vib, all}) {
    if (!std::isfinite(v)) throw NumericalError("loss report contains a non-finite value");
  }
}

// ---- index sets --------------------------------------------------------------

bool ContrastiveIndexSets::usable(std::size_t i) const {
  return !same_combination[i].empty() && !same_both[i].empty() && !same_class[i].empty();
}

ContrastiveIndexSets build_index_sets(std::span<const CombinationId> combinations, std::span<const int> classes,
                                      bool include_self) {
  if (combinations.size() != classes.size()) throw InvalidArgument("index sets: combinations and classes differ in length");
  const std::size_t b = combinations.size();
  if (b == 0) throw InvalidArgument("index sets: empty batch");
  ContrastiveIndexSets sets;
  sets.same_combination.resize(b);
  sets.same_both.resize(b);
  sets.same_class.resize(b);
  const auto n = static_cast<Eigen::Index>(b);
  sets.combination_mask = ad::BoolMatrix::Constant(n, n, false);
  sets.both_mask = ad::BoolMatrix::Constant(n, n, false);
  sets.class_mask = ad::BoolMatrix::Constant(n, n, false);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j && !include_self) continue;
      const bool same_c = combinations[i] == combinations[j];
      const bool same_k = classes[i] == classes[j];
      const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
      if (same_c) {
        sets.same_combination[i].push_back(static_cast<int>(j));
        sets.combination_mask(r, c) = true;
      }
      if (same_k) {
        sets.same_class[i].push_back(static_cast<int>(j));
        sets.class_mask(r, c) = true;
      }
      if (same_c && same_k) {
        sets.same_both[i].push_back(static_cast<int>(j));
        sets.both_mask(r, c) = true;
      }
    }
  }
  return sets;
}

int contrastive_class(const Label& label) {
  if (label.kind == TaskKind::classification) return label.class_index;
  return label.value < 0.0 ? 0 : 1;
}

// ---- contrastive -------------------------------------------------------------

Var similarity_logits(Var embeddings, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (embeddings.rows() < 1) throw InvalidArgument("similarity_logits: empty batch");
  Var x = cfg.normalize_embeddings ? ad::l2_normalize_rows(embeddings) : embeddings;
  return ad::scale(ad::matmul_nt(x, x), 1.0 / cfg.temperature);
}

Matrix similarity_logits(const Matrix& embeddings, const ContrastiveConfig& cfg) {
  Tape tape;
  return similarity_logits(tape.constant(embeddings), cfg).value();
}

double p_comb_given_x(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets) {
  const auto all = all_indices(sets.size());
  return std::exp(lse_over(logits, i, sets.same_combination[i]) - lse_over(logits, i, all));
}

double p_class_given_comb_x(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets) {
  return std::exp(lse_over(logits, i, sets.same_both[i]) - lse_over(logits, i, sets.same_combination[i]));
}

double p_comb_given_x_class(std::size_t i, const Matrix& logits, const ContrastiveIndexSets& sets) {
  return std::exp(lse_over(logits, i, sets.same_both[i]) - lse_over(logits, i, sets.same_class[i]));
}

Var mcbcl_loss(Var embeddings, std::span<const CombinationId> combinations, std::span<const int> classes,
               const ContrastiveConfig& cfg, ContrastiveInfo* info) {
  const std::size_t b = combinations.size();
  check_rows(embeddings, b, "mcbcl_loss");
  ContrastiveIndexSets sets = build_index_sets(combinations, classes, cfg.include_self);
  Tape& tape = *embeddings.tape;
  Var logits = similarity_logits(embeddings, cfg);

  const auto n = static_cast<Eigen::Index>(b);
  ad::BoolMatrix everything = ad::BoolMatrix::Constant(n, n, true);
  if (!cfg.include_self) everything.diagonal().setConstant(false);
  Matrix weight = Matrix::Zero(n, 1);
  std::size_t used = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (sets.usable(i)) {
      ++used;
      weight(r, 0) = 1.0;
    } else {
      // Skipped anchors get full rows so their (zero-weighted) terms stay finite.
      sets.combination_mask.row(r).setConstant(true);
      sets.both_mask.row(r).setConstant(true);
      sets.class_mask.row(r).setConstant(true);
      everything.row(r).setConstant(true);
    }
  }
  if (used > 0) weight /= static_cast<double>(used);

  Var lse_all = ad::masked_logsumexp_rows(logits, everything);
  Var lse_m = ad::masked_logsumexp_rows(logits, sets.combination_mask);
  Var lse_n = ad::masked_logsumexp_rows(logits, sets.both_mask);
  Var lse_s = ad::masked_logsumexp_rows(logits, sets.class_mask);
  const double hi = std::numeric_limits<double>::infinity();
  Var log_p_comb = ad::clamp(ad::sub(lse_m, lse_all), kLogProbFloor, hi);
  Var log_p_class = ad::clamp(ad::sub(lse_n, lse_m), kLogProbFloor, hi);
  Var log_p_comb_class = ad::clamp(ad::sub(lse_n, lse_s), kLogProbFloor, hi);
  Var inner = ad::sub(ad::add(log_p_comb, ad::scale(log_p_class, cfg.mu1)), ad::scale(log_p_comb_class, cfg.mu2));
  Var per_anchor = ad::scale(inner, -1.0);
  Var loss = ad::sum(ad::mul(per_anchor, tape.constant(weight)));

  if (info != nullptr) {
    info->used_anchors = used;
    info->degenerate = used == 0;
    info->per_anchor.assign(b, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < b; ++i) {
      if (sets.usable(i)) info->per_anchor[i] = per_anchor.value()(static_cast<Eigen::Index>(i), 0);
    }
  }
  return loss;
}

double mcbcl_loss(const Matrix& embeddings, std::span<const CombinationId> combinations, std::span<const int> classes,
                  const ContrastiveConfig& cfg, ContrastiveInfo* info) {
  Tape tape;
  return mcbcl_loss(tape.constant(embeddings), combinations, classes, cfg, info).scalar();
}

// ---- per-sample terms ------------------------------------------------------

Var rep_mse(Var student, const Matrix& teacher) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols()) {
    throw InvalidArgument("rep_mse: student and teacher embeddings differ in shape");
  }
  return ad::sum_cols(ad::square(ad::sub(student, student.tape->constant(teacher))));
}

Var prediction_uncertainty(Var logits, std::span<const Label> labels, TaskKind kind) {
  check_finite_logits(logits, "prediction_uncertainty");
  check_rows(logits, labels.size(), "prediction_uncertainty");
  if (kind == TaskKind::classification) {
    Var ls = ad::log_softmax_rows(logits);
    return ad::scale(ad::sum_cols(ad::mul(ad::exp(ls), ls)), -1.0);
  }
  if (logits.cols() != 1) throw InvalidArgument("regression predictions must be a single column");
  return ad::square(ad::sub(logits.tape->constant(label_column(labels)), logits));
}

Var uncertainty_gap(Var teacher_h, Var student_h) { return ad::abs(ad::sub(teacher_h, student_h)); }

namespace {

struct DkdRow {
  double value = 0.0;
  Eigen::RowVectorXd grad;
};

/// log-softmax pieces for the target/non-target split of one row.
struct SplitLogs {
  double log_target = 0.0;      // log p_t
  double log_non_target = 0.0;  // log (1 - p_t)
  Eigen::RowVectorXd log_q;     // renormalized non-target log-probs (entry t unused)
  Eigen::RowVectorXd p;         // full softmax
};

SplitLogs split_logs(const Eigen::RowVectorXd& z, int t) {
  const auto k = z.size();
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  double mx_nt = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (j != t) mx_nt = std::max(mx_nt, z(j));
  }
  double s_nt = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (j != t) s_nt += std::exp(z(j) - mx_nt);
  }
  const double lse_nt = mx_nt + std::log(s_nt);
  SplitLogs out;
  out.log_target = z(t) - lse;
  out.log_non_target = lse_nt - lse;
  out.log_q = z.array() - lse_nt;
  out.p = (z.array() - lse).exp();
  return out;
}

double xlogx_ratio(double log_a, double log_b) {
  const double a = std::exp(log_a);
  if (a == 0.0) return 0.0;
  return a * (log_a - log_b);
}

DkdRow dkd_row(const Eigen::RowVectorXd& zs, const Eigen::RowVectorXd& zt, int t, double alpha) {
  const auto k = zs.size();
  const SplitLogs s = split_logs(zs, t);
  const SplitLogs te = split_logs(zt, t);
  const double kl_binary = xlogx_ratio(te.log_target, s.log_target) + xlogx_ratio(te.log_non_target, s.log_non_target);
  double kl_non_target = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (j != t) kl_non_target += xlogx_ratio(te.log_q(j), s.log_q(j));
  }
  DkdRow row;
  row.value = alpha * kl_binary + (1.0 - alpha) * kl_non_target;

  // d/dz_j KL(b_t||b_s) = (delta_jt - p_j) * (-bt0 + bt1 * p_t / (1 - p_t))
  const double bt0 = std::exp(te.log_target);
  const double bt1 = std::exp(te.log_non_target);
  const double odds = std::exp(s.log_target - s.log_non_target);
  const double coef = -bt0 + bt1 * odds;
  row.grad = Eigen::RowVectorXd::Zero(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double delta = j == t ? 1.0 : 0.0;
    row.grad(j) += alpha * (delta - s.p(j)) * coef;
    // d/dz_j KL(q_t||q_s) = q_s_j - q_t_j on non-target entries
    if (j != t) row.grad(j) += (1.0 - alpha) * (std::exp(s.log_q(j)) - std::exp(te.log_q(j)));
  }
  return row;
}

}  // namespace

Var logits_distill(Var student_logits, const Matrix& teacher_logits, std::span<const Label> labels, TaskKind kind,
                   double alpha) {
  check_finite_logits(student_logits, "logits_distill");
  check_rows(student_logits, labels.size(), "logits_distill");
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols()) {
    throw InvalidArgument("logits_distill: student and teacher logits differ in shape");
  }
  Tape& tape = *student_logits.tape;
  if (kind == TaskKind::regression) {
    return ad::square(ad::sub(student_logits, tape.constant(teacher_logits)));
  }
  if (student_logits.cols() < 2) throw InvalidArgument("logits_distill: DKD needs K >= 2");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("logits_distill: alpha must lie in [0, 1]");
  const auto targets = class_indices(labels, student_logits.cols());
  const auto b = student_logits.rows();
  Matrix values(b, 1);
  Matrix grads(b, student_logits.cols());
  for (Eigen::Index r = 0; r < b; ++r) {
    DkdRow row = dkd_row(student_logits.value().row(r), teacher_logits.row(r), targets[static_cast<std::size_t>(r)], alpha);
    values(r, 0) = row.value;
    grads.row(r) = row.grad;
  }
  const int in = student_logits.id;
  return tape.record(std::move(values), {student_logits}, [in, grads](Tape& t, int self) {
    Matrix g = grads.array().colwise() * t.upstream(self).col(0).array();
    t.accumulate(in, g);
  });
}

Var task_loss(Var logits, std::span<const Label> labels, TaskKind kind) {
  check_finite_logits(logits, "task_loss");
  check_rows(logits, labels.size(), "task_loss");
  if (kind == TaskKind::classification) {
    const auto targets = class_indices(labels, logits.cols());
    return ad::scale(ad::pick(ad::log_softmax_rows(logits), targets), -1.0);
  }
  if (logits.cols() != 1) throw InvalidArgument("regression predictions must be a single column");
  return ad::abs(ad::sub(logits.tape->constant(label_column(labels)), logits));
}

Var sugr_loss(Var uncertainty, Var task, Var logits, bool detach_weight) {
  if (uncertainty.rows() != task.rows() || task.rows() != logits.rows() || uncertainty.cols() != 1 ||
      task.cols() != 1 || logits.cols() != 1) {
    throw InvalidArgument("sugr_loss: per-sample vectors must be aligned (B, 1) columns");
  }
  Var weight = detach_weight ? ad::detach(uncertainty) : uncertainty;
  return ad::mean(ad::mul(weight, ad::add(task, logits)));
}

// ---- doubles -------------------------------------------------------------

double prediction_uncertainty(const Eigen::RowVectorXd& logits) {
  Tape tape;
  const std::vector<Label> dummy(1, Label::classification(0, std::max<int>(2, static_cast<int>(logits.size()))));
  return prediction_uncertainty(tape.constant(logits), dummy, TaskKind::classification).scalar();
}

double regression_uncertainty(double prediction, double label) {
  Tape tape;
  const std::vector<Label> labels{Label::regression(label)};
  return prediction_uncertainty(tape.constant_scalar(prediction), labels, TaskKind::regression).scalar();
}

double uncertainty_gap(double teacher_h, double student_h) {
  Tape tape;
  return uncertainty_gap(tape.constant_scalar(teacher_h), tape.constant_scalar(student_h)).scalar();
}

double dkd(const Eigen::RowVectorXd& student_logits, const Eigen::RowVectorXd& teacher_logits, int target,
           double alpha) {
  Tape tape;
  const std::vector<Label> labels{Label::classification(target, static_cast<int>(student_logits.size()))};
  return logits_distill(tape.constant(student_logits), teacher_logits, labels, TaskKind::classification, alpha)
      .scalar();
}

double regression_distill(double student, double teacher) {
  Tape tape;
  const std::vector<Label> labels{Label::regression(0.0)};
  return logits_distill(tape.constant_scalar(student), Matrix::Constant(1, 1, teacher), labels, TaskKind::regression,
                        0.0)
      .scalar();
}

double cross_entropy(const Eigen::RowVectorXd& logits, int target) {
  Tape tape;
  const std::vector<Label> labels{Label::classification(target, static_cast<int>(logits.size()))};
  return task_loss(tape.constant(logits), labels, TaskKind::classification).scalar();
}

double rep_mse(const Eigen::RowVectorXd& student, const Eigen::RowVectorXd& teacher) {
  Tape tape;
  return rep_mse(tape.constant(student), teacher).scalar();
}

double sugr_loss(std::span<const double> uncertainty, std::span<const double> task, std::span<const double> logits) {
  if (uncertainty.size() != task.size() || task.size() != logits.size()) {
    throw InvalidArgument("sugr_loss: per-sample vectors differ in length");
  }
  if (uncertainty.empty()) throw InvalidArgument("sugr_loss: empty batch");
  auto column = [](std::span<const double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
  };
  Tape tape;
  return sugr_loss(tape.constant(column(uncertainty)), tape.constant(column(task)), tape.constant(column(logits)), false)
      .scalar();
}

// ---- totals ------------------------------------------------------------------

double total_student_loss(const StudentComponents& c, const LossWeights& w) {
  w.validate();
  for (double v : {c.cl, c.vib, c.mse, c.sugr}) {
    if (!std::isfinite(v)) throw NumericalError("total_student_loss: non-finite component");
  }
  double total = w.gamma * c.cl + w.zeta * c.sugr;
  if (w.include_vib) total += w.beta * c.vib;
  if (w.use_mse) total += c.mse;
  return total;
}

double total_teacher_loss(double task, double kl, double beta) {
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
  if (!std::isfinite(task) || !std::isfinite(kl)) throw NumericalError("total_teacher_loss: non-finite component");
  return task + beta * kl;
}

// ---- objectives --------------------------------------------------------------

ObjectiveResult student_objective(const FusionOutput& student, const TeacherTargets& teacher,
                                  std::span<const Label> labels, std::span<const CombinationId> combinations,
                                  const StudentObjective& objective) {
  objective.contrastive.validate();
  objective.sugr.validate();
  objective.weights.validate();
  Tape& tape = *student.logits.tape;
  const TaskKind kind = labels.empty() ? TaskKind::classification : labels.front().kind;
  const auto b = static_cast<Eigen::Index>(labels.size());

  std::vector<int> classes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) classes[i] = contrastive_class(labels[i]);
  ContrastiveInfo info;
  Var cl = mcbcl_loss(student.embedding, combinations, classes, objective.contrastive, &info);

  Var mse = ad::mean(rep_mse(student.embedding, teacher.embedding));

  Var h_s = prediction_uncertainty(student.logits, labels, kind);
  Var h_t = tape.constant(prediction_uncertainty(tape.constant(teacher.logits), labels, kind).value());
  Var uncer = objective.sugr.use_uncertainty ? uncertainty_gap(h_t, h_s) : tape.constant(Matrix::Ones(b, 1));
  Var distill = objective.sugr.use_logits
                    ? logits_distill(student.logits, teacher.logits, labels, kind, objective.sugr.alpha)
                    : tape.constant(Matrix::Zero(b, 1));
  Var task = task_loss(student.logits, labels, kind);
  Var sugr = sugr_loss(uncer, task, distill, objective.sugr.detach_uncertainty_weight);
  Var kl = ad::mean(vib_kl_rows(student.mu, student.logvar));

  const auto& w = objective.weights;
  Var total = ad::scale(sugr, w.zeta);
  if (w.gamma > 0.0) total = ad::add(total, ad::scale(cl, w.gamma));
  if (w.include_vib) total = ad::add(total, ad::scale(kl, w.beta));
  if (w.use_mse) total = ad::add(total, mse);

  ObjectiveResult out;
  out.total = total;
  auto& r = out.report;
  r.cl = cl.scalar();
  r.cl_degenerate = info.degenerate;
  r.mse = mse.scalar();
  r.uncer = uncer.value().mean();
  r.logits = distill.value().mean();
  r.task = task.value().mean();
  r.sugr = sugr.scalar();
  r.vib = kl.scalar();
  r.all = total.scalar();
  r.per_sample_uncer = std::vector<double>(uncer.value().data(), uncer.value().data() + b);
  r.per_sample_task = std::vector<double>(task.value().data(), task.value().data() + b);
  r.validate();
  return out;
}

ObjectiveResult teacher_objective(const FusionOutput& out, std::span<const Label> labels, double beta) {
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
  const TaskKind kind = labels.empty() ? TaskKind::classification : labels.front().kind;
  Var task = ad::mean(task_loss(out.logits, labels, kind));
  Var kl = ad::mean(vib_kl_rows(out.mu, out.logvar));
  ObjectiveResult res;
  res.total = ad::add(task, ad::scale(kl, beta));
  res.report.task = task.scalar();
  res.report.vib = kl.scalar();
  res.report.all = res.total.scalar();
  res.report.validate();
  return res;
}

}  // namespace mcur
