// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "training.hpp"

#include "config.hpp"
#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mcur {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adamw ? "adamw" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + s + "' (expected adamw or adam)");
}

std::vector<double> uniform_pattern_distribution(int modalities) {
  const auto n = static_cast<std::size_t>(full_combination(modalities)) + 1;
  std::vector<double> d(n, 1.0 / static_cast<double>(n - 1));
  d[0] = 0.0;
  return d;
}

void TrainConfig::validate(int modalities) const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  if (!(grad_clip >= 0.0)) throw InvalidArgument("grad_clip must be >= 0");
  weights.validate();
  contrastive.validate();
  sugr.validate();
  (void)PatternSampler(resolved_distribution(modalities), modalities);
}

std::vector<double> TrainConfig::resolved_distribution(int modalities) const {
  return pattern_distribution.empty() ? uniform_pattern_distribution(modalities) : pattern_distribution;
}

PatternSampler::PatternSampler(std::vector<double> distribution, int modalities) {
  const auto n = static_cast<std::size_t>(full_combination(modalities)) + 1;
  if (distribution.size() != n) {
    throw InvalidArgument("pattern distribution needs " + std::to_string(n) + " entries (index = combination id)");
  }
  if (distribution[0] != 0.0) throw InvalidArgument("pattern distribution places mass on the empty combination");
  double total = 0.0;
  for (double p : distribution) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("pattern probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("pattern distribution must sum to 1");
  dist_ = std::discrete_distribution<std::uint32_t>(distribution.begin(), distribution.end());
}

CombinationId PatternSampler::operator()(Rng& rng) { return dist_(rng); }

CombinationId sample_pattern(const std::vector<double>& distribution, int modalities, Rng& rng) {
  PatternSampler sampler(distribution, modalities);
  return sampler(rng);
}

AblationKey ablation_from_string(const std::string& s) {
  if (s == "L_CL") return AblationKey::cl;
  if (s == "L_Uncer") return AblationKey::uncer;
  if (s == "L_Logits") return AblationKey::logits;
  if (s == "L_MSE") return AblationKey::mse;
  throw InvalidArgument("unknown ablation key '" + s + "' (expected L_CL, L_Uncer, L_Logits or L_MSE)");
}

std::string to_string(AblationKey key) {
  switch (key) {
    case AblationKey::cl: return "L_CL";
    case AblationKey::uncer: return "L_Uncer";
    case AblationKey::logits: return "L_Logits";
    case AblationKey::mse: return "L_MSE";
  }
  return "?";
}

TrainConfig ablate(TrainConfig config, AblationKey drop) {
  switch (drop) {
    case AblationKey::cl: config.weights.gamma = 0.0; break;
    case AblationKey::uncer: config.sugr.use_uncertainty = false; break;
    case AblationKey::logits: config.sugr.use_logits = false; break;
    case AblationKey::mse: config.weights.use_mse = false; break;
  }
  return config;
}

// ---- optimizer ---------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double weight_decay)
    : kind_(kind), lr_(learning_rate), wd_(weight_decay) {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
}

void Optimizer::step(std::vector<ad::Parameter>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("optimizer bound to a different parameter set");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.size() == 0) continue;
    Matrix g = p.grad;
    if (kind_ == OptimizerKind::adam && wd_ > 0.0) g += wd_ * p.value;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    if (kind_ == OptimizerKind::adamw && wd_ > 0.0) p.value *= (1.0 - lr_ * wd_);
    p.value.array() -= lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

double clip_grad_norm(std::vector<ad::Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad.size() != 0) sq += p.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (p.grad.size() != 0) p.grad *= s;
    }
  }
  return norm;
}

// ---- helpers -------------------------------------------------------------------

ModelShape model_shape_for(const std::vector<Sample>& data) {
  if (data.empty()) throw InvalidArgument("empty training set");
  const Sample& s = data.front();
  ModelShape shape;
  shape.modalities = static_cast<int>(s.modalities.size());
  for (const auto& mt : s.modalities) shape.feature_dims.push_back(mt.feature_dim());
  shape.task = s.label.kind;
  shape.output_size = s.label.kind == TaskKind::classification ? s.label.num_classes : 1;
  return shape;
}

namespace {

Batch make_batch(const std::vector<Sample>& data, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
  Batch b;
  b.samples.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) b.samples.push_back(&data[order[k]]);
  return b;
}

std::vector<Label> labels_of(const Batch& b) {
  std::vector<Label> labels;
  labels.reserve(b.size());
  for (const auto* s : b.samples) labels.push_back(s->label);
  return labels;
}

/// Running, batch-size-weighted mean of loss reports.
class ReportMean {
 public:
  void add(const LossReport& r, std::size_t n) {
    const double w = static_cast<double>(n);
    sum_.cl += w * r.cl;
    sum_.mse += w * r.mse;
    sum_.uncer += w * r.uncer;
    sum_.logits += w * r.logits;
    sum_.task += w * r.task;
    sum_.sugr += w * r.sugr;
    sum_.vib += w * r.vib;
    sum_.all += w * r.all;
    n_ += w;
  }
  [[nodiscard]] LossReport mean() const {
    LossReport r = sum_;
    if (n_ > 0.0) {
      for (double* v : {&r.cl, &r.mse, &r.uncer, &r.logits, &r.task, &r.sugr, &r.vib, &r.all}) *v /= n_;
    }
    return r;
  }

 private:
  LossReport sum_;
  double n_ = 0.0;
};

std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Matrix forward_rows(Backbone& model, const std::vector<Sample>& samples, std::size_t chunk, bool embedding) {
  if (samples.empty()) throw InvalidArgument("no samples to evaluate");
  chunk = std::max<std::size_t>(chunk, 1);
  const int cols = embedding ? model.config().dim : model.shape().output_size;
  Matrix out(static_cast<Eigen::Index>(samples.size()), cols);
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const std::size_t end = std::min(samples.size(), begin + chunk);
    Batch b;
    for (std::size_t k = begin; k < end; ++k) b.samples.push_back(&samples[k]);
    ad::Tape tape;
    FusionOutput f = model.forward(tape, b, VibMode::mean, nullptr);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        embedding ? f.embedding.value() : f.logits.value();
  }
  return out;
}

void emit(const LogSink& log, const nlohmann::json& j) {
  if (log) log(j);
}

}  // namespace

Matrix predict(Backbone& model, const std::vector<Sample>& samples, std::size_t chunk) {
  return forward_rows(model, samples, chunk, false);
}

Matrix embed(Backbone& model, const std::vector<Sample>& samples, std::size_t chunk) {
  return forward_rows(model, samples, chunk, true);
}

// ---- teacher -------------------------------------------------------------------

TrainResult train_teacher(const std::vector<Sample>& data, const BackboneConfig& backbone, const TrainConfig& config,
                          const LogSink& log) {
  const ModelShape shape = model_shape_for(data);
  config.validate(shape.modalities);
  for (const auto& s : data) {
    if (s.mask.count() != shape.modalities) {
      throw InvalidArgument("teacher training needs complete modalities (sample " + std::to_string(s.sample_id) + ")");
    }
  }
  Backbone model(backbone, shape, Role::teacher, derive_seed(config.seed, 10));
  Optimizer opt(config.optimizer, config.learning_rate, config.weight_decay);
  auto shuffle_rng = make_rng(config.seed, 11);
  auto vib_rng = make_rng(config.seed, 12);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result{Checkpoint{model, {}, {}, 0}, {}};
  long long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    ReportMean epoch_mean;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Batch batch = make_batch(data, order, begin, end);
      const auto labels = labels_of(batch);
      ad::Tape tape;
      FusionOutput out = model.forward(tape, batch, VibMode::sample, &vib_rng);
      ObjectiveResult obj = teacher_objective(out, labels, config.weights.beta);
      model.zero_grad();
      tape.backward(obj.total);
      clip_grad_norm(model.parameters(), config.grad_clip);
      opt.step(model.parameters());
      epoch_mean.add(obj.report, batch.size());
      emit(log, {{"role", "teacher"}, {"epoch", epoch}, {"step", step}, {"batch_mr", 0.0},
                 {"losses", obj.report.to_json()}});
      ++step;
    }
    result.epoch_means.push_back(epoch_mean.mean());
    emit(log, {{"role", "teacher"}, {"epoch", epoch}, {"epoch_mean", result.epoch_means.back().to_json()}});
  }
  result.checkpoint = Checkpoint{std::move(model),
                                 {{"backbone", to_json(backbone)}, {"train", to_json(config)}},
                                 rng_text(vib_rng),
                                 config.epochs};
  return result;
}

// ---- student -------------------------------------------------------------------

TrainResult train_student(const std::vector<Sample>& data, const Checkpoint& teacher, const BackboneConfig& backbone,
                          const TrainConfig& config, const LogSink& log) {
  const ModelShape shape = model_shape_for(data);
  config.validate(shape.modalities);
  if (!(teacher.model.shape() == shape)) {
    throw IncompatibleError("teacher checkpoint was built for a different dataset shape (m, feature dims or K)");
  }
  if (teacher.model.config().dim != backbone.dim) {
    throw IncompatibleError("teacher embedding dim " + std::to_string(teacher.model.config().dim) +
                            " differs from student dim " + std::to_string(backbone.dim));
  }
  // Work on a private copy: the caller's teacher is never written.
  Backbone frozen = teacher.model;
  Backbone model(backbone, shape, Role::student, derive_seed(config.seed, 20));
  Optimizer opt(config.optimizer, config.learning_rate, config.weight_decay);
  PatternSampler sampler(config.resolved_distribution(shape.modalities), shape.modalities);
  auto shuffle_rng = make_rng(config.seed, 21);
  auto pattern_rng = make_rng(config.seed, 22);
  auto vib_rng = make_rng(config.seed, 23);

  StudentObjective objective{config.contrastive, config.sugr, config.weights};
  Matrix cached_embedding, cached_logits;
  if (!config.teacher_sees_student_mask) {
    std::vector<Sample> full = data;
    for (auto& s : full) s.mask = AvailabilityMask::complete(shape.modalities);
    cached_embedding = embed(frozen, full);
    cached_logits = predict(frozen, full);
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result{Checkpoint{model, {}, {}, 0}, {}};
  long long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    ReportMean epoch_mean;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Batch batch = make_batch(data, order, begin, end);
      const auto labels = labels_of(batch);
      std::vector<AvailabilityMask> masks;
      std::vector<CombinationId> combos;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const CombinationId c = sampler(pattern_rng);
        combos.push_back(c);
        masks.push_back(AvailabilityMask::from_combination(c, shape.modalities));
      }
      TeacherTargets targets;
      if (config.teacher_sees_student_mask) {
        ad::Tape ttape;
        FusionOutput t = frozen.forward(ttape, batch, VibMode::mean, nullptr, &masks);
        targets.embedding = t.embedding.value();
        targets.logits = t.logits.value();
      } else {
        const auto n = static_cast<Eigen::Index>(batch.size());
        targets.embedding.resize(n, cached_embedding.cols());
        targets.logits.resize(n, cached_logits.cols());
        for (std::size_t k = begin; k < end; ++k) {
          const auto r = static_cast<Eigen::Index>(k - begin);
          targets.embedding.row(r) = cached_embedding.row(static_cast<Eigen::Index>(order[k]));
          targets.logits.row(r) = cached_logits.row(static_cast<Eigen::Index>(order[k]));
        }
      }
      ad::Tape tape;
      FusionOutput out = model.forward(tape, batch, VibMode::sample, &vib_rng, &masks);
      ObjectiveResult obj = student_objective(out, targets, labels, combos, objective);
      model.zero_grad();
      tape.backward(obj.total);
      clip_grad_norm(model.parameters(), config.grad_clip);
      opt.step(model.parameters());
      epoch_mean.add(obj.report, batch.size());
      emit(log, {{"role", "student"}, {"epoch", epoch}, {"step", step}, {"batch_mr", compute_mr(masks, shape.modalities)},
                 {"losses", obj.report.to_json()}});
      ++step;
    }
    result.epoch_means.push_back(epoch_mean.mean());
    emit(log, {{"role", "student"}, {"epoch", epoch}, {"epoch_mean", result.epoch_means.back().to_json()}});
  }
  result.checkpoint = Checkpoint{std::move(model),
                                 {{"backbone", to_json(backbone)}, {"train", to_json(config)}},
                                 rng_text(vib_rng),
                                 config.epochs};
  return result;
}

}  // namespace mcur
