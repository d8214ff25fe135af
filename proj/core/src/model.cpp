#include "agile/model.hpp"

#include <cmath>

#include "agile/errors.hpp"

namespace agile {

namespace {

Parameter clone_parameter(const Parameter& p) {
  Parameter copy(p.name, p.value.clone());
  copy.frozen = p.frozen;
  return copy;
}

Linear clone_linear(const Linear& l) {
  Linear copy;
  copy.weight = clone_parameter(l.weight);
  copy.bias = clone_parameter(l.bias);
  return copy;
}

void append(std::vector<Parameter*>& out, Linear& l) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ArgumentError(std::string("model.") + name + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(hidden_dim, "hidden_dim");
  positive(feature_dim, "feature_dim");
  positive(embed_dim, "embed_dim");
  positive(total_tasks, "total_tasks");
  positive(classes_per_task, "classes_per_task");
  if (use_attention && !use_expanding_head) {
    throw ArgumentError("task attention requires the expanding head (one classifier per projection vector)");
  }
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w(in, out);
  for (double& v : w.mutable_values()) v = rng.uniform(-bound, bound);
  Tensor b(1, out);
  for (double& v : b.mutable_values()) v = rng.uniform(-bound, bound);
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", std::move(b));
}

Tensor Linear::forward(const Tensor& x) const { return add_row(matmul(x, weight.value), bias.value); }

Tensor Backbone::forward(const Tensor& x) const { return relu(output.forward(relu(hidden.forward(x)))); }

ProjectionVector init_projection_vector(std::size_t embed_dim, int task_id, Rng& rng) {
  if (embed_dim == 0) throw ArgumentError("projection vector width must be positive");
  Tensor delta(1, embed_dim);
  for (double& v : delta.mutable_values()) {
    do {
      v = rng.normal();
    } while (v < -2.0 || v > 2.0);
  }
  return ProjectionVector{Parameter("projection." + std::to_string(task_id), std::move(delta)), task_id};
}

namespace {

AttentionOutputs attend(const AttentionModule& attention, const Tensor& latent, const ProjectionVector& projection) {
  const Tensor steered = broadcast_mul(latent, projection.delta.value);
  return AttentionOutputs{latent, sigmoid(attention.selector.forward(steered)),
                          attention.task_classifier.forward(steered)};
}

}  // namespace

AttentionOutputs attention_forward(const AttentionModule& attention, const Tensor& features,
                                   const ProjectionVector& projection) {
  if (features.cols() != attention.encoder.in_features()) {
    throw DimensionError("attention_forward: features have width " + std::to_string(features.cols()) +
                         ", encoder expects " + std::to_string(attention.encoder.in_features()));
  }
  return attend(attention, sigmoid(attention.encoder.forward(features)), projection);
}

// ---- AgileModel ------------------------------------------------------------

AgileModel::AgileModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  backbone.hidden = Linear("backbone.hidden", config_.input_dim, config_.hidden_dim, rng);
  backbone.output = Linear("backbone.output", config_.hidden_dim, config_.feature_dim, rng);
  if (config_.use_attention) {
    AttentionModule a;
    a.encoder = Linear("attention.encoder", config_.feature_dim, config_.embed_dim, rng);
    a.selector = Linear("attention.selector", config_.embed_dim, config_.feature_dim, rng);
    a.task_classifier = Linear("attention.task_classifier", config_.embed_dim, config_.total_tasks, rng);
    attention = std::move(a);
  }
  if (!config_.use_expanding_head) {
    heads.emplace_back("head.all", config_.feature_dim, config_.total_tasks * config_.classes_per_task, rng);
  }
}

AgileModel AgileModel::clone() const {
  AgileModel copy;
  copy.config_ = config_;
  copy.num_tasks_ = num_tasks_;
  copy.backbone.hidden = clone_linear(backbone.hidden);
  copy.backbone.output = clone_linear(backbone.output);
  if (attention) {
    copy.attention = AttentionModule{clone_linear(attention->encoder), clone_linear(attention->selector),
                                     clone_linear(attention->task_classifier)};
  }
  for (const auto& p : projections) copy.projections.push_back({clone_parameter(p.delta), p.task_id});
  for (const auto& h : heads) copy.heads.push_back(clone_linear(h));
  return copy;
}

void AgileModel::add_task(Rng& rng) {
  if (num_tasks_ >= config_.total_tasks) {
    throw StateError("model already holds all " + std::to_string(config_.total_tasks) + " tasks");
  }
  const int task = static_cast<int>(num_tasks_);
  if (config_.use_attention) projections.push_back(init_projection_vector(config_.embed_dim, task, rng));
  if (config_.use_expanding_head) {
    heads.emplace_back("head." + std::to_string(task), config_.feature_dim, config_.classes_per_task, rng);
  }
  ++num_tasks_;
}

void AgileModel::freeze_task(int task) {
  if (task < 0 || static_cast<std::size_t>(task) >= num_tasks_) {
    throw ArgumentError("freeze_task: unknown task " + std::to_string(task));
  }
  const auto t = static_cast<std::size_t>(task);
  if (config_.use_attention) projections[t].delta.frozen = true;
  if (config_.use_expanding_head) {
    heads[t].weight.frozen = true;
    heads[t].bias.frozen = true;
  }
}

ForwardResult AgileModel::forward(const Tensor& x) const {
  if (num_tasks_ == 0) throw StateError("forward: no task installed");
  if (x.cols() != config_.input_dim) {
    throw DimensionError("forward: input width " + std::to_string(x.cols()) + ", model expects " +
                         std::to_string(config_.input_dim));
  }
  ForwardResult result;
  const Tensor features = backbone.forward(x);

  if (!config_.use_expanding_head) {
    result.logits = slice_cols(heads.front().forward(features), 0, output_width());
    return result;
  }

  std::vector<Tensor> blocks;
  blocks.reserve(num_tasks_);
  if (attention) {
    // The encoder output does not depend on the projection, so it is shared by all branches.
    const Tensor latent = sigmoid(attention->encoder.forward(features));
    for (std::size_t i = 0; i < num_tasks_; ++i) {
      const Tensor steered = broadcast_mul(latent, projections[i].delta.value);
      Tensor importances = sigmoid(attention->selector.forward(steered));
      blocks.push_back(heads[i].forward(ewise_mul(importances, features)));
      result.importances.push_back(std::move(importances));
      if (i + 1 == num_tasks_) result.task_logits = attention->task_classifier.forward(steered);
    }
  } else {
    for (std::size_t i = 0; i < num_tasks_; ++i) blocks.push_back(heads[i].forward(features));
  }
  result.logits = blocks.size() == 1 ? blocks.front() : concat_cols(blocks);
  return result;
}

Tensor AgileModel::projected_latent(const Tensor& x, int task) const {
  if (!attention) throw StateError("model has no task attention");
  if (task < 0 || static_cast<std::size_t>(task) >= num_tasks_) {
    throw ArgumentError("projected_latent: unknown task " + std::to_string(task));
  }
  const Tensor latent = sigmoid(attention->encoder.forward(backbone.forward(x)));
  return broadcast_mul(latent, projections[static_cast<std::size_t>(task)].delta.value);
}

std::vector<Parameter*> AgileModel::parameters() {
  std::vector<Parameter*> out;
  append(out, backbone.hidden);
  append(out, backbone.output);
  if (attention) {
    append(out, attention->encoder);
    append(out, attention->selector);
    append(out, attention->task_classifier);
  }
  if (!config_.use_expanding_head) {
    append(out, heads.front());
    for (auto& p : projections) out.push_back(&p.delta);
    return out;
  }
  for (std::size_t i = 0; i < num_tasks_; ++i) {
    if (attention) out.push_back(&projections[i].delta);
    append(out, heads[i]);
  }
  return out;
}

std::vector<const Parameter*> AgileModel::parameters() const {
  const auto mutable_params = const_cast<AgileModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ParamCounts AgileModel::param_count() const {
  ParamCounts counts;
  counts.backbone = backbone.hidden.parameter_count() + backbone.output.parameter_count();
  if (attention) {
    counts.attention = attention->encoder.parameter_count() + attention->selector.parameter_count() +
                       attention->task_classifier.parameter_count();
  }
  for (const auto& p : projections) counts.projections += p.delta.value.size();
  for (const auto& h : heads) counts.heads += h.parameter_count();
  counts.total = counts.backbone + counts.attention + counts.projections + counts.heads;
  return counts;
}

// ---- EMA -------------------------------------------------------------------

EmaModel::EmaModel(const AgileModel& live, double decay, double rate)
    : model_(live.clone()), decay_(decay), rate_(rate) {
  if (!(decay > 0.0 && decay < 1.0)) throw ArgumentError("EMA decay must lie in (0, 1)");
  if (!(rate > 0.0 && rate <= 1.0)) throw ArgumentError("EMA update rate must lie in (0, 1]");
  for (Parameter* p : model_.parameters()) p->value.set_requires_grad(false);
}

void EmaModel::mirror_expansion(const AgileModel& live) {
  if (live.num_tasks() < model_.num_tasks()) throw StateError("EMA model is ahead of the live model");
  AgileModel fresh = live.clone();
  // Keep averaged values for parameters the EMA already has; take new ones verbatim.
  auto mine = model_.parameters();
  auto theirs = fresh.parameters();
  std::size_t matched = 0;
  for (std::size_t i = 0, j = 0; i < theirs.size() && j < mine.size(); ++i) {
    if (theirs[i]->name == mine[j]->name) {
      theirs[i]->value = mine[j]->value;
      ++j;
      ++matched;
    }
  }
  if (matched != mine.size()) throw StateError("EMA model is not a prefix of the live model");
  for (Parameter* p : fresh.parameters()) {
    if (p->value.requires_grad()) p->value.set_requires_grad(false);
  }
  model_ = std::move(fresh);
}

void expand_for_task(AgileModel& live, EmaModel& ema, int task, Rng& rng) {
  if (task != static_cast<int>(live.num_tasks())) {
    throw StateError("expand_for_task: expected task " + std::to_string(live.num_tasks()) + ", got " +
                     std::to_string(task));
  }
  live.add_task(rng);
  ema.mirror_expansion(live);
}

void freeze_task(AgileModel& model, int task) { model.freeze_task(task); }

bool shape_congruent(const AgileModel& a, const AgileModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->value.shape() != pb[i]->value.shape()) return false;
  }
  return true;
}

bool ema_update(EmaModel& ema, const AgileModel& live, double u) {
  if (!shape_congruent(ema.model(), live)) {
    throw StateError("ema_update: EMA and live parameters are not shape-congruent");
  }
  if (ema.rate() < u) return false;
  const double decay = ema.decay();
  const auto targets = ema.model().parameters();
  const auto sources = live.parameters();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto dst = targets[i]->value.mutable_values();
    const auto src = sources[i]->value.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = decay * dst[k] + (1.0 - decay) * src[k];
  }
  return true;
}

std::vector<int> predict(const AgileModel& model, const Tensor& x, PredictMode mode) {
  const NoGradGuard no_grad;
  const std::size_t per_task = model.config().classes_per_task;
  std::size_t begin = 0;
  std::size_t end = model.output_width();
  if (mode.is_task_il()) {
    if (static_cast<std::size_t>(mode.task()) >= model.num_tasks()) {
      throw ArgumentError("predict: task " + std::to_string(mode.task()) + " has not been seen");
    }
    begin = static_cast<std::size_t>(mode.task()) * per_task;
    end = begin + per_task;
  }
  const Tensor logits = model.forward(x).logits;
  const auto v = logits.values();
  const std::size_t cols = logits.cols();
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = begin;
    for (std::size_t c = begin + 1; c < end; ++c) {
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace agile
