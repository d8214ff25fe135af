#include "agile/train.hpp"

#include <cmath>

#include "agile/errors.hpp"
#include "agile/metrics.hpp"

namespace agile {

void LossWeights::validate() const {
  for (const auto& [value, name] : {std::pair{alpha, "alpha"}, std::pair{beta, "beta"}, std::pair{gamma, "gamma"},
                                    std::pair{lambda, "lambda"}}) {
    if (!std::isfinite(value) || value < 0.0) {
      throw ArgumentError(std::string("loss weight ") + name + " must be finite and non-negative");
    }
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ArgumentError("train.epochs must be at least 1");
  if (batch_size == 0) throw ArgumentError("train.batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("train.learning_rate must be positive");
  weights.validate();
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ArgumentError("train.ema_decay must lie in (0, 1)");
  if (!(ema_rate > 0.0 && ema_rate <= 1.0)) throw ArgumentError("train.ema_rate must lie in (0, 1]");
  if (toggles.use_consistency && !toggles.use_ema) {
    throw ArgumentError("train.use_consistency requires train.use_ema (targets come from the EMA model)");
  }
  if (toggles.use_attention && !toggles.use_expanding_head) {
    throw ArgumentError("train.use_attention requires train.use_expanding_head");
  }
  if (hidden_dim == 0 || feature_dim == 0 || embed_dim == 0) throw ArgumentError("model dimensions must be positive");
  if (log_every == 0) throw ArgumentError("train.log_every must be at least 1");
}

ModelConfig TrainConfig::model_config(const TaskStream& stream) const {
  ModelConfig m;
  m.input_dim = stream.input_dim();
  m.hidden_dim = hidden_dim;
  m.feature_dim = feature_dim;
  m.embed_dim = embed_dim;
  m.total_tasks = stream.num_tasks();
  m.classes_per_task = stream.classes_per_task();
  m.use_attention = toggles.use_attention;
  m.use_expanding_head = toggles.use_expanding_head;
  return m;
}

// ---- loss terms -------------------------------------------------------------

Tensor er_loss(const Tensor& current_logits, std::span<const int> current_labels, const Tensor* buffer_logits,
               std::span<const int> buffer_labels, double alpha) {
  Tensor loss = cross_entropy(current_logits, current_labels);
  if (buffer_logits != nullptr) {
    if (buffer_logits->cols() != current_logits.cols()) {
      throw DimensionError("er_loss: buffer logits " + to_string(buffer_logits->shape()) +
                           " do not match current class space " + to_string(current_logits.shape()));
    }
    loss = add(loss, scale(cross_entropy(*buffer_logits, buffer_labels), alpha));
  }
  return loss;
}

Tensor cr_loss(const Tensor& live_logits, const Tensor& ema_logits, double beta) {
  return scale(squared_row_distance(live_logits, stop_gradient(ema_logits)), beta);
}

Tensor tp_loss(const Tensor& task_logits, std::span<const int> task_labels, double gamma) {
  return scale(cross_entropy(task_logits, task_labels), gamma);
}

Tensor pd_loss(std::span<const Tensor> importances, double lambda) {
  if (importances.empty()) throw ArgumentError("pd_loss: needs the current task's importances");
  const std::size_t t = importances.size() - 1;
  if (t == 0) return Tensor::scalar(0.0);
  const Tensor current = softmax_rows(importances[t]);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < t; ++i) {
    total = add(total, l1_row_distance(current, stop_gradient(softmax_rows(importances[i]))));
  }
  return scale(total, -lambda);
}

Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  Tensor loss = parts.er;
  auto add_term = [&loss](const Tensor& term, double weight) {
    if (term.size() == 0) return;
    loss = loss.size() == 0 ? scale(term, weight) : add(loss, scale(term, weight));
  };
  add_term(parts.cr, weights.beta);
  add_term(parts.tp, weights.gamma);
  add_term(parts.pd, weights.lambda);
  if (loss.size() == 0) throw ArgumentError("total_loss: no loss terms");
  return loss;
}

// ---- trainer ----------------------------------------------------------------

namespace {

AgileModel build_model(const TrainConfig& config, const TaskStream& stream, Rng& rng) {
  config.validate();
  return AgileModel(config.model_config(stream), rng);
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const TaskStream& stream)
    : config_(config),
      stream_(stream),
      init_rng_(Rng::derive(config.seed, "init")),
      data_rng_(Rng::derive(config.seed, "data")),
      replay_rng_(Rng::derive(config.seed, "replay")),
      reservoir_rng_(Rng::derive(config.seed, "reservoir")),
      gate_rng_(Rng::derive(config.seed, "ema-gate")),
      model_(build_model(config, stream, init_rng_)),
      ema_(model_, config.ema_decay, config.ema_rate),
      buffer_(config.buffer_size) {}

const AgileModel& Trainer::inference_model() const noexcept {
  return config_.toggles.use_ema ? ema_.model() : model_;
}

void Trainer::begin_task() {
  const int next = static_cast<int>(model_.num_tasks());
  if (static_cast<std::size_t>(next) >= stream_.num_tasks()) throw StateError("all tasks already trained");
  expand_for_task(model_, ema_, next, init_rng_);
}

StepResult Trainer::step(const Batch& current) {
  const int task = current_task();
  if (task < 0) throw StateError("step: begin_task() has not been called");
  const auto& toggles = config_.toggles;
  const auto& w = config_.weights;

  StepResult result;
  LossParts parts;
  const ForwardResult out = model_.forward(current.inputs);
  const std::vector<int> task_labels(current.labels.size(), task);

  if (toggles.use_attention) {
    parts.tp = cross_entropy(out.task_logits, task_labels);
    parts.pd = pd_loss(out.importances);
  }

  if (!buffer_.empty()) {
    const Batch replay = make_batch(sample_minibatch(buffer_, config_.batch_size, replay_rng_));
    const ForwardResult replay_out = model_.forward(replay.inputs);
    parts.er = er_loss(out.logits, current.labels, &replay_out.logits, replay.labels, w.alpha);
    if (toggles.use_consistency) {
      Tensor ema_logits;
      {
        const NoGradGuard no_grad;
        ema_logits = ema_.model().forward(replay.inputs).logits;
      }
      parts.cr = cr_loss(replay_out.logits, ema_logits);
    }
    if (toggles.use_attention && config_.buffer_task_loss) {
      const Tensor replay_tp = cross_entropy(replay_out.task_logits, replay.tasks);
      const double n_cur = static_cast<double>(current.labels.size());
      const double n_buf = static_cast<double>(replay.labels.size());
      parts.tp = scale(add(scale(parts.tp, n_cur), scale(replay_tp, n_buf)), 1.0 / (n_cur + n_buf));
    }
    result.used_buffer = true;
  } else {
    parts.er = er_loss(out.logits, current.labels, nullptr, {}, w.alpha);
  }

  const Tensor loss = total_loss(parts, w);
  backward(loss);
  const auto params = model_.parameters();
  sgd_step(params, config_.learning_rate);

  for (std::size_t i = 0; i < current.labels.size(); ++i) {
    Sample s;
    const auto row = current.inputs.values().subspan(i * current.inputs.cols(), current.inputs.cols());
    s.features.assign(row.begin(), row.end());
    s.label = current.labels[i];
    s.task = current.tasks[i];
    reservoir_update(buffer_, s, reservoir_rng_);
  }

  if (toggles.use_ema) result.ema_applied = ema_update(ema_, model_, gate_rng_.uniform());

  auto value = [](const Tensor& t) { return t.size() == 0 ? 0.0 : t.item(); };
  result.losses = LossSample{log_.steps, task, loss.item(), value(parts.er), value(parts.cr), value(parts.tp),
                             value(parts.pd)};
  if (log_.steps % config_.log_every == 0) log_.losses.push_back(result.losses);
  ++log_.steps;
  if (after_step) after_step(*this);
  return result;
}

void Trainer::end_epoch(int epoch) {
  if (!config_.evaluate_every_epoch) return;
  const auto acc = evaluate_seen_tasks(inference_model(), stream_);
  log_.epochs.push_back(EpochEval{current_task(), epoch, acc.class_il, acc.task_il});
}

void Trainer::end_task() {
  const int task = current_task();
  if (task < 0) throw StateError("end_task: no task in progress");
  freeze_task(model_, task);
  const auto acc = evaluate_seen_tasks(inference_model(), stream_);
  log_.class_il_matrix.push_back(acc.class_il);
  log_.task_il_matrix.push_back(acc.task_il);
  if (after_task) after_task(*this);
}

void Trainer::run() {
  while (model_.num_tasks() < stream_.num_tasks()) {
    begin_task();
    const TaskDataset& ds = stream_.task(static_cast<std::size_t>(current_task()));
    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
      for (const auto& indices : task_batches(ds, config_.batch_size, data_rng_)) {
        step(make_batch(ds.train, indices));
      }
      end_epoch(static_cast<int>(epoch));
    }
    end_task();
  }
}

TrainResult train_stream(const TrainConfig& config, const TaskStream& stream) {
  Trainer trainer(config, stream);
  trainer.run();
  return std::move(trainer).into_result();
}

TrainResult Trainer::into_result() && {
  return TrainResult{std::move(model_), std::move(ema_), std::move(log_), config_.toggles.use_ema};
}

}  // namespace agile
