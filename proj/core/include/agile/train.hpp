#pragma once

// Loss terms and the rehearsal training loop.
//
// Per step the objective is
//   L = L_er + beta * L_cr + gamma * L_tp + lambda * L_pd
// where L_er is cross-entropy on the current batch plus alpha times
// cross-entropy on a replayed buffer batch, L_cr pulls the live logits on the
// buffer batch toward the EMA model's, L_tp trains the task classifier on the
// current batch, and L_pd pushes the current task's feature importances away
// from those produced by earlier projection vectors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "agile/model.hpp"
#include "agile/random.hpp"
#include "agile/stream.hpp"
#include "agile/tensor.hpp"

namespace agile {

struct LossWeights {
  double alpha{1.0};
  double beta{0.15};
  double gamma{1.0};
  double lambda{0.1};

  void validate() const;
};

// Component switches mirroring the ablation study. All off is plain rehearsal.
struct AblationToggles {
  bool use_attention{true};
  bool use_expanding_head{true};
  bool use_ema{true};
  bool use_consistency{true};

  [[nodiscard]] static AblationToggles none() { return {false, false, false, false}; }
  friend bool operator==(const AblationToggles&, const AblationToggles&) = default;
};

struct TrainConfig {
  std::size_t epochs{50};
  std::size_t batch_size{32};
  double learning_rate{0.05};
  std::size_t buffer_size{100};
  LossWeights weights;
  double ema_decay{0.999};
  double ema_rate{0.2};
  AblationToggles toggles;
  // Also train the task classifier on replayed samples (their task ids are stored).
  bool buffer_task_loss{false};
  std::size_t hidden_dim{512};
  std::size_t feature_dim{128};
  std::size_t embed_dim{64};
  std::size_t log_every{50};
  bool evaluate_every_epoch{true};
  std::uint64_t seed{0};

  void validate() const;
  [[nodiscard]] ModelConfig model_config(const TaskStream& stream) const;
};

// ---- loss terms -------------------------------------------------------------

// CE(current) + alpha * CE(buffer); the buffer term is skipped when buffer_logits is null.
Tensor er_loss(const Tensor& current_logits, std::span<const int> current_labels, const Tensor* buffer_logits,
               std::span<const int> buffer_labels, double alpha);
// beta * mean_b ||ema - live||^2 over logits; the EMA side is detached.
Tensor cr_loss(const Tensor& live_logits, const Tensor& ema_logits, double beta = 1.0);
Tensor tp_loss(const Tensor& task_logits, std::span<const int> task_labels, double gamma = 1.0);
// -lambda * sum_{i < t} mean_b || softmax(z_s^t) - stopgrad(softmax(z_s^i)) ||_1
Tensor pd_loss(std::span<const Tensor> importances, double lambda = 1.0);

// Unweighted auxiliary terms (L_er already carries alpha). Absent terms are 0x0.
struct LossParts {
  Tensor er;
  Tensor cr;
  Tensor tp;
  Tensor pd;
};

Tensor total_loss(const LossParts& parts, const LossWeights& weights);

// ---- run records ------------------------------------------------------------

struct EpochEval {
  int task{0};
  int epoch{0};
  std::vector<double> class_il;  // one entry per seen task
  std::vector<double> task_il;
};

struct LossSample {
  std::uint64_t step{0};
  int task{0};
  double total{0.0};
  double er{0.0};
  double cr{0.0};
  double tp{0.0};
  double pd{0.0};
};

struct RunLog {
  std::vector<EpochEval> epochs;
  // Row i: accuracies on tasks 0..i after finishing task i.
  std::vector<std::vector<double>> class_il_matrix;
  std::vector<std::vector<double>> task_il_matrix;
  std::vector<LossSample> losses;
  std::uint64_t steps{0};
};

// ---- trainer ----------------------------------------------------------------

struct TrainResult {
  AgileModel model;
  EmaModel ema;
  RunLog log;
  bool uses_ema{true};

  [[nodiscard]] const AgileModel& inference_model() const noexcept { return uses_ema ? ema.model() : model; }
};

struct StepResult {
  LossSample losses;
  bool used_buffer{false};
  bool ema_applied{false};
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, const TaskStream& stream);

  // Installs the next task: new projection vector and head in live and EMA models.
  void begin_task();
  StepResult step(const Batch& current);
  void end_epoch(int epoch);
  // Freezes the task's projection and head and records the end-of-task accuracies.
  void end_task();
  // Full schedule: every task, every epoch, every shuffled batch.
  void run();

  [[nodiscard]] const TrainConfig& config() const noexcept { return config_; }
  [[nodiscard]] const AgileModel& model() const noexcept { return model_; }
  [[nodiscard]] AgileModel& model() noexcept { return model_; }
  [[nodiscard]] const EmaModel& ema() const noexcept { return ema_; }
  [[nodiscard]] const MemoryBuffer& buffer() const noexcept { return buffer_; }
  [[nodiscard]] const RunLog& log() const noexcept { return log_; }
  [[nodiscard]] int current_task() const noexcept { return model_.current_task(); }
  [[nodiscard]] std::uint64_t steps() const noexcept { return log_.steps; }
  // EMA model when enabled, otherwise the live model.
  [[nodiscard]] const AgileModel& inference_model() const noexcept;

  // Moves the trained models and log out; the trainer is unusable afterwards.
  [[nodiscard]] TrainResult into_result() &&;

  std::function<void(const Trainer&)> after_step;
  std::function<void(const Trainer&)> after_task;

 private:
  TrainConfig config_;
  const TaskStream& stream_;
  Rng init_rng_;
  Rng data_rng_;
  Rng replay_rng_;
  Rng reservoir_rng_;
  Rng gate_rng_;
  AgileModel model_;
  EmaModel ema_;
  MemoryBuffer buffer_;
  RunLog log_;
};

TrainResult train_stream(const TrainConfig& config, const TaskStream& stream);

}  // namespace agile
