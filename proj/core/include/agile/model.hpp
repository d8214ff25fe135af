#pragma once

// The task-attention network: an MLP backbone, a shared attention bottleneck
// steered by one learnable projection vector per task, and an expanding head
// with one linear classifier per task. EmaModel is a structurally mirrored,
// exponentially averaged copy used for inference.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "agile/random.hpp"
#include "agile/tensor.hpp"

namespace agile {

struct ModelConfig {
  std::size_t input_dim{16};
  std::size_t hidden_dim{512};
  std::size_t feature_dim{128};  // width of backbone features and of feature importances
  std::size_t embed_dim{64};     // width of the attention latent and of projection vectors
  std::size_t total_tasks{5};   // width of the task classifier
  std::size_t classes_per_task{2};
  bool use_attention{true};
  bool use_expanding_head{true};

  void validate() const;
};

// y = x W + b with W stored in x out.
class Linear {
 public:
  Linear() = default;
  // Weights and bias uniform in [-1/sqrt(in), 1/sqrt(in)].
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  [[nodiscard]] Tensor forward(const Tensor& x) const;
  [[nodiscard]] std::size_t in_features() const noexcept { return weight.value.rows(); }
  [[nodiscard]] std::size_t out_features() const noexcept { return weight.value.cols(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return weight.value.size() + bias.value.size(); }

  Parameter weight;
  Parameter bias;
};

struct Backbone {
  Linear hidden;
  Linear output;

  // relu(output(relu(hidden(x))))
  [[nodiscard]] Tensor forward(const Tensor& x) const;
};

struct AttentionModule {
  Linear encoder;          // features -> latent, sigmoid
  Linear selector;         // latent -> feature importances, sigmoid
  Linear task_classifier;  // latent -> task logits
};

struct AttentionOutputs {
  Tensor latent;       // encoder output, in (0, 1)
  Tensor importances;  // in (0, 1), same width as the features
  Tensor task_logits;
};

struct ProjectionVector {
  Parameter delta;  // 1 x embed_dim
  int task_id{0};
};

// Standard normal coordinates, each redrawn until it falls inside [-2, 2].
ProjectionVector init_projection_vector(std::size_t embed_dim, int task_id, Rng& rng);

// latent = encoder(features); importances and task logits from latent (*) delta.
AttentionOutputs attention_forward(const AttentionModule& attention, const Tensor& features,
                                   const ProjectionVector& projection);

struct ForwardResult {
  Tensor logits;                    // b x (seen tasks * J), head blocks in task order
  std::vector<Tensor> importances;  // one per seen task; empty without attention
  Tensor task_logits;               // from the current task's projection; 0x0 without attention
};

struct ParamCounts {
  std::size_t backbone{0};
  std::size_t attention{0};
  std::size_t projections{0};
  std::size_t heads{0};
  std::size_t total{0};
};

class AgileModel {
 public:
  AgileModel(const ModelConfig& config, Rng& rng);

  AgileModel(AgileModel&&) noexcept = default;
  AgileModel& operator=(AgileModel&&) noexcept = default;
  AgileModel(const AgileModel&) = delete;
  AgileModel& operator=(const AgileModel&) = delete;

  // Deep copy: no parameter storage is shared with the original.
  [[nodiscard]] AgileModel clone() const;

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t num_tasks() const noexcept { return num_tasks_; }
  // -1 before the first task is installed.
  [[nodiscard]] int current_task() const noexcept { return static_cast<int>(num_tasks_) - 1; }
  [[nodiscard]] std::size_t output_width() const noexcept { return num_tasks_ * config_.classes_per_task; }

  // Appends the projection vector and head for the next task.
  void add_task(Rng& rng);
  void freeze_task(int task);

  [[nodiscard]] ForwardResult forward(const Tensor& x) const;
  // Attention latent steered by the given task's projection: encoder(f(x)) (*) delta_task.
  [[nodiscard]] Tensor projected_latent(const Tensor& x, int task) const;

  // Canonical order: backbone, attention, then per task (projection, head).
  [[nodiscard]] std::vector<Parameter*> parameters();
  [[nodiscard]] std::vector<const Parameter*> parameters() const;
  [[nodiscard]] ParamCounts param_count() const;

  Backbone backbone;
  std::optional<AttentionModule> attention;
  std::vector<ProjectionVector> projections;
  // One head per task when expanding; otherwise a single head over all classes.
  std::vector<Linear> heads;

 private:
  AgileModel() = default;

  ModelConfig config_;
  std::size_t num_tasks_{0};
};

class EmaModel {
 public:
  // Starts as an exact copy of `live`.
  EmaModel(const AgileModel& live, double decay, double rate);

  [[nodiscard]] const AgileModel& model() const noexcept { return model_; }
  [[nodiscard]] AgileModel& model() noexcept { return model_; }
  [[nodiscard]] double decay() const noexcept { return decay_; }
  [[nodiscard]] double rate() const noexcept { return rate_; }

  // Copies parameters the live model gained since the last call.
  void mirror_expansion(const AgileModel& live);

 private:
  AgileModel model_;
  double decay_;
  double rate_;
};

// Installs task `task` in both models; StateError unless task == live.num_tasks().
void expand_for_task(AgileModel& live, EmaModel& ema, int task, Rng& rng);
void freeze_task(AgileModel& model, int task);

// ema <- decay * ema + (1 - decay) * live when rate >= u. Returns whether applied.
bool ema_update(EmaModel& ema, const AgileModel& live, double u);

// True when both models have identical parameter names and shapes.
bool shape_congruent(const AgileModel& a, const AgileModel& b);

class PredictMode {
 public:
  static PredictMode class_il() { return PredictMode(-1); }
  static PredictMode task_il(int task) { return PredictMode(task); }

  [[nodiscard]] bool is_task_il() const noexcept { return task_ >= 0; }
  [[nodiscard]] int task() const noexcept { return task_; }

 private:
  explicit PredictMode(int task) : task_(task) {}
  int task_;
};

// Global class indices.
std::vector<int> predict(const AgileModel& model, const Tensor& x, PredictMode mode);

}  // namespace agile
