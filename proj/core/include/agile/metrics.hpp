#pragma once

// Evaluation and analysis: per-task accuracy, forgetting, stability/plasticity,
// calibration, task confusion, and the within-task / task-id cross-entropy split.

#include <cstddef>
#include <span>
#include <vector>

#include "agile/model.hpp"
#include "agile/stream.hpp"
#include "agile/train.hpp"

namespace agile {

enum class Scenario { class_il, task_il };

// Fraction correct on each seen task's test set.
std::vector<double> evaluate_accuracy(const AgileModel& model, const TaskStream& stream, Scenario scenario);

struct SeenTaskAccuracy {
  std::vector<double> class_il;
  std::vector<double> task_il;
};

// Both scenarios from a single forward pass per task.
SeenTaskAccuracy evaluate_seen_tasks(const AgileModel& model, const TaskStream& stream);

// Row-softmax of the concatenated logits.
Tensor class_probabilities(const AgileModel& model, const Tensor& x);

// ---- accuracy trace ---------------------------------------------------------

struct AccuracyRow {
  int task{0};   // last task trained when the row was measured
  int epoch{0};  // -1 for end-of-task rows
  std::vector<double> accuracy;  // tasks 0..task
};

// The last row must cover every task; it supplies the final accuracies.
struct AccuracyMatrix {
  std::vector<AccuracyRow> trace;

  [[nodiscard]] std::size_t num_tasks() const;
  // End-of-task rows a[i][j], j <= i.
  [[nodiscard]] std::vector<std::vector<double>> end_of_task() const;
};

// Trace built from per-epoch evaluations when `per_epoch`, otherwise task boundaries only.
AccuracyMatrix accuracy_matrix(const RunLog& log, bool per_epoch);

// Mean over tasks t < T-1 of (best accuracy ever on t) - (final accuracy on t).
double forgetting_measure(const AccuracyMatrix& matrix);

struct StabilityPlasticity {
  double stability{0.0};
  double plasticity{0.0};
  double trade_off{0.0};
};

// Stability: mean final accuracy on tasks before the last (the single task when T = 1).
// Plasticity: mean of a[t][t]. Trade-off: harmonic mean, 0 when both are 0.
StabilityPlasticity stability_plasticity(const AccuracyMatrix& matrix);

// ---- calibration ------------------------------------------------------------

struct ReliabilityBin {
  double lower{0.0};
  double upper{0.0};
  double mean_confidence{0.0};
  double accuracy{0.0};
  std::size_t count{0};
};

struct CalibrationResult {
  double ece{0.0};
  std::vector<ReliabilityBin> bins;
};

// Equal-width bins over [0, 1]; a confidence of exactly 1 falls in the last bin.
CalibrationResult ece(std::span<const double> confidences, std::span<const bool> correct, std::size_t bins = 10);

// Confidence = max class probability of the Class-IL prediction on every seen test set.
CalibrationResult model_calibration(const AgileModel& model, const TaskStream& stream, std::size_t bins = 10);

// ---- task confusion ---------------------------------------------------------

struct ConfusionMatrix {
  std::vector<std::vector<std::size_t>> counts;  // [true task][predicted task]

  [[nodiscard]] std::size_t total() const;
  [[nodiscard]] double diagonal_mass() const;
  // Fraction of predictions that fall in the most recent task's block.
  [[nodiscard]] double final_column_mass() const;
};

// Predicted task = block containing the Class-IL argmax.
ConfusionMatrix task_confusion(const AgileModel& model, const TaskStream& stream);

// ---- WP / TP decomposition -------------------------------------------------

struct DecompositionEntry {
  double h_cil{0.0};
  double h_wp{0.0};
  double h_tp{0.0};
  double task_mass{0.0};  // probability of the true task
  double residual{0.0};   // h_cil - (h_wp + h_tp); 0 when task_mass is 0
};

struct DecompositionRecord {
  std::vector<DecompositionEntry> entries;

  [[nodiscard]] double mean_h_cil() const;
  [[nodiscard]] double mean_h_wp() const;
  [[nodiscard]] double mean_h_tp() const;
  // Largest |residual| over samples with task_mass > threshold.
  [[nodiscard]] double max_abs_residual(double threshold = 1e-12) const;
};

// probs: one row per sample over all T*J classes (task-major); labels are global classes.
DecompositionRecord wp_tp_decomposition(const Tensor& probs, std::span<const int> labels,
                                        std::size_t classes_per_task, double tolerance = 1e-9);

DecompositionRecord model_decomposition(const AgileModel& model, const TaskStream& stream);

}  // namespace agile
