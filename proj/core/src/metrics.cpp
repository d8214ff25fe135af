#include "agile/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "agile/errors.hpp"

namespace agile {

namespace {

std::size_t argmax(std::span<const double> row, std::size_t begin, std::size_t end) {
  std::size_t best = begin;
  for (std::size_t c = begin + 1; c < end; ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

Tensor test_logits(const AgileModel& model, const TaskDataset& ds) {
  const NoGradGuard no_grad;
  return model.forward(make_batch(ds.test).inputs).logits;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double total = 0.0;
  for (const double x : v) total += x;
  return total / static_cast<double>(v.size());
}

}  // namespace

// ---- accuracy --------------------------------------------------------------

SeenTaskAccuracy evaluate_seen_tasks(const AgileModel& model, const TaskStream& stream) {
  SeenTaskAccuracy result;
  const std::size_t per_task = stream.classes_per_task();
  for (std::size_t t = 0; t < model.num_tasks(); ++t) {
    const TaskDataset& ds = stream.task(t);
    if (ds.test.empty()) {
      result.class_il.push_back(0.0);
      result.task_il.push_back(0.0);
      continue;
    }
    const Tensor logits = test_logits(model, ds);
    const auto v = logits.values();
    const std::size_t cols = logits.cols();
    std::size_t class_correct = 0;
    std::size_t task_correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const auto row = v.subspan(r * cols, cols);
      const auto label = static_cast<std::size_t>(ds.test[r].label);
      if (argmax(row, 0, cols) == label) ++class_correct;
      if (argmax(row, t * per_task, (t + 1) * per_task) == label) ++task_correct;
    }
    const auto n = static_cast<double>(ds.test.size());
    result.class_il.push_back(static_cast<double>(class_correct) / n);
    result.task_il.push_back(static_cast<double>(task_correct) / n);
  }
  return result;
}

std::vector<double> evaluate_accuracy(const AgileModel& model, const TaskStream& stream, Scenario scenario) {
  auto acc = evaluate_seen_tasks(model, stream);
  return scenario == Scenario::class_il ? std::move(acc.class_il) : std::move(acc.task_il);
}

Tensor class_probabilities(const AgileModel& model, const Tensor& x) {
  const NoGradGuard no_grad;
  return softmax_rows(model.forward(x).logits);
}

// ---- accuracy trace ----------------------------------------------------------

std::size_t AccuracyMatrix::num_tasks() const { return trace.empty() ? 0 : trace.back().accuracy.size(); }

std::vector<std::vector<double>> AccuracyMatrix::end_of_task() const {
  std::vector<std::vector<double>> rows;
  for (const auto& row : trace) {
    if (row.epoch < 0) rows.push_back(row.accuracy);
  }
  return rows;
}

AccuracyMatrix accuracy_matrix(const RunLog& log, bool per_epoch) {
  AccuracyMatrix m;
  for (std::size_t task = 0; task < log.class_il_matrix.size(); ++task) {
    if (per_epoch) {
      for (const auto& e : log.epochs) {
        if (e.task == static_cast<int>(task)) m.trace.push_back(AccuracyRow{e.task, e.epoch, e.class_il});
      }
    }
    m.trace.push_back(AccuracyRow{static_cast<int>(task), -1, log.class_il_matrix[task]});
  }
  return m;
}

double forgetting_measure(const AccuracyMatrix& matrix) {
  const std::size_t tasks = matrix.num_tasks();
  if (tasks < 2) throw UndefinedError("forgetting measure needs at least two tasks");
  const auto& final_row = matrix.trace.back().accuracy;
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tasks; ++t) {
    double best = final_row[t];
    for (const auto& row : matrix.trace) {
      if (row.accuracy.size() > t) best = std::max(best, row.accuracy[t]);
    }
    total += best - final_row[t];
  }
  return total / static_cast<double>(tasks - 1);
}

StabilityPlasticity stability_plasticity(const AccuracyMatrix& matrix) {
  const auto rows = matrix.end_of_task();
  if (rows.empty()) throw UndefinedError("stability/plasticity needs at least one finished task");
  StabilityPlasticity sp;
  const auto& final_row = rows.back();
  if (final_row.size() == 1) {
    sp.stability = final_row[0];
  } else {
    sp.stability = mean_of(std::vector<double>(final_row.begin(), final_row.end() - 1));
  }
  std::vector<double> diagonal;
  for (std::size_t t = 0; t < rows.size(); ++t) diagonal.push_back(rows[t].at(t));
  sp.plasticity = mean_of(diagonal);
  const double denom = sp.stability + sp.plasticity;
  sp.trade_off = denom > 0.0 ? 2.0 * sp.stability * sp.plasticity / denom : 0.0;
  return sp;
}

// ---- calibration ------------------------------------------------------------

CalibrationResult ece(std::span<const double> confidences, std::span<const bool> correct, std::size_t bins) {
  if (confidences.empty()) throw UndefinedError("ECE of an empty sample set");
  if (confidences.size() != correct.size()) throw DimensionError("ece: confidences and correctness differ in length");
  if (bins == 0) throw ArgumentError("ece: need at least one bin");

  CalibrationResult result;
  result.bins.resize(bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct_sum(bins, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("ece: confidence outside [0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    conf_sum[b] += c;
    correct_sum[b] += correct[i] ? 1.0 : 0.0;
    ++result.bins[b].count;
  }
  const auto n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = result.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    if (bin.count == 0) continue;
    const auto count = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / count;
    bin.accuracy = correct_sum[b] / count;
    result.ece += count / n * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return result;
}

CalibrationResult model_calibration(const AgileModel& model, const TaskStream& stream, std::size_t bins) {
  std::vector<double> confidences;
  std::vector<bool> correct_flags;
  for (std::size_t t = 0; t < model.num_tasks(); ++t) {
    const TaskDataset& ds = stream.task(t);
    if (ds.test.empty()) continue;
    const Tensor probs = class_probabilities(model, make_batch(ds.test).inputs);
    const std::size_t cols = probs.cols();
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      const auto row = probs.values().subspan(r * cols, cols);
      const std::size_t best = argmax(row, 0, cols);
      confidences.push_back(row[best]);
      correct_flags.push_back(static_cast<int>(best) == ds.test[r].label);
    }
  }
  // std::vector<bool> has no contiguous storage.
  const std::unique_ptr<bool[]> flags(new bool[correct_flags.size()]);
  std::copy(correct_flags.begin(), correct_flags.end(), flags.get());
  return ece(confidences, std::span<const bool>(flags.get(), correct_flags.size()), bins);
}

// ---- task confusion ---------------------------------------------------------

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (const auto c : row) n += c;
  }
  return n;
}

double ConfusionMatrix::diagonal_mass() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t diag = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) diag += counts[i][i];
  return static_cast<double>(diag) / static_cast<double>(n);
}

double ConfusionMatrix::final_column_mass() const {
  const std::size_t n = total();
  if (n == 0 || counts.empty()) return 0.0;
  std::size_t last = 0;
  for (const auto& row : counts) last += row.back();
  return static_cast<double>(last) / static_cast<double>(n);
}

ConfusionMatrix task_confusion(const AgileModel& model, const TaskStream& stream) {
  const std::size_t tasks = model.num_tasks();
  const std::size_t per_task = stream.classes_per_task();
  ConfusionMatrix cm;
  cm.counts.assign(tasks, std::vector<std::size_t>(tasks, 0));
  for (std::size_t t = 0; t < tasks; ++t) {
    const TaskDataset& ds = stream.task(t);
    if (ds.test.empty()) continue;
    const Tensor logits = test_logits(model, ds);
    const std::size_t cols = logits.cols();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const std::size_t predicted = argmax(logits.values().subspan(r * cols, cols), 0, cols) / per_task;
      ++cm.counts[t][predicted];
    }
  }
  return cm;
}

// ---- WP / TP decomposition -------------------------------------------------

double DecompositionRecord::mean_h_cil() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.h_cil;
  return entries.empty() ? 0.0 : total / static_cast<double>(entries.size());
}

double DecompositionRecord::mean_h_wp() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.h_wp;
  return entries.empty() ? 0.0 : total / static_cast<double>(entries.size());
}

double DecompositionRecord::mean_h_tp() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.h_tp;
  return entries.empty() ? 0.0 : total / static_cast<double>(entries.size());
}

double DecompositionRecord::max_abs_residual(double threshold) const {
  double worst = 0.0;
  for (const auto& e : entries) {
    if (e.task_mass > threshold) worst = std::max(worst, std::abs(e.residual));
  }
  return worst;
}

DecompositionRecord wp_tp_decomposition(const Tensor& probs, std::span<const int> labels,
                                        std::size_t classes_per_task, double tolerance) {
  if (classes_per_task == 0 || probs.cols() % classes_per_task != 0) {
    throw DimensionError("wp_tp_decomposition: width " + std::to_string(probs.cols()) +
                         " is not a multiple of the classes per task");
  }
  if (labels.size() != probs.rows()) throw DimensionError("wp_tp_decomposition: one label per row required");
  const std::size_t cols = probs.cols();
  DecompositionRecord record;
  record.entries.reserve(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.values().subspan(r * cols, cols);
    double total = 0.0;
    for (const double p : row) {
      if (!(p >= 0.0)) throw ValidationError("wp_tp_decomposition: negative probability in row " + std::to_string(r));
      total += p;
    }
    if (std::abs(total - 1.0) > tolerance) {
      throw ValidationError("wp_tp_decomposition: row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) throw IndexError("wp_tp_decomposition: label out of range");
    const std::size_t task = static_cast<std::size_t>(label) / classes_per_task;
    double task_mass = 0.0;
    for (std::size_t j = 0; j < classes_per_task; ++j) task_mass += row[task * classes_per_task + j];

    DecompositionEntry e;
    const double p = row[static_cast<std::size_t>(label)];
    e.task_mass = task_mass;
    e.h_cil = -std::log(p);
    e.h_tp = -std::log(task_mass);
    if (task_mass > 0.0) {
      e.h_wp = -std::log(p / task_mass);
      e.residual = e.h_cil - (e.h_wp + e.h_tp);
    } else {
      e.h_wp = std::numeric_limits<double>::infinity();
    }
    record.entries.push_back(e);
  }
  return record;
}

DecompositionRecord model_decomposition(const AgileModel& model, const TaskStream& stream) {
  DecompositionRecord all;
  for (std::size_t t = 0; t < model.num_tasks(); ++t) {
    const TaskDataset& ds = stream.task(t);
    if (ds.test.empty()) continue;
    const Batch batch = make_batch(ds.test);
    auto part = wp_tp_decomposition(class_probabilities(model, batch.inputs), batch.labels, stream.classes_per_task());
    all.entries.insert(all.entries.end(), part.entries.begin(), part.entries.end());
  }
  return all;
}

}  // namespace agile
