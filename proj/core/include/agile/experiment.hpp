#pragma once

// Orchestration: train every (method, seed) pair, evaluate the full metric
// suite, and persist per-run results, checkpoints, tables and an aggregate.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agile/config.hpp"
#include "agile/metrics.hpp"
#include "agile/train.hpp"

namespace agile {

struct RunMetrics {
  std::vector<double> class_il;  // final accuracy per task
  std::vector<double> task_il;
  double class_il_mean{0.0};
  double task_il_mean{0.0};
  std::optional<double> forgetting;  // undefined for a single task
  StabilityPlasticity stability;
  CalibrationResult calibration;
  ConfusionMatrix confusion;
  double h_cil{0.0};
  double h_wp{0.0};
  double h_tp{0.0};
  double max_residual{0.0};
  ParamCounts params;
};

// Forgetting uses the per-epoch trace when the run evaluates an EMA model
// every epoch, task boundaries otherwise.
RunMetrics evaluate_run(const TrainResult& result, const TaskStream& stream, const TrainConfig& config);

struct RunOutcome {
  Method method{Method::agile};
  std::uint64_t seed{0};
  bool ok{false};
  std::string error;
  std::optional<RunMetrics> metrics;
  std::filesystem::path results_file;
};

struct ExperimentSummary {
  std::vector<RunOutcome> runs;
  std::filesystem::path aggregate_file;

  [[nodiscard]] bool ok() const;
};

// Single-run config echo: `methods` and `seeds` narrowed to this run.
ExperimentConfig single_run_config(const ExperimentConfig& config, Method method, std::uint64_t seed);

// Runs sequentially; a failing run is recorded with status "failed" and the
// remaining runs continue. Progress lines go to `log` when non-null.
ExperimentSummary run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

// Formatted comparison table from results or aggregate files, one row per
// method, sorted by Class-IL mean descending. Throws on unreadable input.
void write_report(const std::vector<std::filesystem::path>& files, std::ostream& out);

struct LatentDump {
  std::size_t rows{0};
  std::size_t tasks{0};
  std::filesystem::path latents;
  std::filesystem::path deltas;
};

// Per test sample: task, class, then encoder(f(x)) (*) delta_task from the
// inference model. The projection vectors go to "<stem>.deltas<ext>".
// DimensionError when the stream does not match the checkpoint.
LatentDump dump_latents(const std::filesystem::path& checkpoint, const std::filesystem::path& config,
                        const std::filesystem::path& out);

}  // namespace agile
