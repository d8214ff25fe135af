#include "agile/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "agile/errors.hpp"
#include "agile/serialize.hpp"
#include "agile/stream.hpp"
#include "json.hpp"

namespace agile {

namespace {

using nlohmann::json;

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Display value: percent with two decimals. Stored as a number so the report
// can print it back unchanged.
double percent2(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

struct Stat {
  double mean{0.0};
  double std{0.0};
};

// Population standard deviation (divide by n).
Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  for (const double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (const double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

double mean_of(const std::vector<double>& xs) { return stat_of(xs).mean; }

std::string run_stem(Method method, std::uint64_t seed) {
  return std::string(to_string(method)) + "-seed" + std::to_string(seed);
}

json train_config_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"buffer_size", t.buffer_size},
              {"alpha", t.weights.alpha},
              {"beta", t.weights.beta},
              {"gamma", t.weights.gamma},
              {"lambda", t.weights.lambda},
              {"ema_decay", t.ema_decay},
              {"ema_rate", t.ema_rate},
              {"use_attention", t.toggles.use_attention},
              {"use_expanding_head", t.toggles.use_expanding_head},
              {"use_ema", t.toggles.use_ema},
              {"use_consistency", t.toggles.use_consistency},
              {"buffer_task_loss", t.buffer_task_loss},
              {"hidden_dim", t.hidden_dim},
              {"feature_dim", t.feature_dim},
              {"embed_dim", t.embed_dim},
              {"log_every", t.log_every},
              {"evaluate_every_epoch", t.evaluate_every_epoch},
              {"seed", t.seed}};
}

json run_log_json(const RunLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back(json{{"task", e.task}, {"epoch", e.epoch}, {"class_il", e.class_il}, {"task_il", e.task_il}});
  }
  json losses = json::array();
  for (const auto& l : log.losses) {
    losses.push_back(json{{"step", l.step}, {"task", l.task}, {"total", l.total}, {"er", l.er}, {"cr", l.cr},
                          {"tp", l.tp}, {"pd", l.pd}});
  }
  return json{{"epochs", epochs},
              {"class_il_matrix", log.class_il_matrix},
              {"task_il_matrix", log.task_il_matrix},
              {"losses", losses},
              {"steps", log.steps}};
}

json metrics_json(const RunMetrics& m) {
  json bins = json::array();
  for (const auto& b : m.calibration.bins) {
    bins.push_back(json{{"lower", b.lower},
                        {"upper", b.upper},
                        {"mean_confidence", b.mean_confidence},
                        {"accuracy", b.accuracy},
                        {"count", b.count}});
  }
  return json{{"class_il", m.class_il},
              {"task_il", m.task_il},
              {"class_il_mean", m.class_il_mean},
              {"task_il_mean", m.task_il_mean},
              {"forgetting", m.forgetting ? json(*m.forgetting) : json(nullptr)},
              {"stability", m.stability.stability},
              {"plasticity", m.stability.plasticity},
              {"trade_off", m.stability.trade_off},
              {"ece", m.calibration.ece},
              {"reliability", bins},
              {"confusion", m.confusion.counts},
              {"confusion_diagonal_mass", m.confusion.diagonal_mass()},
              {"confusion_final_column_mass", m.confusion.final_column_mass()},
              {"decomposition",
               json{{"mean_h_cil", m.h_cil}, {"mean_h_wp", m.h_wp}, {"mean_h_tp", m.h_tp},
                    {"max_abs_residual", m.max_residual}}},
              {"parameters",
               json{{"backbone", m.params.backbone},
                    {"attention", m.params.attention},
                    {"projections", m.params.projections},
                    {"heads", m.params.heads},
                    {"total", m.params.total}}}};
}

json stat_json(const std::vector<double>& xs) {
  const Stat s = stat_of(xs);
  return json{{"mean", s.mean}, {"std", s.std}};
}

json display_stat(const std::vector<double>& xs) {
  if (xs.empty()) return json(nullptr);
  const Stat s = stat_of(xs);
  return json{{"mean", percent2(s.mean)}, {"std", percent2(s.std)}};
}

// One report row over the successful runs of a method.
json table_row(Method method, const std::vector<const RunMetrics*>& runs) {
  std::vector<double> cil, til, fgt, trade, ece;
  for (const RunMetrics* m : runs) {
    cil.push_back(m->class_il_mean);
    til.push_back(m->task_il_mean);
    if (m->forgetting) fgt.push_back(*m->forgetting);
    trade.push_back(m->stability.trade_off);
    ece.push_back(m->calibration.ece);
  }
  return json{{"method", std::string(to_string(method))},
              {"runs", runs.size()},
              {"class_il", display_stat(cil)},
              {"task_il", display_stat(til)},
              {"forgetting", display_stat(fgt)},
              {"trade_off", display_stat(trade)},
              {"ece", display_stat(ece)}};
}

std::string confusion_tsv(const ConfusionMatrix& c) {
  std::string out = "true_task";
  for (std::size_t j = 0; j < c.counts.size(); ++j) out += "\tpred_" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < c.counts.size(); ++i) {
    out += std::to_string(i);
    for (const auto n : c.counts[i]) out += "\t" + std::to_string(n);
    out += "\n";
  }
  return out;
}

std::string reliability_tsv(const CalibrationResult& cal) {
  std::string out = "lower\tupper\tcount\tmean_confidence\taccuracy\n";
  for (const auto& b : cal.bins) {
    out += real_text(b.lower) + "\t" + real_text(b.upper) + "\t" + std::to_string(b.count) + "\t" +
           real_text(b.mean_confidence) + "\t" + real_text(b.accuracy) + "\n";
  }
  return out;
}

}  // namespace

RunMetrics evaluate_run(const TrainResult& result, const TaskStream& stream, const TrainConfig& config) {
  const AgileModel& model = result.inference_model();
  RunMetrics m;
  const bool per_epoch = config.toggles.use_ema && config.evaluate_every_epoch;
  const AccuracyMatrix matrix = accuracy_matrix(result.log, per_epoch);

  m.class_il = result.log.class_il_matrix.back();
  m.task_il = result.log.task_il_matrix.back();
  m.class_il_mean = mean_of(m.class_il);
  m.task_il_mean = mean_of(m.task_il);
  if (stream.num_tasks() >= 2) m.forgetting = forgetting_measure(matrix);
  m.stability = stability_plasticity(matrix);
  m.calibration = model_calibration(model, stream);
  m.confusion = task_confusion(model, stream);
  const DecompositionRecord dec = model_decomposition(model, stream);
  m.h_cil = dec.mean_h_cil();
  m.h_wp = dec.mean_h_wp();
  m.h_tp = dec.mean_h_tp();
  m.max_residual = dec.max_abs_residual();
  m.params = result.model.param_count();
  return m;
}

bool ExperimentSummary::ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.ok; });
}

ExperimentConfig single_run_config(const ExperimentConfig& config, Method method, std::uint64_t seed) {
  ExperimentConfig single = config;
  single.methods = {method};
  single.seeds = {seed};
  return single;
}

ExperimentSummary run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);

  const TaskStream stream = make_split_gaussian_stream(config.stream);
  ExperimentSummary summary;

  for (const Method method : config.methods) {
    for (const std::uint64_t seed : config.seeds) {
      RunOutcome outcome;
      outcome.method = method;
      outcome.seed = seed;
      const std::string stem = run_stem(method, seed);
      outcome.results_file = dir / (stem + ".json");
      const std::string ini = to_ini(single_run_config(config, method, seed));
      const TrainConfig train = run_train_config(config, method, seed);
      if (log) *log << "[run] " << stem << " ..." << std::flush;
      try {
        const TrainResult result = train_stream(train, stream);
        RunMetrics metrics = evaluate_run(result, stream, train);
        save_checkpoint(dir / (stem + ".ckpt"), ini, method, seed, result);
        write_text_file(dir / (stem + ".confusion.tsv"), confusion_tsv(metrics.confusion));
        write_text_file(dir / (stem + ".reliability.tsv"), reliability_tsv(metrics.calibration));
        const json doc{{"status", "ok"},
                       {"method", std::string(to_string(method))},
                       {"seed", seed},
                       {"config_ini", ini},
                       {"train_config", train_config_json(train)},
                       {"checkpoint", stem + ".ckpt"},
                       {"run_log", run_log_json(result.log)},
                       {"metrics", metrics_json(metrics)},
                       {"table", json::array({table_row(method, {&metrics})})}};
        write_text_file(outcome.results_file, doc.dump(1) + "\n");
        outcome.ok = true;
        outcome.metrics = std::move(metrics);
        if (log) {
          *log << " class-il " << percent2(outcome.metrics->class_il_mean) << "%, task-il "
               << percent2(outcome.metrics->task_il_mean) << "%\n";
        }
      } catch (const std::exception& e) {
        outcome.error = e.what();
        const json doc{{"status", "failed"},
                       {"method", std::string(to_string(method))},
                       {"seed", seed},
                       {"config_ini", ini},
                       {"error", outcome.error}};
        try {
          write_text_file(outcome.results_file, doc.dump(1) + "\n");
        } catch (const std::exception&) {
          // Nothing more can be preserved; the summary still reports the failure.
        }
        if (log) *log << " FAILED: " << outcome.error << "\n";
      }
      summary.runs.push_back(std::move(outcome));
    }
  }

  // Aggregate over successful runs only; failed runs are listed by name.
  json methods = json::object();
  json table = json::array();
  json failed = json::array();
  for (const Method method : config.methods) {
    std::vector<const RunMetrics*> ok;
    json seeds = json::array();
    std::vector<double> cil, til, trade, ece, fgt, stab, plast;
    for (const auto& r : summary.runs) {
      if (r.method != method) continue;
      if (!r.ok) {
        failed.push_back(r.results_file.filename().string());
        continue;
      }
      ok.push_back(&*r.metrics);
      seeds.push_back(r.seed);
      cil.push_back(r.metrics->class_il_mean);
      til.push_back(r.metrics->task_il_mean);
      trade.push_back(r.metrics->stability.trade_off);
      ece.push_back(r.metrics->calibration.ece);
      stab.push_back(r.metrics->stability.stability);
      plast.push_back(r.metrics->stability.plasticity);
      if (r.metrics->forgetting) fgt.push_back(*r.metrics->forgetting);
    }
    if (ok.empty()) continue;
    methods[std::string(to_string(method))] = json{{"seeds", seeds},
                                                   {"class_il", stat_json(cil)},
                                                   {"task_il", stat_json(til)},
                                                   {"forgetting", fgt.empty() ? json(nullptr) : stat_json(fgt)},
                                                   {"stability", stat_json(stab)},
                                                   {"plasticity", stat_json(plast)},
                                                   {"trade_off", stat_json(trade)},
                                                   {"ece", stat_json(ece)}};
    table.push_back(table_row(method, ok));
  }
  json files = json::array();
  for (const auto& r : summary.runs) files.push_back(r.results_file.filename().string());
  const json aggregate{{"status", summary.ok() ? "ok" : "partial"},
                       {"std", "population"},
                       {"config_ini", to_ini(config)},
                       {"files", files},
                       {"failed", failed},
                       {"methods", methods},
                       {"table", table}};
  summary.aggregate_file = dir / "aggregate.json";
  write_text_file(summary.aggregate_file, aggregate.dump(1) + "\n");
  return summary;
}

void write_report(const std::vector<std::filesystem::path>& files, std::ostream& out) {
  if (files.empty()) throw ArgumentError("report: no results files given");
  std::vector<json> rows;
  for (const auto& path : files) {
    json doc;
    try {
      doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
      throw ValidationError("report: " + path.string() + " is not valid JSON (" + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("table") || !doc.at("table").is_array()) {
      throw ValidationError("report: " + path.string() + " has no results table" +
                            (doc.is_object() && doc.value("status", "") == "failed" ? " (run failed)" : ""));
    }
    for (const auto& row : doc.at("table")) rows.push_back(row);
  }
  auto class_mean = [](const json& row) {
    return row.at("class_il").is_null() ? -1.0 : row.at("class_il").at("mean").get<double>();
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const json& a, const json& b) {
    const double ca = class_mean(a);
    const double cb = class_mean(b);
    if (ca != cb) return ca > cb;
    return a.at("method").get<std::string>() < b.at("method").get<std::string>();
  });

  auto cell = [](const json& s) -> std::string {
    if (s.is_null()) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.at("mean").get<double>(), s.at("std").get<double>());
    return buf;
  };
  const std::vector<std::string> headers{"Method", "Runs", "Class-IL", "Task-IL", "F_T", "Trade-off", "ECE"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    cells.push_back({row.at("method").get<std::string>(), std::to_string(row.at("runs").get<std::size_t>()),
                     cell(row.at("class_il")), cell(row.at("task_il")), cell(row.at("forgetting")),
                     cell(row.at("trade_off")), cell(row.at("ece"))});
  }
  // Width in code points; "±" is two bytes in UTF-8.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> widths(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    widths[c] = width(headers[c]);
    for (const auto& r : cells) widths[c] = std::max(widths[c], width(r[c]));
  }
  auto print_row = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << r[c];
      if (c + 1 < r.size()) out << std::string(widths[c] - width(r[c]) + 2, ' ');
    }
    out << "\n";
  };
  print_row(headers);
  std::vector<std::string> rule;
  for (const auto w : widths) rule.push_back(std::string(w, '-'));
  print_row(rule);
  for (const auto& r : cells) print_row(r);
  out << "(accuracies, F_T, trade-off and ECE in percent; mean ± population std over runs)\n";
}

LatentDump dump_latents(const std::filesystem::path& checkpoint, const std::filesystem::path& config,
                        const std::filesystem::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const ExperimentConfig cfg = load_config(config.string());
  const AgileModel& model = ckpt.inference_model();
  const ModelConfig& mc = model.config();
  if (!mc.use_attention) {
    throw ArgumentError("dump-latents: checkpoint " + checkpoint.string() + " has no attention module");
  }
  const TaskStream stream = make_split_gaussian_stream(cfg.stream);
  if (stream.input_dim() != mc.input_dim || stream.classes_per_task() != mc.classes_per_task ||
      stream.num_tasks() != mc.total_tasks) {
    throw DimensionError("dump-latents: stream (tasks=" + std::to_string(stream.num_tasks()) +
                         ", classes_per_task=" + std::to_string(stream.classes_per_task()) +
                         ", input_dim=" + std::to_string(stream.input_dim()) + ") does not match checkpoint (tasks=" +
                         std::to_string(mc.total_tasks) + ", classes_per_task=" +
                         std::to_string(mc.classes_per_task) + ", input_dim=" + std::to_string(mc.input_dim) + ")");
  }

  LatentDump dump;
  dump.latents = out;
  dump.deltas = out;
  dump.deltas.replace_extension(".deltas" + (out.has_extension() ? out.extension().string() : std::string(".tsv")));
  dump.tasks = model.num_tasks();

  const NoGradGuard no_grad;
  std::string text = "task\tclass";
  for (std::size_t k = 0; k < mc.embed_dim; ++k) text += "\tz" + std::to_string(k);
  text += "\n";
  for (std::size_t t = 0; t < model.num_tasks(); ++t) {
    const TaskDataset& ds = stream.task(t);
    const Batch batch = make_batch(ds.test);
    const Tensor z = model.projected_latent(batch.inputs, static_cast<int>(t));
    for (std::size_t r = 0; r < z.rows(); ++r) {
      text += std::to_string(t) + "\t" + std::to_string(batch.labels[r]);
      for (std::size_t c = 0; c < z.cols(); ++c) text += "\t" + real_text(z(r, c));
      text += "\n";
      ++dump.rows;
    }
  }
  write_text_file(dump.latents, text);

  std::string deltas = "task";
  for (std::size_t k = 0; k < mc.embed_dim; ++k) deltas += "\td" + std::to_string(k);
  deltas += "\n";
  for (const auto& p : model.projections) {
    deltas += std::to_string(p.task_id);
    for (const double v : p.delta.value.values()) deltas += "\t" + real_text(v);
    deltas += "\n";
  }
  write_text_file(dump.deltas, deltas);
  return dump;
}

}  // namespace agile
