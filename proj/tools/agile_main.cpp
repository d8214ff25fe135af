// agile: run experiments, print comparison tables, dump attention latents.
//
//   agile run <config>
//   agile report <results.json>...
//   agile dump-latents <checkpoint> <config> <out.tsv>
//   agile export-stream <config> <out.csv>
//
// AGILE_OUTPUT_DIR, when set, replaces [experiment] output_dir.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agile/config.hpp"
#include "agile/errors.hpp"
#include "agile/experiment.hpp"
#include "agile/stream.hpp"

namespace {

constexpr int kRunFailed = 1;
constexpr int kBadInput = 2;

int cmd_run(const std::string& config_path) {
  agile::ExperimentConfig config;
  try {
    config = agile::load_config(config_path);
  } catch (const agile::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
  if (const char* dir = std::getenv("AGILE_OUTPUT_DIR"); dir != nullptr && *dir != '\0') config.output_dir = dir;

  const auto summary = agile::run_experiment(config, &std::cerr);
  std::cerr << "[done] aggregate written to " << summary.aggregate_file.string() << "\n";
  if (!summary.ok()) {
    for (const auto& r : summary.runs) {
      if (!r.ok) std::cerr << "error: run " << r.results_file.string() << " failed: " << r.error << "\n";
    }
    return kRunFailed;
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& files) {
  std::vector<std::filesystem::path> paths(files.begin(), files.end());
  agile::write_report(paths, std::cout);
  return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& config, const std::string& out) {
  const auto dump = agile::dump_latents(checkpoint, config, out);
  std::cerr << "wrote " << dump.rows << " latent rows to " << dump.latents.string() << " and " << dump.tasks
            << " projection vectors to " << dump.deltas.string() << "\n";
  return 0;
}

int cmd_export(const std::string& config_path, const std::string& out_path) {
  const auto config = agile::load_config(config_path);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  agile::write_stream(agile::make_split_gaussian_stream(config.stream), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning with shared task attention: experiments, reports and latent dumps"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Train every configured (method, seed) pair and write results");
  run->add_option("config", run_config, "Experiment config file")->required();

  std::vector<std::string> report_files;
  auto* report = app.add_subcommand("report", "Print a comparison table from results or aggregate files");
  report->add_option("results", report_files, "Results JSON files")->required();

  std::string ckpt, dump_config, dump_out;
  auto* dump = app.add_subcommand("dump-latents", "Write attention latents and projection vectors as TSV");
  dump->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  dump->add_option("config", dump_config, "Config whose [stream] section regenerates the data")->required();
  dump->add_option("out", dump_out, "Output TSV path")->required();

  std::string export_config, export_out;
  auto* exp = app.add_subcommand("export-stream", "Write the configured stream as a line-delimited record file");
  exp->add_option("config", export_config, "Experiment config file")->required();
  exp->add_option("out", export_out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadInput;
  }

  try {
    if (run->parsed()) return cmd_run(run_config);
    if (report->parsed()) return cmd_report(report_files);
    if (dump->parsed()) return cmd_dump(ckpt, dump_config, dump_out);
    if (exp->parsed()) return cmd_export(export_config, export_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return kBadInput;
}
