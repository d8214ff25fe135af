#pragma once

// Experiment configuration: a flat, sectioned key = value file.
//
//   # comment
//   [stream]
//   tasks = 5
//   [train]
//   learning_rate = 0.05
//   [experiment]
//   methods = agile, er, sgd
//   seeds = 0, 1, 2
//
// Every key is optional; unknown sections and keys are errors.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "agile/stream.hpp"
#include "agile/train.hpp"

namespace agile {

enum class Method { agile, er, sgd };

[[nodiscard]] std::string_view to_string(Method m);
// Throws ArgumentError for an unknown name.
[[nodiscard]] Method parse_method(std::string_view name);

struct ExperimentConfig {
  StreamConfig stream;
  // Model dimensions live here too; the [model] section maps onto them.
  TrainConfig train;
  std::vector<Method> methods{Method::agile, Method::er, Method::sgd};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir{"results"};

  // Throws ConfigError (line 0) on cross-field problems.
  void validate(const std::string& source = "config") const;
};

// Parses and validates. Errors are ConfigError anchored at the offending line.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "config");
ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);

// Every field written explicitly; reals use 17 significant digits so that
// parse_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const ExperimentConfig& config);

// The training configuration actually used for one run. er and sgd switch
// every component off; sgd additionally has no buffer.
TrainConfig run_train_config(const ExperimentConfig& config, Method method, std::uint64_t seed);

}  // namespace agile
