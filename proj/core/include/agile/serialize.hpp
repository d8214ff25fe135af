#pragma once

// Checkpoints: both models, every named parameter, exact values. Files are
// UTF-8 JSON with sorted keys, so equal inputs give byte-identical files.

#include <cstdint>
#include <filesystem>
#include <string>

#include "agile/config.hpp"
#include "agile/model.hpp"
#include "agile/train.hpp"

namespace agile {

struct Checkpoint {
  std::string config_ini;  // single-run config that produced the models
  Method method{Method::agile};
  std::uint64_t seed{0};
  bool uses_ema{true};
  AgileModel live;
  AgileModel ema;

  [[nodiscard]] const AgileModel& inference_model() const noexcept { return uses_ema ? ema : live; }
};

std::string checkpoint_text(const std::string& config_ini, Method method, std::uint64_t seed, const TrainResult& result);
void save_checkpoint(const std::filesystem::path& path, const std::string& config_ini, Method method,
                     std::uint64_t seed, const TrainResult& result);
// Throws ValidationError for a malformed or inconsistent file.
Checkpoint parse_checkpoint(const std::string& text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Atomic-enough write: temp file in the same directory, then rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace agile
