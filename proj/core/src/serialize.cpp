#include "agile/serialize.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "agile/errors.hpp"
#include "json.hpp"

namespace agile {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "agile-checkpoint v1";

json model_config_json(const ModelConfig& m) {
  return json{{"input_dim", m.input_dim},       {"hidden_dim", m.hidden_dim},
              {"feature_dim", m.feature_dim},   {"embed_dim", m.embed_dim},
              {"total_tasks", m.total_tasks},   {"classes_per_task", m.classes_per_task},
              {"use_attention", m.use_attention}, {"use_expanding_head", m.use_expanding_head}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig m;
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  m.feature_dim = j.at("feature_dim").get<std::size_t>();
  m.embed_dim = j.at("embed_dim").get<std::size_t>();
  m.total_tasks = j.at("total_tasks").get<std::size_t>();
  m.classes_per_task = j.at("classes_per_task").get<std::size_t>();
  m.use_attention = j.at("use_attention").get<bool>();
  m.use_expanding_head = j.at("use_expanding_head").get<bool>();
  return m;
}

json parameters_json(const AgileModel& model) {
  json out = json::array();
  for (const Parameter* p : model.parameters()) {
    const auto v = p->value.values();
    out.push_back(json{{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"frozen", p->frozen},
                       {"values", std::vector<double>(v.begin(), v.end())}});
  }
  return out;
}

// Rebuilds the architecture for `tasks` installed tasks, then overwrites every value.
AgileModel restore_model(const ModelConfig& config, std::size_t tasks, const json& params, bool trainable) {
  Rng scratch(0);
  AgileModel model(config, scratch);
  for (std::size_t t = 0; t < tasks; ++t) model.add_task(scratch);

  std::map<std::string, const json*> by_name;
  for (const auto& p : params) by_name[p.at("name").get<std::string>()] = &p;
  const auto slots = model.parameters();
  if (slots.size() != by_name.size()) {
    throw ValidationError("checkpoint: expected " + std::to_string(slots.size()) + " parameters, found " +
                          std::to_string(by_name.size()));
  }
  for (Parameter* slot : slots) {
    const auto it = by_name.find(slot->name);
    if (it == by_name.end()) throw ValidationError("checkpoint: missing parameter " + slot->name);
    const json& p = *it->second;
    const Shape shape{p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>()};
    if (shape != slot->value.shape()) {
      throw ValidationError("checkpoint: parameter " + slot->name + " has shape " + to_string(shape) +
                            ", architecture expects " + to_string(slot->value.shape()));
    }
    auto values = p.at("values").get<std::vector<double>>();
    if (values.size() != shape.rows * shape.cols) {
      throw ValidationError("checkpoint: parameter " + slot->name + " has the wrong number of values");
    }
    slot->value = Tensor(shape, std::move(values));
    slot->value.set_requires_grad(trainable);
    slot->frozen = p.at("frozen").get<bool>();
  }
  return model;
}

}  // namespace

std::string checkpoint_text(const std::string& config_ini, Method method, std::uint64_t seed,
                            const TrainResult& result) {
  const json doc{{"format", kFormat},
                 {"config_ini", config_ini},
                 {"method", std::string(to_string(method))},
                 {"seed", seed},
                 {"uses_ema", result.uses_ema},
                 {"model_config", model_config_json(result.model.config())},
                 {"tasks", result.model.num_tasks()},
                 {"live", parameters_json(result.model)},
                 {"ema", parameters_json(result.ema.model())}};
  return doc.dump(1) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const std::string& config_ini, Method method,
                     std::uint64_t seed, const TrainResult& result) {
  write_text_file(path, checkpoint_text(config_ini, method, seed, result));
}

Checkpoint parse_checkpoint(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != kFormat) throw ValidationError("checkpoint: unsupported format tag");
    const ModelConfig config = model_config_from(doc.at("model_config"));
    config.validate();
    const auto tasks = doc.at("tasks").get<std::size_t>();
    if (tasks == 0 || tasks > config.total_tasks) throw ValidationError("checkpoint: invalid task count");
    return Checkpoint{doc.at("config_ini").get<std::string>(),
                      parse_method(doc.at("method").get<std::string>()),
                      doc.at("seed").get<std::uint64_t>(),
                      doc.at("uses_ema").get<bool>(),
                      restore_model(config, tasks, doc.at("live"), true),
                      restore_model(config, tasks, doc.at("ema"), false)};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace agile
