#include "agile/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "agile/errors.hpp"

namespace agile {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::agile: return "agile";
    case Method::er: return "er";
    case Method::sgd: return "sgd";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "agile") return Method::agile;
  if (name == "er") return Method::er;
  if (name == "sgd") return Method::sgd;
  throw ArgumentError("unknown method '" + std::string(name) + "' (expected agile, er or sgd)");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ArgumentError("empty list element");
    items.push_back(item);
  }
  return items;
}

std::uint64_t parse_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ArgumentError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ArgumentError("expected a finite real number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ArgumentError("expected true or false, got '" + v + "'");
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

void require(bool ok, const char* what) {
  if (!ok) throw ArgumentError(what);
}

// Count fields must be at least `min`.
Field count_field(std::string section, std::string key, std::size_t& (*ref)(ExperimentConfig&), std::size_t min) {
  return Field{std::move(section), std::move(key),
               [ref, min](ExperimentConfig& c, const std::string& v) {
                 const auto n = parse_uint(v);
                 if (n < min) throw ArgumentError("must be at least " + std::to_string(min));
                 ref(c) = static_cast<std::size_t>(n);
               },
               [ref](const ExperimentConfig& c) {
                 return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
               }};
}

Field real_field(std::string section, std::string key, double& (*ref)(ExperimentConfig&),
                 std::function<void(double)> check) {
  return Field{std::move(section), std::move(key),
               [ref, check](ExperimentConfig& c, const std::string& v) {
                 const double x = parse_real(v);
                 check(x);
                 ref(c) = x;
               },
               [ref](const ExperimentConfig& c) { return real_text(ref(const_cast<ExperimentConfig&>(c))); }};
}

Field bool_field(std::string section, std::string key, bool& (*ref)(ExperimentConfig&)) {
  return Field{std::move(section), std::move(key),
               [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(v); },
               [ref](const ExperimentConfig& c) {
                 return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    auto positive = [](double x) { require(x > 0.0, "must be positive"); };
    auto non_negative = [](double x) { require(x >= 0.0, "must be non-negative"); };
    auto open_unit = [](double x) { require(x > 0.0 && x < 1.0, "must lie in (0, 1)"); };
    auto half_open_unit = [](double x) { require(x > 0.0 && x <= 1.0, "must lie in (0, 1]"); };

    std::vector<Field> t;
    t.push_back(count_field("stream", "tasks", [](ExperimentConfig& c) -> std::size_t& { return c.stream.tasks; }, 1));
    t.push_back(count_field("stream", "classes_per_task",
                            [](ExperimentConfig& c) -> std::size_t& { return c.stream.classes_per_task; }, 1));
    t.push_back(
        count_field("stream", "input_dim", [](ExperimentConfig& c) -> std::size_t& { return c.stream.input_dim; }, 1));
    t.push_back(count_field("stream", "train_per_class",
                            [](ExperimentConfig& c) -> std::size_t& { return c.stream.train_per_class; }, 1));
    t.push_back(count_field("stream", "test_per_class",
                            [](ExperimentConfig& c) -> std::size_t& { return c.stream.test_per_class; }, 1));
    t.push_back(real_field("stream", "cluster_spread",
                           [](ExperimentConfig& c) -> double& { return c.stream.cluster_spread; }, positive));
    t.push_back(real_field("stream", "cluster_separation",
                           [](ExperimentConfig& c) -> double& { return c.stream.cluster_separation; }, positive));
    t.push_back(Field{"stream", "seed",
                      [](ExperimentConfig& c, const std::string& v) { c.stream.seed = parse_uint(v); },
                      [](const ExperimentConfig& c) { return std::to_string(c.stream.seed); }});

    t.push_back(
        count_field("model", "hidden_dim", [](ExperimentConfig& c) -> std::size_t& { return c.train.hidden_dim; }, 1));
    t.push_back(count_field("model", "feature_dim",
                            [](ExperimentConfig& c) -> std::size_t& { return c.train.feature_dim; }, 1));
    t.push_back(
        count_field("model", "embed_dim", [](ExperimentConfig& c) -> std::size_t& { return c.train.embed_dim; }, 1));

    t.push_back(count_field("train", "epochs", [](ExperimentConfig& c) -> std::size_t& { return c.train.epochs; }, 1));
    t.push_back(
        count_field("train", "batch_size", [](ExperimentConfig& c) -> std::size_t& { return c.train.batch_size; }, 1));
    t.push_back(real_field("train", "learning_rate",
                           [](ExperimentConfig& c) -> double& { return c.train.learning_rate; }, positive));
    t.push_back(
        count_field("train", "buffer_size", [](ExperimentConfig& c) -> std::size_t& { return c.train.buffer_size; }, 0));
    t.push_back(
        real_field("train", "alpha", [](ExperimentConfig& c) -> double& { return c.train.weights.alpha; }, non_negative));
    t.push_back(
        real_field("train", "beta", [](ExperimentConfig& c) -> double& { return c.train.weights.beta; }, non_negative));
    t.push_back(
        real_field("train", "gamma", [](ExperimentConfig& c) -> double& { return c.train.weights.gamma; }, non_negative));
    t.push_back(real_field("train", "lambda", [](ExperimentConfig& c) -> double& { return c.train.weights.lambda; },
                           non_negative));
    t.push_back(
        real_field("train", "ema_decay", [](ExperimentConfig& c) -> double& { return c.train.ema_decay; }, open_unit));
    t.push_back(real_field("train", "ema_rate", [](ExperimentConfig& c) -> double& { return c.train.ema_rate; },
                           half_open_unit));
    t.push_back(bool_field("train", "use_attention",
                           [](ExperimentConfig& c) -> bool& { return c.train.toggles.use_attention; }));
    t.push_back(bool_field("train", "use_expanding_head",
                           [](ExperimentConfig& c) -> bool& { return c.train.toggles.use_expanding_head; }));
    t.push_back(bool_field("train", "use_ema", [](ExperimentConfig& c) -> bool& { return c.train.toggles.use_ema; }));
    t.push_back(bool_field("train", "use_consistency",
                           [](ExperimentConfig& c) -> bool& { return c.train.toggles.use_consistency; }));
    t.push_back(bool_field("train", "buffer_task_loss",
                           [](ExperimentConfig& c) -> bool& { return c.train.buffer_task_loss; }));
    t.push_back(
        count_field("train", "log_every", [](ExperimentConfig& c) -> std::size_t& { return c.train.log_every; }, 1));
    t.push_back(bool_field("train", "evaluate_every_epoch",
                           [](ExperimentConfig& c) -> bool& { return c.train.evaluate_every_epoch; }));

    t.push_back(Field{"experiment", "methods",
                      [](ExperimentConfig& c, const std::string& v) {
                        std::vector<Method> methods;
                        for (const auto& name : split_list(v)) {
                          const Method m = parse_method(name);
                          if (std::find(methods.begin(), methods.end(), m) != methods.end()) {
                            throw ArgumentError("method '" + name + "' listed twice");
                          }
                          methods.push_back(m);
                        }
                        c.methods = std::move(methods);
                      },
                      [](const ExperimentConfig& c) {
                        std::string out;
                        for (const Method m : c.methods) {
                          if (!out.empty()) out += ", ";
                          out += to_string(m);
                        }
                        return out;
                      }});
    t.push_back(Field{"experiment", "seeds",
                      [](ExperimentConfig& c, const std::string& v) {
                        std::vector<std::uint64_t> seeds;
                        for (const auto& s : split_list(v)) {
                          const auto seed = parse_uint(s);
                          if (std::find(seeds.begin(), seeds.end(), seed) != seeds.end()) {
                            throw ArgumentError("seed " + s + " listed twice");
                          }
                          seeds.push_back(seed);
                        }
                        c.seeds = std::move(seeds);
                      },
                      [](const ExperimentConfig& c) {
                        std::string out;
                        for (const auto s : c.seeds) {
                          if (!out.empty()) out += ", ";
                          out += std::to_string(s);
                        }
                        return out;
                      }});
    t.push_back(Field{"experiment", "output_dir",
                      [](ExperimentConfig& c, const std::string& v) {
                        if (v.empty()) throw ArgumentError("must not be empty");
                        c.output_dir = v;
                      },
                      [](const ExperimentConfig& c) { return c.output_dir; }});
    return t;
  }();
  return table;
}

// Cross-field checks; `lines` maps "section.key" to where it was set.
void check_config(const ExperimentConfig& c, const std::string& source, const std::map<std::string, int>& lines) {
  auto line_of = [&lines](const std::string& key) {
    const auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  const auto& toggles = c.train.toggles;
  if (toggles.use_consistency && !toggles.use_ema) {
    throw ConfigError(source, std::max(line_of("train.use_consistency"), line_of("train.use_ema")),
                      "train.use_consistency = true requires train.use_ema = true");
  }
  if (toggles.use_attention && !toggles.use_expanding_head) {
    throw ConfigError(source, std::max(line_of("train.use_attention"), line_of("train.use_expanding_head")),
                      "train.use_attention = true requires train.use_expanding_head = true");
  }
  if (c.methods.empty()) throw ConfigError(source, line_of("experiment.methods"), "experiment.methods is empty");
  if (c.seeds.empty()) throw ConfigError(source, line_of("experiment.seeds"), "experiment.seeds is empty");
  const bool replays = std::any_of(c.methods.begin(), c.methods.end(), [](Method m) { return m != Method::sgd; });
  if (replays && c.train.buffer_size == 0) {
    throw ConfigError(source, line_of("train.buffer_size"), "train.buffer_size must be positive for agile and er");
  }
  // Backstop: anything the per-key checks above do not cover.
  try {
    c.stream.validate();
    c.train.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(source, 0, e.what());
  }
}

}  // namespace

void ExperimentConfig::validate(const std::string& source) const { check_config(*this, source, {}); }

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig config;
  std::map<std::string, int> lines;
  std::set<std::string> known_sections;
  for (const auto& f : fields()) known_sections.insert(f.section);

  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_sections.contains(section)) {
        throw ConfigError(source, line_no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ConfigError(source, line_no, "key '" + key + "' appears before any [section]");
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return f.section == section && f.key == key; });
    if (it == table.end()) throw ConfigError(source, line_no, "unknown key '" + key + "' in [" + section + "]");
    const std::string qualified = section + "." + key;
    if (lines.contains(qualified)) {
      throw ConfigError(source, line_no,
                        qualified + " already set on line " + std::to_string(lines.at(qualified)));
    }
    try {
      it->set(config, value);
    } catch (const ArgumentError& e) {
      throw ConfigError(source, line_no, qualified + ": " + e.what());
    }
    lines[qualified] = line_no;
  }
  check_config(config, source, lines);
  return config;
}

ExperimentConfig parse_config_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse_config(in, source);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  return parse_config(in, path);
}

std::string to_ini(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

TrainConfig run_train_config(const ExperimentConfig& config, Method method, std::uint64_t seed) {
  TrainConfig t = config.train;
  t.seed = seed;
  if (method != Method::agile) t.toggles = AblationToggles::none();
  if (method == Method::sgd) t.buffer_size = 0;
  return t;
}

}  // namespace agile
