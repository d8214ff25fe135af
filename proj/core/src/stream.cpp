#include "agile/stream.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "agile/errors.hpp"

namespace agile {

void StreamConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ArgumentError(std::string("stream.") + name + " must be positive");
  };
  positive(tasks, "tasks");
  positive(classes_per_task, "classes_per_task");
  positive(input_dim, "input_dim");
  positive(train_per_class, "train_per_class");
  positive(test_per_class, "test_per_class");
  if (!(cluster_spread > 0.0)) throw ArgumentError("stream.cluster_spread must be positive");
  if (!(cluster_separation > 0.0)) throw ArgumentError("stream.cluster_separation must be positive");
}

TaskStream::TaskStream(std::size_t classes_per_task, std::size_t input_dim, std::vector<TaskDataset> tasks)
    : classes_per_task_(classes_per_task), input_dim_(input_dim), tasks_(std::move(tasks)) {
  if (classes_per_task_ == 0 || input_dim_ == 0 || tasks_.empty()) {
    throw ArgumentError("task stream needs at least one task, class and input dimension");
  }
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    const auto& ds = tasks_[t];
    if (ds.task_id != static_cast<int>(t)) throw ArgumentError("task datasets must be ordered by task id");
    const int lo = static_cast<int>(t * classes_per_task_);
    const int hi = lo + static_cast<int>(classes_per_task_);
    for (const auto* split : {&ds.train, &ds.test}) {
      for (const auto& s : *split) {
        if (s.label < lo || s.label >= hi || s.task != ds.task_id) {
          throw ArgumentError("sample with class " + std::to_string(s.label) + " does not belong to task " +
                              std::to_string(t));
        }
        if (s.features.size() != input_dim_) throw DimensionError("sample feature width differs from input_dim");
      }
    }
  }
}

const TaskDataset& TaskStream::task(std::size_t t) const {
  if (t >= tasks_.size()) {
    throw IndexError("task " + std::to_string(t) + " outside stream of " + std::to_string(tasks_.size()));
  }
  return tasks_[t];
}

int TaskStream::global_class(std::size_t task, std::size_t local_class) const {
  if (task >= tasks_.size() || local_class >= classes_per_task_) {
    throw IndexError("class (" + std::to_string(task) + ", " + std::to_string(local_class) + ") out of range");
  }
  return static_cast<int>(task * classes_per_task_ + local_class);
}

TaskStream make_split_gaussian_stream(const StreamConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n_classes = cfg.tasks * cfg.classes_per_task;

  std::vector<std::vector<double>> means(n_classes, std::vector<double>(cfg.input_dim));
  for (auto& mean : means) {
    for (double& m : mean) m = rng.uniform(-cfg.cluster_separation, cfg.cluster_separation);
  }

  auto draw = [&](std::size_t cls, std::size_t count, std::vector<Sample>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      Sample s;
      s.label = static_cast<int>(cls);
      s.task = static_cast<int>(cls / cfg.classes_per_task);
      s.features.resize(cfg.input_dim);
      for (std::size_t d = 0; d < cfg.input_dim; ++d) s.features[d] = rng.normal(means[cls][d], cfg.cluster_spread);
      out.push_back(std::move(s));
    }
  };

  std::vector<TaskDataset> tasks(cfg.tasks);
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    tasks[t].task_id = static_cast<int>(t);
    for (std::size_t j = 0; j < cfg.classes_per_task; ++j) {
      const std::size_t cls = t * cfg.classes_per_task + j;
      draw(cls, cfg.train_per_class, tasks[t].train);
      draw(cls, cfg.test_per_class, tasks[t].test);
    }
  }
  return TaskStream(cfg.classes_per_task, cfg.input_dim, std::move(tasks));
}

// ---- import / export -----------------------------------------------------

void write_stream(const TaskStream& stream, std::ostream& out) {
  out << "# agile-stream v1\n";
  out << "# tasks=" << stream.num_tasks() << " classes_per_task=" << stream.classes_per_task()
      << " input_dim=" << stream.input_dim() << '\n';
  char buf[32];
  for (const auto& ds : stream.tasks()) {
    for (const auto& [split, samples] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
      for (const auto& s : *samples) {
        out << split << ',' << s.task << ',' << s.label;
        for (const double f : s.features) {
          std::snprintf(buf, sizeof buf, "%.17g", f);
          out << ',' << buf;
        }
        out << '\n';
      }
    }
  }
}

namespace {

std::size_t header_value(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) throw ValidationError("stream header is missing " + key);
  return std::stoul(line.substr(pos + key.size() + 1));
}

}  // namespace

TaskStream read_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# agile-stream v1") {
    throw ValidationError("not an agile-stream v1 file");
  }
  if (!std::getline(in, line)) throw ValidationError("stream header truncated");
  const std::size_t n_tasks = header_value(line, "tasks");
  const std::size_t per_task = header_value(line, "classes_per_task");
  const std::size_t dim = header_value(line, "input_dim");

  std::vector<TaskDataset> tasks(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) tasks[t].task_id = static_cast<int>(t);

  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string split;
    std::string field;
    std::getline(fields, split, ',');
    Sample s;
    std::getline(fields, field, ',');
    s.task = std::stoi(field);
    std::getline(fields, field, ',');
    s.label = std::stoi(field);
    while (std::getline(fields, field, ',')) s.features.push_back(std::strtod(field.c_str(), nullptr));
    if (s.features.size() != dim || s.task < 0 || static_cast<std::size_t>(s.task) >= n_tasks) {
      throw ValidationError("stream line " + std::to_string(line_no) + ": malformed sample");
    }
    auto& ds = tasks[static_cast<std::size_t>(s.task)];
    if (split == "train") {
      ds.train.push_back(std::move(s));
    } else if (split == "test") {
      ds.test.push_back(std::move(s));
    } else {
      throw ValidationError("stream line " + std::to_string(line_no) + ": unknown split '" + split + "'");
    }
  }
  return TaskStream(per_task, dim, std::move(tasks));
}

// ---- rehearsal buffer ------------------------------------------------------

void reservoir_update(MemoryBuffer& buffer, const Sample& sample, Rng& rng) {
  if (buffer.seen_ < buffer.capacity_) {
    buffer.entries_.push_back(sample);
  } else {
    const std::uint64_t k = rng.between(0, buffer.seen_);
    if (k < buffer.capacity_) buffer.entries_[k] = sample;
  }
  ++buffer.seen_;
}

std::vector<Sample> sample_minibatch(const MemoryBuffer& buffer, std::size_t n, Rng& rng) {
  std::vector<Sample> out;
  if (n == 0) return out;
  if (buffer.empty()) throw EmptyBufferError("cannot sample a minibatch from an empty buffer");
  out.reserve(n);
  const auto entries = buffer.entries();
  for (std::size_t i = 0; i < n; ++i) out.push_back(entries[rng.below(entries.size())]);
  return out;
}

std::vector<std::vector<std::size_t>> task_batches(const TaskDataset& ds, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ArgumentError("batch size must be positive");
  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch make_batch(std::span<const Sample> samples) {
  Batch batch;
  const std::size_t dim = samples.empty() ? 0 : samples.front().features.size();
  std::vector<double> values;
  values.reserve(samples.size() * dim);
  for (const auto& s : samples) {
    if (s.features.size() != dim) throw DimensionError("make_batch: ragged feature widths");
    values.insert(values.end(), s.features.begin(), s.features.end());
    batch.labels.push_back(s.label);
    batch.tasks.push_back(s.task);
  }
  batch.inputs = Tensor(Shape{samples.size(), dim}, std::move(values));
  return batch;
}

Batch make_batch(std::span<const Sample> pool, std::span<const std::size_t> indices) {
  Batch batch;
  const std::size_t dim = pool.empty() ? 0 : pool.front().features.size();
  std::vector<double> values;
  values.reserve(indices.size() * dim);
  for (const std::size_t i : indices) {
    const auto& s = pool[i];
    values.insert(values.end(), s.features.begin(), s.features.end());
    batch.labels.push_back(s.label);
    batch.tasks.push_back(s.task);
  }
  batch.inputs = Tensor(Shape{indices.size(), dim}, std::move(values));
  return batch;
}

}  // namespace agile
