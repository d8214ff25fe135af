#pragma once

// Disjoint-class task streams and the reservoir-sampled rehearsal buffer.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "agile/random.hpp"
#include "agile/tensor.hpp"

namespace agile {

struct Sample {
  std::vector<double> features;
  int label{0};  // global class index
  int task{0};

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct StreamConfig {
  std::size_t tasks{5};
  std::size_t classes_per_task{2};
  std::size_t input_dim{16};
  std::size_t train_per_class{500};
  std::size_t test_per_class{100};
  double cluster_spread{1.0};
  double cluster_separation{3.0};
  std::uint64_t seed{0};

  // Throws ArgumentError naming the first invalid field.
  void validate() const;
};

struct TaskDataset {
  int task_id{0};
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Immutable after construction. Class j of task t has global index t*J + j.
class TaskStream {
 public:
  TaskStream(std::size_t classes_per_task, std::size_t input_dim, std::vector<TaskDataset> tasks);

  [[nodiscard]] std::size_t num_tasks() const noexcept { return tasks_.size(); }
  [[nodiscard]] std::size_t classes_per_task() const noexcept { return classes_per_task_; }
  [[nodiscard]] std::size_t num_classes() const noexcept { return tasks_.size() * classes_per_task_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
  [[nodiscard]] const TaskDataset& task(std::size_t t) const;
  [[nodiscard]] std::span<const TaskDataset> tasks() const noexcept { return tasks_; }
  [[nodiscard]] int global_class(std::size_t task, std::size_t local_class) const;

 private:
  std::size_t classes_per_task_;
  std::size_t input_dim_;
  std::vector<TaskDataset> tasks_;
};

// Each class is an isotropic Gaussian; means are uniform in
// [-separation, separation]^d and samples have standard deviation `spread`.
TaskStream make_split_gaussian_stream(const StreamConfig& cfg);

// Line-delimited export: "split,task_id,class,f0,f1,..." after a '#' header.
void write_stream(const TaskStream& stream, std::ostream& out);
TaskStream read_stream(std::istream& in);

class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity) : capacity_(capacity) { entries_.reserve(capacity); }

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] std::uint64_t seen() const noexcept { return seen_; }
  [[nodiscard]] std::span<const Sample> entries() const noexcept { return entries_; }

 private:
  friend void reservoir_update(MemoryBuffer& buffer, const Sample& sample, Rng& rng);

  std::size_t capacity_;
  std::uint64_t seen_{0};
  std::vector<Sample> entries_;
};

void reservoir_update(MemoryBuffer& buffer, const Sample& sample, Rng& rng);

// n entries drawn uniformly with replacement; EmptyBufferError when empty and n > 0.
std::vector<Sample> sample_minibatch(const MemoryBuffer& buffer, std::size_t n, Rng& rng);

// One shuffled epoch over ds.train, as index batches; the last batch may be short.
std::vector<std::vector<std::size_t>> task_batches(const TaskDataset& ds, std::size_t batch_size, Rng& rng);

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<int> tasks;
};

Batch make_batch(std::span<const Sample> samples);
Batch make_batch(std::span<const Sample> pool, std::span<const std::size_t> indices);

}  // namespace agile
