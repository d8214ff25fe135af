#pragma once

// Dense rank-2 tensors of doubles with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same values and the same node
// in the computation graph. Operations on tensors that require gradients record
// themselves (inputs plus a backward closure) on the result; backward() orders
// every reachable node topologically into a Tape and replays it in reverse.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace agile {

struct Shape {
  std::size_t rows{0};
  std::size_t cols{0};

  [[nodiscard]] std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value);

  [[nodiscard]] Shape shape() const noexcept;
  [[nodiscard]] std::size_t rows() const noexcept { return shape().rows; }
  [[nodiscard]] std::size_t cols() const noexcept { return shape().cols; }
  [[nodiscard]] std::size_t size() const noexcept { return shape().size(); }
  [[nodiscard]] bool is_scalar() const noexcept { return rows() == 1 && cols() == 1; }

  [[nodiscard]] std::span<const double> values() const noexcept;
  // In-place writes are not recorded on the tape; use only on leaves.
  [[nodiscard]] std::span<double> mutable_values() noexcept;
  [[nodiscard]] double operator()(std::size_t row, std::size_t col) const;
  // Value of a 1x1 tensor.
  [[nodiscard]] double item() const;

  [[nodiscard]] bool requires_grad() const noexcept;
  Tensor& set_requires_grad(bool enabled);
  [[nodiscard]] bool has_grad() const noexcept;
  // Empty span when no gradient has been accumulated yet.
  [[nodiscard]] std::span<const double> grad() const noexcept;
  void zero_grad() noexcept;

  [[nodiscard]] std::uint64_t id() const noexcept;
  // True when the tensor was not produced by a recorded operation.
  [[nodiscard]] bool is_leaf() const noexcept;
  // Deep copy of the values with no graph attached and requires_grad=false.
  [[nodiscard]] Tensor clone() const;

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::Node> node);

  std::shared_ptr<detail::Node> node_;
};

// Disables recording for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled() noexcept;

// Topologically ordered list of the recorded operations reachable from a root.
class Tape {
 public:
  static Tape record(const Tensor& root);

  [[nodiscard]] std::size_t size() const noexcept { return order_.size(); }
  // Node ids in execution order (inputs before the operations that use them).
  [[nodiscard]] std::vector<std::uint64_t> node_ids() const;
  [[nodiscard]] bool is_topological() const;

 private:
  friend void backward(const Tensor& loss);
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// Accumulates d(loss)/d(t) into every reachable tensor t with requires_grad.
void backward(const Tensor& loss);

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Same-shape elementwise sum / difference.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[b x n] + v[1 x n] added to every row.
Tensor add_row(const Tensor& a, const Tensor& v);
// a[b x n] (*) v[1 x n] multiplied into every row.
Tensor broadcast_mul(const Tensor& a, const Tensor& v);
Tensor ewise_mul(const Tensor& a, const Tensor& c);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
// Mean over the batch of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
// Columns [begin, end).
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor stop_gradient(const Tensor& a);
// Mean over rows of sum_j |a_ij - c_ij|.
Tensor l1_row_distance(const Tensor& a, const Tensor& c);
// Mean over rows of sum_j (a_ij - c_ij)^2.
Tensor squared_row_distance(const Tensor& a, const Tensor& c);
// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);

// ---- parameters -----------------------------------------------------------

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  bool frozen{false};
};

// value <- value - lr * grad for every unfrozen parameter, then zeroes all grads.
void sgd_step(std::span<Parameter* const> params, double lr);

}  // namespace agile
