#include "agile/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "agile/errors.hpp"

namespace agile {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad{false};
  std::uint64_t id{0};
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr node) { return Tensor(std::move(node)); }
};

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool recording_enabled = true;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(value);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

// Creates the result tensor and, when any input needs gradients, records it.
Tensor record(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> backward_fn) {
  auto node = make_node(shape, std::move(value));
  if (recording_enabled) {
    bool any = false;
    for (const Tensor* in : inputs) any = any || in->requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Tensor* in : inputs) node->inputs.push_back(TensorAccess::node(*in));
      node->backward = std::move(backward_fn);
    }
  }
  return TensorAccess::wrap(std::move(node));
}

Tensor record_many(Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = make_node(shape, std::move(value));
  if (recording_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->inputs.push_back(TensorAccess::node(in));
      node->backward = std::move(backward_fn);
    }
  }
  return TensorAccess::wrap(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input does not take gradients.
std::vector<double>* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return &in.ensure_grad();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_row_vector(const Tensor& a, const Tensor& v, const char* op) {
  if (v.rows() != 1 || v.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) +
                         " row vector, got " + to_string(v.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Row-wise softmax with max subtraction.
std::vector<double> softmax_values(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out;
}

}  // namespace

std::string to_string(Shape shape) {
  return std::to_string(shape.rows) + "x" + std::to_string(shape.cols);
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() : Tensor(0, 0) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : node_(make_node(Shape{rows, cols}, std::vector<double>(rows * cols, fill))) {}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                         std::to_string(shape.size()) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = make_node(shape, std::move(values));
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw DimensionError("from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{n_rows, n_cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1, 1}, {value}); }

Shape Tensor::shape() const noexcept { return node_->shape; }

std::span<const double> Tensor::values() const noexcept { return node_->value; }

std::span<double> Tensor::mutable_values() noexcept { return node_->value; }

double Tensor::operator()(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) {
    throw IndexError("tensor index (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") outside " + to_string(shape()));
  }
  return node_->value[row * cols() + col];
}

double Tensor::item() const {
  if (!is_scalar()) throw ArgumentError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const noexcept { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool enabled) {
  if (!is_leaf()) throw StateError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = enabled;
  if (!enabled) node_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const noexcept { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const noexcept { return node_->grad; }

void Tensor::zero_grad() noexcept { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

std::uint64_t Tensor::id() const noexcept { return node_->id; }

bool Tensor::is_leaf() const noexcept { return !node_->backward; }

Tensor Tensor::clone() const { return Tensor(shape(), node_->value); }

// ---- grad mode ------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }

NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

bool grad_enabled() noexcept { return recording_enabled; }

// ---- tape -----------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
  Tape tape;
  const NodePtr& start = TensorAccess::node(root);
  if (!start->requires_grad) return tape;

  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(start, 0);
  visited.insert(start.get());
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    if (next_input < node->inputs.size()) {
      const NodePtr& in = node->inputs[next_input++];
      if (in->requires_grad && visited.insert(in.get()).second) stack.emplace_back(in, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<std::uint64_t> Tape::node_ids() const {
  std::vector<std::uint64_t> ids;
  ids.reserve(order_.size());
  for (const auto& n : order_) ids.push_back(n->id);
  return ids;
}

bool Tape::is_topological() const {
  std::unordered_map<const Node*, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position[order_[i].get()] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->inputs) {
      if (!in->requires_grad) continue;
      const auto it = position.find(in.get());
      if (it == position.end() || it->second >= i) return false;
    }
  }
  return true;
}

void backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ArgumentError("backward: loss must be a 1x1 scalar, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ArgumentError("backward: loss is not connected to any tensor that requires grad");
  }
  Tape tape = Tape::record(loss);
  // Intermediate gradients are per-call; leaf gradients accumulate across calls.
  for (const auto& node : tape.order_) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  TensorAccess::node(loss)->ensure_grad()[0] += 1.0;
  for (auto it = tape.order_.rbegin(); it != tape.order_.rend(); ++it) {
    Node& node = **it;
    if (node.backward) node.backward(node);
  }
}

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * brow[j];
    }
  }
  return record(Shape{m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = input_grad(self, 0)) {
      // dA = G * B^T, written as row updates over B^T so the inner loop vectorises
      std::vector<double> bt(n * k);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
      }
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        double* garow = ga->data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const double s = grow[j];
          const double* btrow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) garow[p] += s * btrow[p];
        }
      }
    }
    if (auto* gb = input_grad(self, 1)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = av[i * k + p];
          double* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return record(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return record(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return record(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  require_row_vector(a, v, "add_row");
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto vv = v.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += vv[c];
  }
  return record(a.shape(), std::move(out), {&a, &v}, [rows, cols](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c];
      }
    }
  });
}

Tensor broadcast_mul(const Tensor& a, const Tensor& v) {
  require_row_vector(a, v, "broadcast_mul");
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto vv = v.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= vv[c];
  }
  return record(a.shape(), std::move(out), {&a, &v}, [rows, cols](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += self.grad[r * cols + c] * vv[c];
      }
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c] * av[r * cols + c];
      }
    }
  });
}

Tensor ewise_mul(const Tensor& a, const Tensor& c) {
  require_same_shape(a, c, "ewise_mul");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto cv = c.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= cv[i];
  return record(a.shape(), std::move(out), {&a, &c}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& cv = self.inputs[1]->value;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * cv[i];
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
  auto result = record(a.shape(), std::move(out), {&a}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& s = self.value;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s[i] * (1.0 - s[i]);
    }
  });
  return result;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return record(a.shape(), std::move(out), {&a}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& x = self.inputs[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (x[i] > 0.0) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  if (a.cols() == 0) throw DimensionError("softmax_rows: needs at least one column");
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  auto out = softmax_values(a.values(), rows, cols);
  return record(a.shape(), std::move(out), {&a}, [rows, cols](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& s = self.value;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* sr = s.data() + r * cols;
        const double* gr = self.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * sr[c];
        for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += sr[c] * (gr[c] - dot);
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  if (rows == 0) throw ArgumentError("cross_entropy: empty batch");
  for (const int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= cols) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(cols) + ")");
    }
  }
  const auto x = logits.values();
  std::vector<double> probs(x.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(in[c] - mx);
      z += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= z;
    total += std::log(z) + mx - in[targets[r]];
  }
  std::vector<int> saved(targets.begin(), targets.end());
  return record(Shape{1, 1}, {total / static_cast<double>(rows)}, {&logits},
                [rows, cols, probs = std::move(probs), saved = std::move(saved)](Node& self) {
                  if (auto* g = input_grad(self, 0)) {
                    const double upstream = self.grad[0] / static_cast<double>(rows);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double onehot = static_cast<int>(c) == saved[r] ? 1.0 : 0.0;
                        (*g)[r * cols + c] += upstream * (probs[r * cols + c] - onehot);
                      }
                    }
                  }
                });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: empty list");
  const std::size_t rows = parts.front().rows();
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const auto pv = p.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * p.cols(), p.cols(), out.data() + r * total + offset);
    }
    offset += p.cols();
  }
  return record_many(Shape{rows, total}, std::move(out), parts,
                     [rows, total, widths = std::move(widths)](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         const std::size_t w = widths[k];
                         if (auto* g = input_grad(self, k)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < w; ++c) {
                               (*g)[r * w + c] += self.grad[r * total + offset + c];
                             }
                           }
                         }
                         offset += w;
                       }
                     });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + to_string(a.shape()));
  }
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * cols + begin, width, out.data() + r * width);
  }
  return record(Shape{rows, width}, std::move(out), {&a}, [rows, cols, begin, width](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) (*g)[r * cols + begin + c] += self.grad[r * width + c];
      }
    }
  });
}

Tensor stop_gradient(const Tensor& a) { return a.clone(); }

Tensor l1_row_distance(const Tensor& a, const Tensor& c) {
  require_same_shape(a, c, "l1_row_distance");
  if (a.rows() == 0) throw ArgumentError("l1_row_distance: empty batch");
  const auto av = a.values();
  const auto cv = c.values();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += std::abs(av[i] - cv[i]);
  const auto rows = static_cast<double>(a.rows());
  return record(Shape{1, 1}, {total / rows}, {&a, &c}, [rows](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& cv = self.inputs[1]->value;
    const double upstream = self.grad[0] / rows;
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += upstream * sign(av[i] - cv[i]);
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= upstream * sign(av[i] - cv[i]);
    }
  });
}

Tensor squared_row_distance(const Tensor& a, const Tensor& c) {
  require_same_shape(a, c, "squared_row_distance");
  if (a.rows() == 0) throw ArgumentError("squared_row_distance: empty batch");
  const auto av = a.values();
  const auto cv = c.values();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += (av[i] - cv[i]) * (av[i] - cv[i]);
  const auto rows = static_cast<double>(a.rows());
  return record(Shape{1, 1}, {total / rows}, {&a, &c}, [rows](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& cv = self.inputs[1]->value;
    const double upstream = 2.0 * self.grad[0] / rows;
    if (auto* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += upstream * (av[i] - cv[i]);
    }
    if (auto* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= upstream * (av[i] - cv[i]);
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (const double v : a.values()) total += v;
  return record(Shape{1, 1}, {total}, {&a}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

// ---- parameters -----------------------------------------------------------

Parameter::Parameter(std::string name_, Tensor value_) : name(std::move(name_)), value(std::move(value_)) {
  value.set_requires_grad(true);
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  if (!(lr > 0.0)) throw ArgumentError("sgd_step: learning rate must be positive");
  for (Parameter* p : params) {
    if (!p->frozen && p->value.has_grad()) {
      auto values = p->value.mutable_values();
      const auto grad = p->value.grad();
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
    }
    p->value.zero_grad();
  }
}

}  // namespace agile
