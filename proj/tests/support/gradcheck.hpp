#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "agile/random.hpp"
#include "agile/tensor.hpp"

namespace agile::testing {

struct GradCheck {
  double worst_relative{0.0};  // max over inputs of ||g_a - g_n|| / (||g_a|| + ||g_n||)
  std::string worst_input;
};

// `f` must rebuild its graph from `inputs` on every call.
inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, double h = 1e-3) {
  for (auto& t : inputs) t.set_requires_grad(true);
  for (auto& t : inputs) t.zero_grad();
  backward(f(inputs));

  GradCheck result;
  const NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> analytic(inputs[k].size(), 0.0);
    if (inputs[k].has_grad()) {
      const auto g = inputs[k].grad();
      analytic.assign(g.begin(), g.end());
    }
    std::vector<double> numeric(inputs[k].size());
    auto values = inputs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f(inputs).item();
      values[i] = saved - h;
      const double down = f(inputs).item();
      values[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    // Both gradients vanish: nothing to compare beyond the absolute difference.
    const double rel = denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
    if (rel > result.worst_relative) {
      result.worst_relative = rel;
      result.worst_input = "input " + std::to_string(k);
    }
  }
  return result;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(Shape{rows, cols}, std::move(v));
}

// Entries at least `gap` away from zero, so kinks stay outside the stencil.
inline Tensor away_from_zero(std::size_t rows, std::size_t cols, Rng& rng, double gap = 0.05) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) {
    const double m = gap + std::abs(rng.normal());
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor(Shape{rows, cols}, std::move(v));
}

}  // namespace agile::testing
