#pragma once

// Seeded gradient-check sweeps shared by the unit tests and the acceptance run.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agile/model.hpp"
#include "agile/train.hpp"
#include "gradcheck.hpp"

namespace agile::testing {

using NamedCheck = std::pair<std::string, GradCheck>;

// Every differentiable op on random shapes in [1, 8], plus one composition.
inline std::vector<NamedCheck> op_gradient_checks(std::uint64_t seed) {
  Rng rng(seed + 1000);
  auto dim = [&rng] { return 1 + rng.below(8); };
  const std::size_t b = dim();
  const std::size_t k = dim();
  const std::size_t n = dim();
  std::vector<NamedCheck> out;
  auto record = [&out](const char* op, const GradCheck& r) { out.emplace_back(op, r); };

  // Weighted sums keep the upstream gradient non-trivial.
  const Tensor wbn = random_tensor(b, n, rng);
  auto weighted = [&wbn](const Tensor& t) { return sum(ewise_mul(t, wbn)); };

  record("matmul", check_gradients([&](const auto& in) { return weighted(matmul(in[0], in[1])); },
                                   {random_tensor(b, k, rng), random_tensor(k, n, rng)}));
  record("add", check_gradients([&](const auto& in) { return weighted(add(in[0], in[1])); },
                                {random_tensor(b, n, rng), random_tensor(b, n, rng)}));
  record("sub", check_gradients([&](const auto& in) { return weighted(sub(in[0], in[1])); },
                                {random_tensor(b, n, rng), random_tensor(b, n, rng)}));
  record("scale", check_gradients([&](const auto& in) { return weighted(scale(in[0], -1.7)); }, {random_tensor(b, n, rng)}));
  record("add_row", check_gradients([&](const auto& in) { return weighted(add_row(in[0], in[1])); },
                                    {random_tensor(b, n, rng), random_tensor(1, n, rng)}));
  record("broadcast_mul", check_gradients([&](const auto& in) { return weighted(broadcast_mul(in[0], in[1])); },
                                          {random_tensor(b, n, rng), random_tensor(1, n, rng)}));
  record("ewise_mul", check_gradients([&](const auto& in) { return weighted(ewise_mul(in[0], in[1])); },
                                      {random_tensor(b, n, rng), random_tensor(b, n, rng)}));
  record("sigmoid", check_gradients([&](const auto& in) { return weighted(sigmoid(in[0])); }, {random_tensor(b, n, rng, 3.0)}));
  record("relu", check_gradients([&](const auto& in) { return weighted(relu(in[0])); }, {away_from_zero(b, n, rng)}));
  record("softmax_rows",
         check_gradients([&](const auto& in) { return weighted(softmax_rows(in[0])); }, {random_tensor(b, n, rng, 2.0)}));
  std::vector<int> targets(b);
  for (auto& t : targets) t = static_cast<int>(rng.below(n));
  record("cross_entropy",
         check_gradients([&](const auto& in) { return cross_entropy(in[0], targets); }, {random_tensor(b, n, rng, 2.0)}));
  const std::size_t m = dim();
  const Tensor wcat = random_tensor(b, n + m, rng);
  record("concat_cols", check_gradients([&](const auto& in) { return sum(ewise_mul(concat_cols({in[0], in[1]}), wcat)); },
                                        {random_tensor(b, n, rng), random_tensor(b, m, rng)}));
  const std::size_t lo = rng.below(n);
  const std::size_t hi = lo + 1 + rng.below(n - lo);
  const Tensor wslice = random_tensor(b, hi - lo, rng);
  record("slice_cols", check_gradients([&](const auto& in) { return sum(ewise_mul(slice_cols(in[0], lo, hi), wslice)); },
                                       {random_tensor(b, n, rng)}));
  // Differences kept away from zero so the L1 kink is never straddled.
  const Tensor base = random_tensor(b, n, rng);
  const Tensor offset = away_from_zero(b, n, rng);
  record("l1_row_distance", check_gradients([&](const auto& in) { return l1_row_distance(in[0], in[1]); },
                                            {add(base, offset), base.clone()}));
  record("squared_row_distance", check_gradients([&](const auto& in) { return squared_row_distance(in[0], in[1]); },
                                                 {random_tensor(b, n, rng), random_tensor(b, n, rng)}));
  record("sum", check_gradients([&](const auto& in) { return sum(scale(in[0], 0.3)); }, {random_tensor(b, n, rng)}));
  record("composition", check_gradients(
                            [&](const auto& in) {
                              const Tensor h = sigmoid(add_row(matmul(in[0], in[1]), in[2]));
                              return cross_entropy(concat_cols({h, relu(scale(h, 2.0))}), std::vector<int>(b, 0));
                            },
                            {random_tensor(b, k, rng), random_tensor(k, n, rng), random_tensor(1, n, rng)}));
  return out;
}

namespace detail {

// One toy instance of the composite check. Returns false, without checking,
// when some +-h perturbation of a parameter flips the sign of a ReLU
// pre-activation or of a discrepancy component: the central difference would
// then straddle a kink and measure a secant instead of the gradient.
inline bool composite_instance(Rng& rng, const LossWeights& w, double h, GradCheck& result) {
  ModelConfig mc;
  mc.input_dim = 3;
  mc.hidden_dim = 6;
  mc.feature_dim = 5;
  mc.embed_dim = 4;
  mc.total_tasks = 2;
  AgileModel model(mc, rng);
  EmaModel ema(model, 0.9, 1.0);
  expand_for_task(model, ema, 0, rng);
  freeze_task(model, 0);
  expand_for_task(model, ema, 1, rng);
  // Pull the EMA copy away from the live weights so the consistency term is non-zero.
  for (Parameter* p : ema.model().parameters()) {
    for (double& v : p->value.mutable_values()) v += 0.1 * rng.normal();
  }

  const Tensor cur = random_tensor(5, 3, rng);
  const Tensor buf = random_tensor(4, 3, rng);
  std::vector<int> cur_y(5), buf_y(4);
  for (auto& y : cur_y) y = 2 + static_cast<int>(rng.below(2));
  for (auto& y : buf_y) y = static_cast<int>(rng.below(4));
  // Detached quantities are constants of the objective: the EMA logits and the
  // earlier task's importances are evaluated once, at the unperturbed weights.
  Tensor ema_logits, earlier;
  {
    const NoGradGuard no_grad;
    ema_logits = ema.model().forward(buf).logits;
    earlier = model.forward(cur).importances[0].clone();
  }

  auto signs = [&] {
    const NoGradGuard no_grad;
    std::vector<bool> out;
    auto append = [&out](const Tensor& t) {
      for (const double v : t.values()) out.push_back(v > 0.0);
    };
    for (const Tensor* x : {&cur, &buf}) {
      const Tensor pre_hidden = model.backbone.hidden.forward(*x);
      append(pre_hidden);
      append(model.backbone.output.forward(relu(pre_hidden)));
    }
    append(sub(softmax_rows(model.forward(cur).importances[1]), softmax_rows(earlier)));
    return out;
  };
  const auto base = signs();
  for (Parameter* p : model.parameters()) {
    auto values = p->value.mutable_values();
    for (double& v : values) {
      const double saved = v;
      for (const double step : {h, -h}) {
        v = saved + step;
        const bool same = signs() == base;
        v = saved;
        if (!same) return false;
      }
    }
  }

  auto objective = [&](const std::vector<Tensor>&) {
    const auto out = model.forward(cur);
    const auto rep = model.forward(buf);
    const std::vector<Tensor> importances{earlier, out.importances[1]};
    const LossParts parts{er_loss(out.logits, cur_y, &rep.logits, buf_y, w.alpha), cr_loss(rep.logits, ema_logits),
                          tp_loss(out.task_logits, std::vector<int>(5, 1)), pd_loss(importances)};
    return total_loss(parts, w);
  };
  std::vector<Tensor> inputs;
  for (Parameter* p : model.parameters()) inputs.push_back(p->value);
  result = check_gradients(objective, inputs, h);
  return true;
}

}  // namespace detail

// Full weighted objective (rehearsal, consistency, task-id, discrepancy) of a
// two-task model mid-way through its second task, checked against every
// live parameter at once. Instances whose stencil crosses a kink are redrawn.
inline GradCheck composite_loss_check(std::uint64_t seed, const LossWeights& w = LossWeights{}, double h = 1e-3) {
  Rng rng(seed + 5000);
  GradCheck result;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    if (detail::composite_instance(rng, w, h, result)) return result;
  }
  throw std::runtime_error("composite_loss_check: every instance straddles a kink");
}

}  // namespace agile::testing
