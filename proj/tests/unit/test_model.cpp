#include <gtest/gtest.h>

#include <cmath>

#include "agile/errors.hpp"
#include "agile/model.hpp"
#include "gradcheck.hpp"

using namespace agile;
using agile::testing::random_tensor;

namespace {

ModelConfig toy_config(std::size_t tasks = 5) {
  ModelConfig c;
  c.input_dim = 4;
  c.hidden_dim = 8;
  c.feature_dim = 6;
  c.embed_dim = 5;
  c.total_tasks = tasks;
  c.classes_per_task = 2;
  return c;
}

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> block(const Tensor& logits, std::size_t task, std::size_t j) {
  std::vector<double> out;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = task * j; c < (task + 1) * j; ++c) out.push_back(logits(r, c));
  }
  return out;
}

}  // namespace

TEST(ProjectionVector, BoundedAndDeterministic) {
  Rng a(5), b(5);
  const auto p = init_projection_vector(64, 3, a);
  const auto q = init_projection_vector(64, 3, b);
  EXPECT_EQ(p.task_id, 3);
  EXPECT_FALSE(p.delta.frozen);
  EXPECT_TRUE(p.delta.value.requires_grad());
  EXPECT_EQ(p.delta.value.shape(), (Shape{1, 64}));
  EXPECT_EQ(copy_values(p.delta.value), copy_values(q.delta.value));
  for (const double v : p.delta.value.values()) {
    EXPECT_GE(v, -2.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(ProjectionVector, TruncatedNormalMoments) {
  Rng rng(11);
  const auto p = init_projection_vector(100000, 0, rng);
  double s = 0.0, s2 = 0.0;
  for (const double v : p.delta.value.values()) {
    ASSERT_GE(v, -2.0);
    ASSERT_LE(v, 2.0);
    s += v;
    s2 += v * v;
  }
  const double n = 100000.0;
  EXPECT_NEAR(s / n, 0.0, 0.02);
  // Variance of N(0,1) truncated to [-2,2]: 1 - 2*2*phi(2)/(2*Phi(2)-1) ~= 0.7737.
  const double phi2 = std::exp(-2.0) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(2.0 / std::sqrt(2.0));
  EXPECT_NEAR(s2 / n, 1.0 - 4.0 * phi2 / mass, 0.02);
}

TEST(Attention, RangesAndZeroDelta) {
  Rng rng(1);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  const Tensor x = random_tensor(7, 4, rng, 3.0);
  const Tensor features = model.backbone.forward(x);
  const auto out = attention_forward(*model.attention, features, model.projections[0]);
  EXPECT_EQ(out.latent.shape(), (Shape{7, 5}));
  EXPECT_EQ(out.importances.shape(), (Shape{7, 6}));
  EXPECT_EQ(out.task_logits.shape(), (Shape{7, 5}));
  for (const double v : out.latent.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (const double v : out.importances.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }

  ProjectionVector zero{Parameter("zero", Tensor(1, 5, 0.0)), 0};
  const auto z = attention_forward(*model.attention, features, zero);
  for (std::size_t r = 1; r < 7; ++r) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(z.importances(r, c), z.importances(0, c));
  }
  const auto bias = model.attention->selector.bias.value;
  for (std::size_t c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(z.importances(0, c), 1.0 / (1.0 + std::exp(-bias(0, c))));

  EXPECT_THROW((void)attention_forward(*model.attention, x, model.projections[0]), DimensionError);
}

TEST(Attention, DistinctDeltasGiveDistinctImportances) {
  Rng rng(2);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  model.add_task(rng);
  const Tensor features = model.backbone.forward(random_tensor(5, 4, rng));
  const auto a = attention_forward(*model.attention, features, model.projections[0]);
  const auto b = attention_forward(*model.attention, features, model.projections[1]);
  EXPECT_GT(l1_row_distance(a.importances, b.importances).item(), 0.0);
}

TEST(Model, ForwardLayout) {
  Rng rng(3);
  AgileModel model(toy_config(), rng);
  EXPECT_EQ(model.current_task(), -1);
  EXPECT_THROW((void)model.forward(Tensor(2, 4)), StateError);
  model.add_task(rng);
  auto out = model.forward(random_tensor(3, 4, rng));
  EXPECT_EQ(out.logits.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.importances.size(), 1u);
  for (int t = 1; t < 5; ++t) model.add_task(rng);
  out = model.forward(random_tensor(3, 4, rng));
  EXPECT_EQ(out.logits.shape(), (Shape{3, 10}));
  EXPECT_EQ(out.importances.size(), 5u);
  EXPECT_EQ(out.task_logits.shape(), (Shape{3, 5}));
  EXPECT_THROW(model.add_task(rng), StateError);
  EXPECT_THROW((void)model.forward(Tensor(2, 3)), DimensionError);
}

TEST(Model, HeadBlockOwnership) {
  Rng rng(4);
  AgileModel model(toy_config(), rng);
  for (int t = 0; t < 3; ++t) model.add_task(rng);
  const Tensor x = random_tensor(6, 4, rng);
  const auto base = model.forward(x).logits;
  // Perturb delta_1 and head 1; blocks 0 and 2 must be bitwise unchanged.
  for (double& v : model.projections[1].delta.value.mutable_values()) v += 0.37;
  for (double& v : model.heads[1].weight.value.mutable_values()) v -= 0.2;
  const auto after = model.forward(x).logits;
  EXPECT_EQ(block(base, 0, 2), block(after, 0, 2));
  EXPECT_EQ(block(base, 2, 2), block(after, 2, 2));
  EXPECT_NE(block(base, 1, 2), block(after, 1, 2));
}

TEST(Model, ExpansionKeepsEmaCongruent) {
  Rng rng(5);
  AgileModel live(toy_config(), rng);
  EmaModel ema(live, 0.999, 0.2);
  for (int t = 0; t < 4; ++t) {
    expand_for_task(live, ema, t, rng);
    EXPECT_TRUE(shape_congruent(live, ema.model()));
    EXPECT_EQ(live.projections.size(), static_cast<std::size_t>(t + 1));
    EXPECT_EQ(copy_values(live.projections.back().delta.value),
              copy_values(ema.model().projections.back().delta.value));
    EXPECT_EQ(copy_values(live.heads.back().weight.value), copy_values(ema.model().heads.back().weight.value));
  }
  EXPECT_EQ(live.output_width(), 8u);
  EXPECT_THROW(expand_for_task(live, ema, 3, rng), StateError);
  EXPECT_THROW(expand_for_task(live, ema, 5, rng), StateError);
}

TEST(Model, FreezeTask) {
  Rng rng(6);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  model.add_task(rng);
  freeze_task(model, 0);
  EXPECT_TRUE(model.projections[0].delta.frozen);
  EXPECT_TRUE(model.heads[0].weight.frozen);
  EXPECT_TRUE(model.heads[0].bias.frozen);
  EXPECT_FALSE(model.projections[1].delta.frozen);
  EXPECT_FALSE(model.attention->encoder.weight.frozen);
  EXPECT_THROW(freeze_task(model, 2), ArgumentError);
  EXPECT_THROW(freeze_task(model, -1), ArgumentError);

  const auto delta0 = copy_values(model.projections[0].delta.value);
  const auto enc = copy_values(model.attention->encoder.weight.value);
  const auto out = model.forward(random_tensor(4, 4, rng));
  backward(cross_entropy(out.logits, std::vector<int>{0, 1, 2, 3}));
  sgd_step(model.parameters(), 0.5);
  EXPECT_EQ(copy_values(model.projections[0].delta.value), delta0);
  EXPECT_NE(copy_values(model.attention->encoder.weight.value), enc);
}

TEST(Model, FrozenBlockStableWhenSharedModulesFixed) {
  Rng rng(7);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  freeze_task(model, 0);
  model.add_task(rng);
  // Freeze the shared modules too: only delta_1 and head 1 may train.
  for (Parameter* p : model.parameters()) {
    if (p->name.rfind("backbone", 0) == 0 || p->name.rfind("attention", 0) == 0) p->frozen = true;
  }
  const Tensor probe = random_tensor(5, 4, rng);
  const auto before = block(model.forward(probe).logits, 0, 2);
  for (int step = 0; step < 20; ++step) {
    const auto out = model.forward(random_tensor(8, 4, rng));
    backward(add(cross_entropy(out.logits, std::vector<int>(8, 3)), cross_entropy(out.task_logits, std::vector<int>(8, 1))));
    sgd_step(model.parameters(), 0.1);
  }
  EXPECT_EQ(block(model.forward(probe).logits, 0, 2), before);
}

TEST(Ema, UpdateArithmetic) {
  Rng rng(8);
  ModelConfig c = toy_config(2);
  AgileModel live(c, rng);
  EmaModel ema(live, 0.999, 0.5);
  expand_for_task(live, ema, 0, rng);
  for (Parameter* p : ema.model().parameters()) {
    for (double& v : p->value.mutable_values()) v = 1.0;
  }
  for (Parameter* p : live.parameters()) {
    for (double& v : p->value.mutable_values()) v = 0.0;
  }
  // gated off: u above the rate
  EXPECT_FALSE(ema_update(ema, live, 0.75));
  for (const Parameter* p : ema.model().parameters()) {
    for (const double v : p->value.values()) EXPECT_EQ(v, 1.0);
  }
  // applied: rate >= u, including equality
  EXPECT_TRUE(ema_update(ema, live, 0.5));
  for (const Parameter* p : ema.model().parameters()) {
    for (const double v : p->value.values()) EXPECT_EQ(v, 0.999);
  }
  // geometric convergence toward a fixed live model
  for (int i = 0; i < 10; ++i) ASSERT_TRUE(ema_update(ema, live, 0.0));
  for (const double v : ema.model().parameters().front()->value.values()) EXPECT_NEAR(v, std::pow(0.999, 11), 1e-15);
}

TEST(Ema, IncongruentModelsAreRejected) {
  Rng rng(9);
  AgileModel live(toy_config(), rng);
  EmaModel ema(live, 0.99, 1.0);
  expand_for_task(live, ema, 0, rng);
  live.add_task(rng);  // bypasses the mirrored expansion
  EXPECT_FALSE(shape_congruent(live, ema.model()));
  EXPECT_THROW(ema_update(ema, live, 0.0), StateError);
}

TEST(Ema, ModelIsNotTrainable) {
  Rng rng(10);
  AgileModel live(toy_config(), rng);
  EmaModel ema(live, 0.99, 1.0);
  expand_for_task(live, ema, 0, rng);
  for (const Parameter* p : ema.model().parameters()) EXPECT_FALSE(p->value.requires_grad()) << p->name;
}

TEST(Predict, ClassAndTaskIl) {
  Rng rng(11);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  const Tensor x = random_tensor(9, 4, rng);
  EXPECT_EQ(predict(model, x, PredictMode::class_il()), predict(model, x, PredictMode::task_il(0)));
  model.add_task(rng);
  model.add_task(rng);
  const auto cil = predict(model, x, PredictMode::class_il());
  const auto til = predict(model, x, PredictMode::task_il(2));
  for (const int c : cil) {
    EXPECT_GE(c, 0);
    EXPECT_LT(c, 6);
  }
  for (const int c : til) EXPECT_TRUE(c == 4 || c == 5);
  EXPECT_THROW((void)predict(model, x, PredictMode::task_il(3)), ArgumentError);
}

TEST(ParamCount, GrowthPerTask) {
  ModelConfig c = toy_config(20);
  c.embed_dim = 256;
  c.feature_dim = 64;
  Rng rng(12);
  AgileModel model(c, rng);
  model.add_task(rng);
  std::size_t prev = model.param_count().total;
  for (int t = 1; t < 20; ++t) {
    model.add_task(rng);
    const auto counts = model.param_count();
    EXPECT_EQ(counts.total - prev, 386u);  // 256 + 65 * 2
    EXPECT_EQ(counts.projections, static_cast<std::size_t>(t + 1) * 256);
    EXPECT_EQ(counts.total, counts.backbone + counts.attention + counts.projections + counts.heads);
    prev = counts.total;
  }
}

TEST(ParamCount, DeskDimsGrowMarginally) {
  ModelConfig c;  // desk defaults
  c.total_tasks = 20;
  Rng rng(13);
  AgileModel model(c, rng);
  model.add_task(rng);
  const double first = static_cast<double>(model.param_count().total);
  for (int t = 1; t < 20; ++t) model.add_task(rng);
  EXPECT_LT(static_cast<double>(model.param_count().total) / first, 1.1);
}

TEST(Model, CloneIsDeep) {
  Rng rng(14);
  AgileModel model(toy_config(), rng);
  model.add_task(rng);
  AgileModel copy = model.clone();
  const Tensor x = random_tensor(3, 4, rng);
  EXPECT_EQ(copy_values(copy.forward(x).logits), copy_values(model.forward(x).logits));
  for (double& v : copy.backbone.hidden.weight.value.mutable_values()) v = 0.0;
  EXPECT_NE(copy_values(copy.forward(x).logits), copy_values(model.forward(x).logits));
}

TEST(Model, AblatedArchitectures) {
  Rng rng(15);
  ModelConfig c = toy_config(3);
  c.use_attention = false;
  AgileModel expanding(c, rng);
  expanding.add_task(rng);
  expanding.add_task(rng);
  auto out = expanding.forward(random_tensor(2, 4, rng));
  EXPECT_EQ(out.logits.cols(), 4u);
  EXPECT_TRUE(out.importances.empty());
  EXPECT_EQ(out.task_logits.size(), 0u);
  EXPECT_TRUE(expanding.projections.empty());

  c.use_expanding_head = false;
  AgileModel single(c, rng);
  single.add_task(rng);
  EXPECT_EQ(single.forward(random_tensor(2, 4, rng)).logits.cols(), 2u);
  single.add_task(rng);
  EXPECT_EQ(single.forward(random_tensor(2, 4, rng)).logits.cols(), 4u);
  EXPECT_EQ(single.heads.size(), 1u);

  ModelConfig bad = toy_config();
  bad.use_expanding_head = false;
  EXPECT_THROW(AgileModel(bad, rng), ArgumentError);
}
