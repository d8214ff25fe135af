#include <gtest/gtest.h>

#include "agile/config.hpp"
#include "agile/errors.hpp"

using namespace agile;

namespace {

// Line of the ConfigError raised by `text`, or -1 when it parses.
int error_line(const std::string& text) {
  try {
    (void)parse_config_string(text, "test.ini");
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(Config, DefaultsWhenEmpty) {
  const auto c = parse_config_string("# nothing but a comment\n\n");
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.ema_decay, 0.999);
  EXPECT_EQ(c.train.embed_dim, 64u);
  EXPECT_EQ(c.train.feature_dim, 128u);
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::agile, Method::er, Method::sgd}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0}));
}

TEST(Config, ParsesEverySection) {
  const auto c = parse_config_string(R"(
[stream]
tasks = 4
classes_per_task = 3
cluster_separation = 1.25   # trailing comment
[model]
hidden_dim = 32
embed_dim = 8
[train]
epochs = 7
learning_rate = 0.1
ema_rate = 0.5
use_attention = false
buffer_task_loss = true
[experiment]
methods = er, sgd
seeds = 3, 1, 4
output_dir = out/dir
)");
  EXPECT_EQ(c.stream.tasks, 4u);
  EXPECT_EQ(c.stream.classes_per_task, 3u);
  EXPECT_EQ(c.stream.cluster_separation, 1.25);
  EXPECT_EQ(c.train.hidden_dim, 32u);
  EXPECT_EQ(c.train.embed_dim, 8u);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.learning_rate, 0.1);
  EXPECT_EQ(c.train.ema_rate, 0.5);
  EXPECT_FALSE(c.train.toggles.use_attention);
  EXPECT_TRUE(c.train.buffer_task_loss);
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::er, Method::sgd}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 1, 4}));
  EXPECT_EQ(c.output_dir, "out/dir");
}

TEST(Config, RoundTripIsExact) {
  auto c = parse_config_string("[train]\nlearning_rate = 0.1\nema_decay = 0.995\n[stream]\ncluster_spread = 0.7\n");
  c.train.weights.beta = 1.0 / 3.0;
  const std::string ini = to_ini(c);
  const auto back = parse_config_string(ini);
  EXPECT_EQ(to_ini(back), ini);
  EXPECT_EQ(back.train.weights.beta, 1.0 / 3.0);
  EXPECT_EQ(back.stream.cluster_spread, 0.7);
  // Every key is echoed, so no default is silent.
  for (const char* key : {"tasks", "hidden_dim", "epochs", "ema_rate", "use_consistency", "buffer_task_loss", "seeds"}) {
    EXPECT_NE(ini.find(std::string(key) + " = "), std::string::npos) << key;
  }
}

TEST(Config, LineAnchoredErrors) {
  EXPECT_EQ(error_line("[train]\nepochs = 3\nbogus = 1\n"), 3);
  EXPECT_EQ(error_line("\n[nowhere]\n"), 2);
  EXPECT_EQ(error_line("epochs = 3\n"), 1);
  EXPECT_EQ(error_line("[train]\nepochs 3\n"), 2);
  EXPECT_EQ(error_line("[train]\nepochs = 3\nepochs = 4\n"), 3);
  EXPECT_EQ(error_line("[train]\nepochs = -1\n"), 2);
  EXPECT_EQ(error_line("[train]\nepochs = 0\n"), 2);
  EXPECT_EQ(error_line("[train]\nlearning_rate = abc\n"), 2);
  EXPECT_EQ(error_line("[train]\nuse_ema = maybe\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nmethods = agile, dqn\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nseeds = 1, 1\n"), 2);
  EXPECT_EQ(error_line("[train\n"), 1);

  try {
    (void)parse_config_string("[train]\n\nbogus = 1\n", "exp.ini");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("exp.ini:3: ", 0), 0u) << e.what();
  }
}

TEST(Config, CrossFieldChecks) {
  EXPECT_EQ(error_line("[train]\nuse_ema = false\n"), 2);
  EXPECT_EQ(error_line("[train]\nuse_consistency = false\nuse_ema = false\n"), -1);
  EXPECT_EQ(error_line("[train]\nuse_expanding_head = false\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nmethods =\n"), 2);
  EXPECT_EQ(error_line("[train]\nbuffer_size = 0\n"), 2);
  EXPECT_EQ(error_line("[train]\nbuffer_size = 0\n[experiment]\nmethods = sgd\n"), -1);
  EXPECT_NE(error_line("[stream]\ncluster_spread = 0\n"), -1);
}

TEST(Config, MissingFile) {
  EXPECT_THROW((void)load_config("/nonexistent/dir/x.ini"), ConfigError);
}

TEST(Config, MethodMapping) {
  EXPECT_EQ(parse_method("agile"), Method::agile);
  EXPECT_EQ(to_string(Method::sgd), "sgd");
  EXPECT_THROW((void)parse_method("ewc"), ArgumentError);

  ExperimentConfig c;
  const auto agile_cfg = run_train_config(c, Method::agile, 7);
  EXPECT_EQ(agile_cfg.seed, 7u);
  EXPECT_EQ(agile_cfg.toggles, AblationToggles{});
  const auto er = run_train_config(c, Method::er, 7);
  EXPECT_EQ(er.toggles, AblationToggles::none());
  EXPECT_EQ(er.buffer_size, c.train.buffer_size);
  const auto sgd = run_train_config(c, Method::sgd, 7);
  EXPECT_EQ(sgd.toggles, AblationToggles::none());
  EXPECT_EQ(sgd.buffer_size, 0u);
}
