#pragma once

// Small streams and configs that train in well under a second.

#include <cstdint>

#include "agile/stream.hpp"
#include "agile/train.hpp"

namespace agile::testing {

inline StreamConfig toy_stream_config(std::size_t tasks = 3) {
  StreamConfig s;
  s.tasks = tasks;
  s.classes_per_task = 2;
  s.input_dim = 4;
  s.train_per_class = 24;
  s.test_per_class = 10;
  s.cluster_spread = 0.5;
  s.cluster_separation = 3.0;
  s.seed = 17;
  return s;
}

inline TrainConfig toy_train_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.buffer_size = 20;
  c.hidden_dim = 16;
  c.feature_dim = 8;
  c.embed_dim = 6;
  c.ema_decay = 0.9;
  c.ema_rate = 0.5;
  c.log_every = 1;
  c.seed = seed;
  return c;
}

}  // namespace agile::testing
