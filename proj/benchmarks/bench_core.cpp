#include <benchmark/benchmark.h>

#include "agile/model.hpp"
#include "agile/stream.hpp"
#include "agile/train.hpp"

namespace {

agile::Tensor random_tensor(std::size_t rows, std::size_t cols, agile::Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return agile::Tensor({rows, cols}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  agile::Rng rng(1);
  const auto a = random_tensor(32, n, rng);
  const auto b = random_tensor(n, n, rng);
  const agile::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(agile::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(32 * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(512);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  agile::Rng rng(2);
  agile::Parameter w("w", random_tensor(n, n, rng));
  const auto x = random_tensor(32, n, rng);
  for (auto _ : state) {
    agile::backward(agile::sum(agile::matmul(x, w.value)));
    w.value.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

// One optimisation step at desk dims after all five tasks are installed.
void BM_TrainStep(benchmark::State& state) {
  agile::StreamConfig sc;
  sc.train_per_class = 64;
  sc.test_per_class = 8;
  const auto stream = agile::make_split_gaussian_stream(sc);
  agile::TrainConfig tc;
  tc.evaluate_every_epoch = false;
  tc.toggles.use_attention = state.range(0) != 0;
  tc.toggles.use_expanding_head = state.range(0) != 0;
  agile::Trainer trainer(tc, stream);
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) trainer.begin_task();
  agile::Rng rng(3);
  const auto& ds = stream.task(stream.num_tasks() - 1);
  const auto batches = agile::task_batches(ds, tc.batch_size, rng);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.step(agile::make_batch(ds.train, batches[i % batches.size()])));
    ++i;
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Reservoir(benchmark::State& state) {
  agile::Rng rng(4);
  agile::Sample s{std::vector<double>(16, 0.5), 0, 0};
  for (auto _ : state) {
    agile::MemoryBuffer buf(100);
    for (int i = 0; i < 10000; ++i) agile::reservoir_update(buf, s, rng);
    benchmark::DoNotOptimize(buf.seen());
  }
}
BENCHMARK(BM_Reservoir);

}  // namespace

BENCHMARK_MAIN();
