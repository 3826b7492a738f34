#include <benchmark/benchmark.h>

#include "natlab/decode.hpp"
#include "natlab/trainer.hpp"

using namespace natlab;

namespace {

RunConfig bench_config() {
  RunConfig cfg;
  cfg.model.vocab_size = 38;
  cfg.model.n_max = 16;
  cfg.train.tokens_per_batch = 1024;
  return cfg;
}

std::vector<SentencePair> bench_pairs(int n, int max_len, uint64_t seed) {
  Rng rng(seed);
  std::vector<SentencePair> pairs;
  for (int i = 0; i < n; ++i) {
    const int len = 1 + static_cast<int>(rng.below(max_len));
    SentencePair p;
    p.source_ids.push_back(LEN_ID);
    for (int j = 0; j < len; ++j) {
      const auto tok = static_cast<int32_t>(NUM_RESERVED + rng.below(32));
      p.source_ids.push_back(tok);
      p.target_ids.push_back(tok);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

static void BM_train_step(benchmark::State& state) {
  RunConfig cfg = bench_config();
  auto pairs = bench_pairs(160, 12, 7);
  TrainState<float> ts;
  ts.seed = 1;
  ts.online = init_params<float>(cfg.model, Rng(1).fork(stream_tag::kInit));
  ts.average = init_average(ts.online);
  ts.adam = init_adam(ts.online);
  std::vector<int> all(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) all[i] = static_cast<int>(i);
  auto batch = make_train_batch(pairs, all, Rng(1).fork(stream_tag::kMask, 1));
  for (auto _ : state) {
    auto b = train_step(ts, batch, cfg);
    benchmark::DoNotOptimize(b.total);
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

static void BM_mask_predict(benchmark::State& state) {
  RunConfig cfg = bench_config();
  auto params = init_params<float>(cfg.model, Rng(3).fork(stream_tag::kInit));
  DecodeSession<float> session(params, cfg.model);
  auto pairs = bench_pairs(1, 12, 11);
  DecodeConfig dcfg;
  dcfg.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto hyp = session.translate(pairs[0].source_ids, dcfg);
    benchmark::DoNotOptimize(hyp.score);
  }
}
BENCHMARK(BM_mask_predict)->Arg(1)->Arg(4)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
