#include <benchmark/benchmark.h>

#include "natlab/rng.hpp"
#include "natlab/tape.hpp"

using namespace natlab;

namespace {

template <class T>
TensorData<T> random_tensor(Shape shape, Rng& rng) {
  TensorData<T> t(std::move(shape));
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

}  // namespace

static void BM_matmul_f32(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tape<float> tape(false);
  auto a = tape.constant(random_tensor<float>({n, n}, rng));
  auto b = tape.constant(random_tensor<float>({n, n}, rng));
  for (auto _ : state) {
    auto c = matmul(tape, a, b);
    benchmark::DoNotOptimize(c->value.data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_matmul_f32)->Arg(64)->Arg(256)->Arg(512);

static void BM_log_softmax_f32(benchmark::State& state) {
  Rng rng(2);
  Tape<float> tape(false);
  auto x = tape.constant(random_tensor<float>({2048, 64}, rng));
  for (auto _ : state) {
    auto y = log_softmax(tape, x, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_log_softmax_f32);

static void BM_backward_mlp(benchmark::State& state) {
  Rng rng(3);
  TensorData<float> w1 = random_tensor<float>({64, 256}, rng);
  TensorData<float> w2 = random_tensor<float>({256, 64}, rng);
  TensorData<float> x = random_tensor<float>({512, 64}, rng);
  for (auto _ : state) {
    Tape<float> tape(true);
    auto xw = tape.leaf(x, false);
    auto a = tape.leaf(w1, true);
    auto b = tape.leaf(w2, true);
    auto h = gelu(tape, matmul(tape, xw, a));
    auto loss = sum_all(tape, matmul(tape, h, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a->grad.data());
  }
}
BENCHMARK(BM_backward_mlp);
