#include <random>

#include <benchmark/benchmark.h>

#include "invdec/ad_ops.hpp"
#include "invdec/model.hpp"
#include "invdec/tensor_ops.hpp"

namespace {

using namespace invdec;

Tensor random_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

model::ModelConfig bench_config(std::size_t variates) {
  model::ModelConfig cfg;
  cfg.variates = variates;
  cfg.lookback = 96;
  cfg.horizon = 96;
  cfg.patch_len = 16;
  cfg.stride = 16;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.dec_heads = 4;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.lambda = 1.0;
  return cfg;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_input({n, n}, 1), b = random_input({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128);

void BM_ForwardEval(benchmark::State& state) {
  auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
  RngStreams rng(1);
  auto params = model::init_params(cfg, rng);
  Tensor x = random_input({cfg.lookback, cfg.variates}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model::predict_tensor(x, params, cfg));
}
BENCHMARK(BM_ForwardEval)->Arg(7)->Arg(21)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
  RngStreams rng(1);
  auto params = model::init_params(cfg, rng);
  Tensor x = random_input({8, cfg.lookback, cfg.variates}, 4);
  Tensor y = random_input({8, cfg.horizon, cfg.variates}, 5);
  for (auto _ : state) {
    Tape tape;
    model::ForwardOptions opts{.training = true, .rng = &rng, .record_trace = false};
    auto out = model::forward(tape, x, params, cfg, opts);
    params.store.zero_grads();
    tape.backward(ad::mse(out.prediction, tape.constant(y)));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(7)->Arg(21)->Unit(benchmark::kMillisecond);

void BM_DecodeVariates(benchmark::State& state) {
  auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
  cfg.d_model = 8;
  cfg.heads = cfg.dec_heads = 1;
  RngStreams rng(1);
  auto params = model::init_params(cfg, rng);
  Tensor g = random_input({cfg.variates, cfg.d_model}, 6);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(model::decode_variates(tape.constant(g), params, cfg, {}).h_out);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DecodeVariates)->RangeMultiplier(2)->Range(64, 512)->Complexity();

}  // namespace

BENCHMARK_MAIN();
