#include <benchmark/benchmark.h>

#include "styleswap/styleswap.hpp"

using namespace styleswap;

namespace {

void BM_Conv3x3(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto spec = LayerSpec::conv(16, 16);
  const Layer<float> layer{spec, init_params<float>(spec, rng)};
  const auto x = random_uniform<float>({n, n, 16}, -1.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layer_forward(layer, x));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * 16 * 16 * 9));
}
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64)->Arg(128);

void BM_StyleSwapFast(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto c = random_uniform<float>({n, n, 8}, 0.0f, 1.0f, rng);
  const auto s = random_uniform<float>({n, n, 8}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(style_swap(c, s, SwapConfig{}));
}
BENCHMARK(BM_StyleSwapFast)->Arg(8)->Arg(16)->Arg(32);

void BM_StyleSwapBruteForce(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto c = random_uniform<float>({n, n, 8}, 0.0f, 1.0f, rng);
  const auto s = random_uniform<float>({n, n, 8}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_style_swap(c, s, SwapConfig{}));
}
BENCHMARK(BM_StyleSwapBruteForce)->Arg(8)->Arg(16)->Arg(32);

void BM_FeedforwardTiny(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Encoder e = build_tiny();
  const InverseNet net = build_inverse_tiny(e, 16, 3);
  const auto content = synthetic_natural(n, n, rng);
  const auto style = synthetic_painting(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(feedforward_stylize(content, style, e, net, SwapConfig{}));
}
BENCHMARK(BM_FeedforwardTiny)->Arg(32)->Arg(64)->Arg(128);

void BM_StylizeStepTiny(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Encoder e = build_tiny();
  const auto img = synthetic_natural(n, n, rng);
  const auto target = encode_activations(synthetic_painting(n, n, rng), e);
  for (auto _ : state) benchmark::DoNotOptimize(stylize_loss(img, target, e, 1e-6));
}
BENCHMARK(BM_StylizeStepTiny)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
