#include <benchmark/benchmark.h>

#include "sgadv/attacks.hpp"
#include "sgadv/embedding.hpp"
#include "sgadv/metrics.hpp"
#include "sgadv/rng.hpp"

using namespace sgadv;

namespace {

Image random_image(ImageDims dims, Rng& rng) {
  std::vector<double> px(dims.size());
  for (auto& p : px) p = rng.uniform01();
  return Image(dims, std::move(px));
}

ImageDims square(int side) { return {side, side, 1}; }

void BM_Embed(benchmark::State& state) {
  const auto dims = square(static_cast<int>(state.range(0)));
  const ReferenceEmbedder model(dims, 16, 1);
  Rng rng(2);
  const Image x = random_image(dims, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.embed(x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Embed)->Arg(32)->Arg(96)->Arg(160);

void BM_InputGradient(benchmark::State& state) {
  const auto dims = square(static_cast<int>(state.range(0)));
  const ReferenceEmbedder model(dims, 16, 1);
  Rng rng(3);
  const Image x = random_image(dims, rng);
  const Image y = random_image(dims, rng);
  const auto cograd = sgadv_loss_cograd(model.embed(x), model.embed(y));
  for (auto _ : state) benchmark::DoNotOptimize(model.input_gradient(x, cograd));
}
BENCHMARK(BM_InputGradient)->Arg(32)->Arg(96)->Arg(160);

void BM_SgadvAttack(benchmark::State& state) {
  const auto dims = square(static_cast<int>(state.range(0)));
  const ReferenceEmbedder model(dims, 16, 1);
  Rng rng(4);
  const Image source = random_image(dims, rng);
  const Image target = random_image(dims, rng);
  AttackConfig cfg = AttackConfig::sgadv_defaults();
  cfg.seed = 5;
  int steps = 0;
  for (auto _ : state) {
    const auto r = sgadv_attack(model, source, target, cfg);
    steps += r.steps_taken;
    benchmark::DoNotOptimize(r.final_dissimilarity);
  }
  state.counters["steps"] = benchmark::Counter(steps, benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_SgadvAttack)->Arg(32)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_PgdAttack(benchmark::State& state) {
  const auto dims = square(96);
  const ReferenceEmbedder model(dims, 16, 1);
  Rng rng(6);
  const Image source = random_image(dims, rng);
  const Image target = random_image(dims, rng);
  AttackConfig cfg = AttackConfig::pgd_defaults();
  cfg.seed = 7;
  cfg.cbce_tau = 0.05;
  for (auto _ : state) benchmark::DoNotOptimize(pgd_attack(model, source, target, cfg).final_dissimilarity);
}
BENCHMARK(BM_PgdAttack)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageDims dims{side, side, static_cast<int>(state.range(1))};
  Rng rng(8);
  const Image a = random_image(dims, rng);
  const Image b = random_image(dims, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Args({96, 1})->Args({160, 3});

}  // namespace
BENCHMARK_MAIN();
