#include <benchmark/benchmark.h>

#include <random>

#include "support/testutil.hpp"
#include "support/toy.hpp"
#include "wildgs/ops.hpp"
#include "wildgs/rasterizer.hpp"
#include "wildgs/trainer.hpp"

using namespace wildgs;
using ad::Tape;
using ad::Tensor;

namespace {

void BM_RasterizeForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto scene = testutil::random_scene(static_cast<int>(state.range(0)), 1, rng);
  const Camera cam = testutil::front_camera(64, 64, 60.0);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(rasterize(tape, scene.cloud, scene.sh, scene.degree, cam).color[0]);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RasterizeForward)->Arg(100)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_RasterizeBackward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto scene = testutil::random_scene(static_cast<int>(state.range(0)), 1, rng);
  const Camera cam = testutil::front_camera(64, 64, 60.0);
  for (auto _ : state) {
    Tape tape;
    const RenderOutput out = rasterize(tape, scene.cloud, scene.sh, scene.degree, cam);
    tape.backward(testutil::weighted_sum(tape, out.color));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RasterizeBackward)->Arg(100)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_Conv2d(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const int c = static_cast<int>(state.range(0));
  const Tensor x = testutil::random_tensor({1, c, 64, 64}, rng, -1, 1, true);
  const Tensor w = testutil::random_tensor({c, c, 3, 3}, rng, -1, 1, true);
  const Tensor b = testutil::random_tensor({c}, rng, -1, 1, true);
  for (auto _ : state) {
    Tape tape;
    tape.backward(ad::sum(tape, ad::conv2d(tape, x, w, b, 1, 1)));
  }
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  const testutil::ToyData toy = testutil::tiny_toy(64, 8, 2000, 1);
  TrainConfig cfg;
  cfg.iterations = 1000000;
  cfg.warmup_iters = state.range(0) ? 0 : cfg.iterations - 1;
  cfg.triplane_resolution = 32;
  Trainer trainer(WildGsModel(cfg, toy.points, toy.cameras), toy.views);
  for (auto _ : state) trainer.step();
}
// 0: warm-up stage (no triplane), 1: full pipeline.
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
