#include <benchmark/benchmark.h>

#include "roar/dataset_io.hpp"
#include "roar/estimators.hpp"
#include "roar/model.hpp"
#include "roar/pipeline.hpp"
#include "roar/rng.hpp"
#include "roar/train.hpp"

using namespace roar;

namespace {

Tensor random_input(std::size_t n, Rng& rng) {
  Tensor x({n});
  for (double& v : x.data()) v = rng.normal();
  return x;
}

void BM_InputGradient(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Model m = Model::mlp(784, {width, width}, 10, rng);
  const Tensor x = random_input(784, rng);
  for (auto _ : state) benchmark::DoNotOptimize(input_gradient(m, x, {3}));
}
BENCHMARK(BM_InputGradient)->Arg(32)->Arg(128);

void BM_SmoothGradIG(benchmark::State& state) {
  Rng rng(2);
  const Model m = Model::mlp(144, {64}, 2, rng);
  const Tensor x = random_input(144, rng);
  const EnsembleConfig cfg{15, 0.15, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ensemble(BaseMethod::IntegratedGradients, EnsembleMode::SmoothGrad, m, x, {1}, cfg));
  }
}
BENCHMARK(BM_SmoothGradIG);

void BM_ModifySample(benchmark::State& state) {
  Rng rng(3);
  const ImageShape shape{28, 28, 3};
  Tensor x({shape.size()});
  for (double& v : x.data()) v = rng.uniform();
  const Ranking r = rank_features(control_random(shape.sample_shape(), 4), Granularity::Pixel);
  const ModificationSpec spec{0.5, ModificationMode::Roar, {0.1, 0.2, 0.3}};
  for (auto _ : state) {
    Tensor y = x;
    modify_sample_in_place(y.data(), r, spec);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_ModifySample);

void BM_TrainSteps(benchmark::State& state) {
  BarsConfig bars;
  bars.n_train = 512;
  bars.n_test = 64;
  const SplitDataset data = generate_bars(bars);
  const TrainConfig tc{0.1, static_cast<std::size_t>(state.range(0)), 32, 0, LossKind::SoftmaxCrossEntropy};
  for (auto _ : state) benchmark::DoNotOptimize(train(MlpSpec{{64}}, data, tc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainSteps)->Arg(100);

}  // namespace
BENCHMARK_MAIN();
