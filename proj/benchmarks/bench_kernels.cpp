#include <benchmark/benchmark.h>

#include "strel/backbone.hpp"
#include "strel/heads.hpp"
#include "strel/ops.hpp"
#include "strel/rng.hpp"

using namespace strel;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::matmul(a, b).data().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv3d(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor({3, 4, 32, 32}, rng);
  Tensor w = random_tensor({16, 3, 3, 3, 3}, rng);
  Tensor b = Tensor::zeros({16});
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv3d(x, w, b, 1, 2, 1, 1).data().data());
  }
}
BENCHMARK(BM_Conv3d);

void BM_Conv3dBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor({3, 4, 32, 32}, rng);
  Tensor w = random_tensor({16, 3, 3, 3, 3}, rng, true);
  Tensor b = Tensor::zeros({16}, true);
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    backward(ops::mean_all(ops::conv3d(x, w, b, 1, 2, 1, 1)));
  }
}
BENCHMARK(BM_Conv3dBackward);

void BM_RoiAlign(benchmark::State& state) {
  Rng rng(3);
  FeatureMap fmap{random_tensor({64, 4, 8, 8}, rng), 4, 1};
  Box2D box{0.1, 0.2, 0.6, 0.8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(roi_align_3d(fmap, box, 7, 7, 2).values.data().data());
  }
}
BENCHMARK(BM_RoiAlign);

void BM_EncoderBlock(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  ParamStore store;
  Rng rng(4);
  HeadConfig cfg;
  RelationHead head(cfg, 64, 4, store, "head", rng);
  Tensor x = random_tensor({tokens, 64}, rng);
  std::vector<int> sources(tokens, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        encoder_block(TokenSequence{x, sources}, head.encoder_params()).tokens.data().data());
  }
}
BENCHMARK(BM_EncoderBlock)->Arg(4)->Arg(16)->Arg(64);

void BM_SoftmaxLast(benchmark::State& state) {
  Rng rng(5);
  Tensor x = random_tensor({64, 64}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::softmax_last(x).data().data());
  }
}
BENCHMARK(BM_SoftmaxLast);

}  // namespace

BENCHMARK_MAIN();
