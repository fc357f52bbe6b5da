#include <benchmark/benchmark.h>

#include "sparseswin/ops.hpp"

using namespace sparseswin;

static void BM_Matmul(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    Rng rng(1);
    auto a = Tensor<float>::randn({n, n}, rng);
    auto b = Tensor<float>::randn({n, n}, rng);
    for (auto _ : state) {
        auto c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_Conv2d(benchmark::State& state) {
    Rng rng(2);
    auto x = Tensor<float>::randn({1, 32, 28, 28}, rng);
    auto w = Tensor<float>::randn({64, 32, 3, 3}, rng);
    auto b = Tensor<float>::randn({64}, rng);
    for (auto _ : state) {
        auto y = conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_Conv2d);

static void BM_Softmax(benchmark::State& state) {
    Rng rng(3);
    auto x = Tensor<float>::randn({64, 16, 49, 49}, rng);
    for (auto _ : state) {
        auto y = softmax(x, -1);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_Softmax);

static void BM_LayerNorm(benchmark::State& state) {
    Rng rng(4);
    auto x = Tensor<float>::randn({64, 49, 96}, rng);
    auto gain = Tensor<float>::full({96}, 1.0f);
    auto bias = Tensor<float>::zeros({96});
    for (auto _ : state) {
        auto y = layer_norm(x, gain, bias, 1e-5f);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_LayerNorm);

static void BM_MatmulBackward(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    Rng rng(5);
    auto a = Tensor<float>::randn({n, n}, rng).set_requires_grad(true);
    auto b = Tensor<float>::randn({n, n}, rng).set_requires_grad(true);
    for (auto _ : state) {
        Graph<float> graph;
        Graph<float>::Scope scope(graph);
        auto loss = sum_all(matmul(a, b));
        graph.backward(loss);
        benchmark::DoNotOptimize(a.grad().data());
        a.drop_grad();
        b.drop_grad();
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
