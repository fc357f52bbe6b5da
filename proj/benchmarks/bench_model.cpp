#include <benchmark/benchmark.h>

#include "sparseswin/model.hpp"
#include "sparseswin/ops.hpp"

using namespace sparseswin;

static SparseSwinConfig tiny_config() {
    SparseSwinConfig cfg;
    cfg.input_size = 64;
    cfg.patch = 2;
    cfg.stage_dims = {8, 16, 32};
    cfg.stage_depths = {2, 2, 2};
    cfg.stage_heads = {2, 4, 8};
    cfg.window = 4;
    cfg.shift = 2;
    cfg.sparta.t = 16;
    cfg.sparta.e = 32;
    cfg.sparta.heads = 4;
    cfg.sparta.loops = 2;
    cfg.sparta.in_features = 16;
    cfg.num_classes = 4;
    return cfg;
}

static void BM_TinyForward(benchmark::State& state) {
    auto model = build<float>(tiny_config(), 7);
    Rng rng(11);
    auto images = Tensor<float>::randn({1, 3, 64, 64}, rng);
    for (auto _ : state) {
        auto logits = model.forward(images);
        benchmark::DoNotOptimize(logits.data().data());
    }
}
BENCHMARK(BM_TinyForward);

static void BM_TinyForwardBackward(benchmark::State& state) {
    auto model = build<float>(tiny_config(), 7);
    Rng rng(12);
    auto images = Tensor<float>::randn({2, 3, 64, 64}, rng);
    const std::vector<std::int32_t> labels = {0, 1};
    for (auto _ : state) {
        Graph<float> graph;
        Graph<float>::Scope scope(graph);
        auto loss = cross_entropy(model.forward(images), labels);
        graph.backward(loss);
        benchmark::DoNotOptimize(loss.item());
        for (auto& [name, param] : model.params.items()) param.drop_grad();
    }
}
BENCHMARK(BM_TinyForwardBackward);

static void BM_SpartaForward(benchmark::State& state) {
    ParamRegistry<float> reg;
    Rng rng(13);
    SparTaConfig cfg;
    cfg.t = 49;
    cfg.e = 512;
    cfg.heads = 16;
    cfg.loops = 2;
    cfg.in_features = 49;
    auto sparta = make_sparta(reg, "sparta", 768, cfg, rng);
    auto x = Tensor<float>::randn({1, 768, 7, 7}, rng);
    for (auto _ : state) {
        auto out = sparta.forward(x);
        benchmark::DoNotOptimize(out.tokens.data().data());
    }
}
BENCHMARK(BM_SpartaForward);

BENCHMARK_MAIN();
