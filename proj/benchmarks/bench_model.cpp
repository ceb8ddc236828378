#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dnetpad/layers.hpp"
#include "dnetpad/model.hpp"

namespace {

dnetpad::Tensor random_batch(std::size_t n, std::size_t s) {
    dnetpad::Tensor t({n, 1, s, s});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

void BM_ModelForward(benchmark::State& state) {
    const auto model = dnetpad::Model::build({}, 1);
    const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 64);
    for (auto _ : state) benchmark::DoNotOptimize(model.scores(batch));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(20)->Unit(benchmark::kMillisecond);

// One SGD step's worth of work for the default config and batch size 20.
void BM_ModelTrainStep(benchmark::State& state) {
    const auto model = dnetpad::Model::build({}, 1);
    const auto batch = random_batch(20, 64);
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    for (auto _ : state) {
        dnetpad::Model::Cache cache;
        const auto logits = model.forward(batch, cache);
        const auto ce = dnetpad::softmax_cross_entropy(logits, labels);
        benchmark::DoNotOptimize(model.backward(cache, ce.grad_logits));
    }
    state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_ModelTrainStep)->Unit(benchmark::kMillisecond);

} // namespace
