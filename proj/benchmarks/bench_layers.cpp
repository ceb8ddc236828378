#include <benchmark/benchmark.h>

#include <random>

#include "dnetpad/layers.hpp"

namespace {

dnetpad::Tensor random_tensor(dnetpad::Shape shape, unsigned seed) {
    dnetpad::Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Args: batch, in channels, out channels, spatial size, kernel.
void BM_Conv2dForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    const auto f = static_cast<std::size_t>(state.range(2));
    const auto s = static_cast<std::size_t>(state.range(3));
    const auto k = static_cast<std::size_t>(state.range(4));
    const auto x = random_tensor({n, c, s, s}, 1);
    const auto w = random_tensor({f, c, k, k}, 2);
    const dnetpad::Tensor b({f});
    for (auto _ : state) {
        benchmark::DoNotOptimize(dnetpad::conv2d(x, w, b, {1, k / 2}));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * f * c * s * s * k * k));
}
BENCHMARK(BM_Conv2dForward)->Args({20, 32, 8, 32, 3})->Args({20, 24, 32, 32, 1})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    const auto f = static_cast<std::size_t>(state.range(2));
    const auto s = static_cast<std::size_t>(state.range(3));
    const auto k = static_cast<std::size_t>(state.range(4));
    const auto x = random_tensor({n, c, s, s}, 1);
    const auto w = random_tensor({f, c, k, k}, 2);
    const auto g = random_tensor({n, f, s, s}, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dnetpad::conv2d_backward(x, w, g, {1, k / 2}));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * f * c * s * s * k * k));
}
BENCHMARK(BM_Conv2dBackward)->Args({20, 32, 8, 32, 3})->Args({20, 24, 32, 32, 1})->Unit(benchmark::kMillisecond);

} // namespace
