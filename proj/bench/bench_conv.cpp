#include <benchmark/benchmark.h>

#include <random>

#include "rekd/ops.hpp"
#include "rekd/parallel.hpp"

using namespace rekd;

namespace {

TensorF filled(Shape shape, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    TensorF t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Args: input channels, output channels, side. Kernel 5, padding 2, the
// shapes of the lifting layer (1 -> G*C) and of a group layer (G*C -> G*C).
void conv_args(benchmark::internal::Benchmark* b)
{
    b->Args({1, 48, 96})->Args({48, 48, 96})->Args({48, 48, 192})->Args({144, 72, 96});
    b->Unit(benchmark::kMillisecond);
}

void set_counters(benchmark::State& state, int cin, int cout, int side)
{
    const double flops = 2.0 * cin * cout * 25.0 * side * side;
    state.counters["FLOP/s"] = benchmark::Counter(flops, benchmark::Counter::kIsIterationInvariantRate,
                                                  benchmark::Counter::kIs1000);
}

void BM_conv2d_reference(benchmark::State& state)
{
    const int cin = int(state.range(0)), cout = int(state.range(1)), side = int(state.range(2));
    const TensorF x = filled({cin, side, side}, 1), k = filled({cout, cin, 5, 5}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_reference(x, k, 2));
    set_counters(state, cin, cout, side);
}

void BM_conv2d_serial(benchmark::State& state)
{
    const int cin = int(state.range(0)), cout = int(state.range(1)), side = int(state.range(2));
    const TensorF x = filled({cin, side, side}, 1), k = filled({cout, cin, 5, 5}, 2);
    parallel::set_deterministic(true);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 2));
    parallel::set_deterministic(false);
    set_counters(state, cin, cout, side);
}

void BM_conv2d_openmp(benchmark::State& state)
{
    const int cin = int(state.range(0)), cout = int(state.range(1)), side = int(state.range(2));
    const TensorF x = filled({cin, side, side}, 1), k = filled({cout, cin, 5, 5}, 2);
    parallel::set_deterministic(false);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 2));
    state.counters["threads"] = parallel::thread_count();
    set_counters(state, cin, cout, side);
}

} // namespace

BENCHMARK(BM_conv2d_reference)->Apply(conv_args);
BENCHMARK(BM_conv2d_serial)->Apply(conv_args);
BENCHMARK(BM_conv2d_openmp)->Apply(conv_args);

BENCHMARK_MAIN();
