// Serial reference vs OpenMP kernels on training-shaped workloads.

#include <benchmark/benchmark.h>

#include "segda/kernels.hpp"
#include "segda/rng.hpp"

using namespace segda;

namespace {

kern::ConvShape shape_for(std::int64_t hw, std::int64_t c) {
    kern::ConvShape s;
    s.n = 4;
    s.ci = c;
    s.co = c;
    s.h = hw;
    s.w = hw;
    s.kh = s.kw = 3;
    s.stride = 1;
    s.pad = 1;
    return s;
}

Tensor<float> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor<float> t(std::move(shape));
    Rng rng(seed);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.next_normal());
    return t;
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({64, 8})->Args({64, 16})->Args({128, 16})->Unit(benchmark::kMillisecond);
}

template <typename Fwd>
void bench_forward(benchmark::State& state, Fwd fwd) {
    const kern::ConvShape s = shape_for(state.range(0), state.range(1));
    const auto x = random_tensor({(std::size_t)s.n, (std::size_t)s.ci, (std::size_t)s.h,
                                  (std::size_t)s.w}, 1);
    const auto w = random_tensor({(std::size_t)s.co, (std::size_t)s.ci, 3, 3}, 2);
    Tensor<float> y({(std::size_t)s.n, (std::size_t)s.co, (std::size_t)s.ho(),
                     (std::size_t)s.wo()});
    for (auto _ : state) {
        fwd(x.data(), w.data(), nullptr, y.data(), s);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * s.n * s.co * s.ci * s.ho() * s.wo() * 9);
}

template <typename Bwd>
void bench_backward_params(benchmark::State& state, Bwd bwd) {
    const kern::ConvShape s = shape_for(state.range(0), state.range(1));
    const auto x = random_tensor({(std::size_t)s.n, (std::size_t)s.ci, (std::size_t)s.h,
                                  (std::size_t)s.w}, 1);
    const auto dy = random_tensor({(std::size_t)s.n, (std::size_t)s.co, (std::size_t)s.ho(),
                                   (std::size_t)s.wo()}, 3);
    Tensor<float> dw({(std::size_t)s.co, (std::size_t)s.ci, 3, 3});
    for (auto _ : state) {
        bwd(x.data(), dy.data(), dw.data(), (float*)nullptr, s);
        benchmark::DoNotOptimize(dw.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * s.n * s.co * s.ci * s.ho() * s.wo() * 9);
}

void BM_conv_forward_serial(benchmark::State& state) {
    bench_forward(state, kern::serial::conv2d_forward<float>);
}
void BM_conv_forward_parallel(benchmark::State& state) {
    bench_forward(state, kern::par::conv2d_forward<float>);
}
void BM_conv_dw_serial(benchmark::State& state) {
    bench_backward_params(state, kern::serial::conv2d_backward_params<float>);
}
void BM_conv_dw_parallel(benchmark::State& state) {
    bench_backward_params(state, kern::par::conv2d_backward_params<float>);
}

BENCHMARK(BM_conv_forward_serial)->Apply(conv_args);
BENCHMARK(BM_conv_forward_parallel)->Apply(conv_args);
BENCHMARK(BM_conv_dw_serial)->Apply(conv_args);
BENCHMARK(BM_conv_dw_parallel)->Apply(conv_args);

} // namespace

BENCHMARK_MAIN();
