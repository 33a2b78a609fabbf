// Serial reference kernels against the OpenMP production kernels.

#include "lps/operators.hpp"
#include "lps/prox.hpp"
#include "lps/random.hpp"
#include "lps/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace lps;

namespace {

struct Fixture {
    CoilSensitivities sens;
    KSpaceDataset geo;
    Casorati x;
    Eigen::VectorXcd y;

    explicit Fixture(std::size_t n, std::size_t nt = 8, std::size_t spf = 8) {
        sens = synth_sensitivities(4, n, n);
        const std::size_t nspokes = nt * spf, nread = 2 * n;
        std::vector<std::size_t> bins(nspokes);
        for (std::size_t s = 0; s < nspokes; ++s) bins[s] = s / spf;
        geo = KSpaceDataset(4, nspokes, nread, std::vector<Complex>(4 * nspokes * nread),
                            golden_trajectory(nspokes, nread), bins);
        Rng rng(1);
        x = Casorati(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(nt));
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = Complex(rng.normal(), rng.normal());
        y = Eigen::VectorXcd(static_cast<Eigen::Index>(geo.samples().size()));
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = Complex(rng.normal(), rng.normal());
    }
};

void BM_ForwardReference(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    for (auto _ : st) benchmark::DoNotOptimize(reference::forward(A, f.x));
}

void BM_ForwardParallel(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    set_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(A.forward(f.x));
    set_threads(0);
}

void BM_AdjointReference(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    for (auto _ : st) benchmark::DoNotOptimize(reference::adjoint(A, f.y));
}

void BM_AdjointParallel(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    set_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(A.adjoint(f.y));
    set_threads(0);
}

void BM_NormalDirect(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    for (auto _ : st) benchmark::DoNotOptimize(reference::normal(A, f.x));
}

void BM_NormalToeplitz(benchmark::State& st) {
    const Fixture f(static_cast<std::size_t>(st.range(0)));
    const EncodingOperator A(f.sens, f.geo);
    const NormalOperator AhA(A);
    set_threads(static_cast<int>(st.range(1)));
    Casorati out;
    for (auto _ : st) {
        AhA.apply(f.x, out);
        benchmark::DoNotOptimize(out.data());
    }
    set_threads(0);
}

void BM_Svd(benchmark::State& st) {
    const auto n = st.range(0);
    Rng rng(2);
    Casorati X(n * n, 32);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = Complex(rng.normal(), rng.normal());
    for (auto _ : st) benchmark::DoNotOptimize(svd(X));
}

} // namespace

BENCHMARK(BM_ForwardReference)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardParallel)->Args({16, 1})->Args({16, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjointReference)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjointParallel)->Args({16, 1})->Args({16, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NormalDirect)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NormalToeplitz)->Args({16, 1})->Args({16, 0})->Args({32, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Svd)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
