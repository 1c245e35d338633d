#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "topopack/attention.hpp"
#include "topopack/grid.hpp"
#include "topopack/topomask.hpp"

using namespace topopack;

namespace {

struct Workload {
    PackLayout layout;
    TopoMaskDescriptor desc;
    Matrix q, k, v;
    double scl;
};

Workload make_workload(int M, int k, int d) {
    Workload w;
    w.layout = build_layout(k, M * k, k);
    w.desc = build_descriptor(w.layout);
    std::mt19937_64 rng(42);
    w.q = Matrix::randn(w.layout.seq_len, d, 1.0, rng);
    w.k = Matrix::randn(w.layout.seq_len, d, 1.0, rng);
    w.v = Matrix::randn(w.layout.seq_len, d, 1.0, rng);
    w.scl = 1.0 / std::sqrt(static_cast<double>(d));
    return w;
}

void BM_SparseAttention(benchmark::State& state) {
    const Workload w = make_workload(static_cast<int>(state.range(0)), 3, 16);
    for (auto _ : state)
        benchmark::DoNotOptimize(sparse_attention(w.q, w.k, w.v, w.desc, w.scl));
    state.counters["N"] = static_cast<double>(w.layout.seq_len);
    state.counters["allowed"] = static_cast<double>(allowed_count(w.layout.packs, w.layout.k));
}

void BM_DenseAttention(benchmark::State& state) {
    const Workload w = make_workload(static_cast<int>(state.range(0)), 3, 16);
    for (auto _ : state)
        benchmark::DoNotOptimize(dense_oracle_attention(w.q, w.k, w.v, w.desc, w.scl));
    state.counters["N"] = static_cast<double>(w.layout.seq_len);
    state.counters["dense"] =
        static_cast<double>(w.layout.seq_len) * static_cast<double>(w.layout.seq_len);
}

void BM_BuildDescriptor(benchmark::State& state) {
    const PackLayout layout = build_layout(3, static_cast<int>(state.range(0)) * 3, 3);
    for (auto _ : state) benchmark::DoNotOptimize(build_descriptor(layout));
}

}  // namespace

BENCHMARK(BM_SparseAttention)->Arg(16)->Arg(64)->Arg(256)->Arg(1000);
BENCHMARK(BM_DenseAttention)->Arg(16)->Arg(64)->Arg(256)->Arg(1000);
BENCHMARK(BM_BuildDescriptor)->Arg(64)->Arg(1000);

BENCHMARK_MAIN();
