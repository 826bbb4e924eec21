#include <benchmark/benchmark.h>

#include "postnet/metrics.hpp"
#include "postnet/rng.hpp"

using namespace postnet;

static void BM_AucPr(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3);
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        scores[static_cast<std::size_t>(i)] = rng.normal();
        labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 1 : 0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(auc_pr(scores, labels));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AucPr)->Arg(1000)->Arg(100000);

static void BM_Brier(benchmark::State& state) {
    const int n = 10000, k = 10;
    Rng rng(5);
    Array prob({n, k});
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            prob.at(i, c) = rng.uniform() + 0.01;
            sum += prob.at(i, c);
        }
        for (int c = 0; c < k; ++c) prob.at(i, c) /= sum;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(k));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(brier(prob, labels));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Brier);
