#include <benchmark/benchmark.h>

#include "postnet/flow.hpp"
#include "postnet/rng.hpp"
#include "postnet/special.hpp"

using namespace postnet;

namespace {

RadialFlowStack make_stack(int h, int length) {
    RadialFlowStack f = init_radial_flow(h, length, 7);
    Rng rng(11);
    for (auto& layer : f.layers) {
        for (double& v : layer.z0.value.v) v = rng.uniform(-1.5, 1.5);
        layer.alpha_raw.value.v[0] = rng.uniform(-0.5, 0.5);
        layer.beta_raw.value.v[0] = rng.uniform(-0.5, 1.5);
    }
    return f;
}

Array make_points(int n, int h) {
    Array z({n, h});
    Rng rng(13);
    for (double& v : z.v) v = rng.normal();
    return z;
}

}  // namespace

static void BM_RadialLogDensityEval(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    RadialFlowStack f = make_stack(6, 6);
    Array z = make_points(b, 6);
    for (auto _ : state) {
        auto lp = radial_log_density_eval(f, z);
        benchmark::DoNotOptimize(lp.data());
    }
    state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_RadialLogDensityEval)->Arg(64)->Arg(1024);

static void BM_RadialLogDensityTape(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    RadialFlowStack f = make_stack(6, 6);
    Array z = make_points(b, 6);
    for (auto _ : state) {
        ag::Tape t;
        ag::Value lp = radial_log_density(t, f, t.input(z));
        ag::Value loss = t.scale_const(t.sum(lp), 1.0 / b);
        t.backward(loss);
        benchmark::DoNotOptimize(f.layers[0].z0.grad.v.data());
        for (ag::Param* p : f.trainable_params()) p->zero_grad();
    }
    state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_RadialLogDensityTape)->Arg(64);

static void BM_FlowSample(benchmark::State& state) {
    RadialFlowStack f = make_stack(6, 6);
    for (auto _ : state) {
        Array s = flow_sample(f, 256, 3);
        benchmark::DoNotOptimize(s.v.data());
    }
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_FlowSample);

static void BM_Digamma(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> xs(4096);
    for (double& x : xs) x = 0.1 + 100.0 * rng.uniform();
    for (auto _ : state) {
        double acc = 0.0;
        for (double x : xs) acc += digamma(x);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int>(xs.size()));
}
BENCHMARK(BM_Digamma);

BENCHMARK_MAIN();
