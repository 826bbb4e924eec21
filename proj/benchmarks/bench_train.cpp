#include <benchmark/benchmark.h>

#include "postnet/data.hpp"
#include "postnet/loss.hpp"
#include "postnet/train.hpp"

using namespace postnet;

namespace {

struct StepFixture {
    LabeledDataset data;
    EncoderParams enc;
    std::vector<RadialFlowStack> flows;
    ClassCounts counts{{300, 300, 300}};
    std::vector<int> labels;
    Array batch;

    StepFixture() : data(generate_three_gaussians(64, 1)) {
        EncoderConfig ec;
        ec.input_dim = 2;
        ec.latent_dim = 6;
        ec.seed = 2;
        enc = init_encoder(ec);
        for (int c = 0; c < 3; ++c) flows.push_back(init_radial_flow(6, 6, 10 + c));
        labels = data.y;
        batch = data.X;
    }

    std::vector<ag::Param*> params() {
        auto ps = enc.trainable_params();
        for (auto& f : flows)
            for (ag::Param* p : f.trainable_params()) ps.push_back(p);
        return ps;
    }
};

}  // namespace

// One full joint training step: tape build, forward, backward, Adam update.
static void BM_JointTrainStep(benchmark::State& state) {
    StepFixture f;
    Adam adam(f.params(), 1e-3);
    for (auto _ : state) {
        ag::Tape t;
        ag::Value z = encode(t, f.enc, t.input(f.batch), true, true, false);
        std::vector<ag::Value> cols;
        for (int c = 0; c < 3; ++c) {
            ag::Value lp = radial_log_density(t, f.flows[static_cast<std::size_t>(c)], z);
            cols.push_back(t.add_const(
                t.scale_const(t.clamp_min(t.exp_fn(lp), kDensityFloor), f.counts.n_c[static_cast<std::size_t>(c)]),
                1.0));
        }
        ag::Value loss = bayesian_loss(t, t.stack_cols(cols), f.labels, 1e-5);
        adam.zero_grad();
        t.backward(loss);
        adam.step();
        benchmark::DoNotOptimize(loss.data().v[0]);
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_JointTrainStep);

static void BM_PosteriorEval(benchmark::State& state) {
    LabeledDataset full = generate_three_gaussians(1500, 0);
    TrainConfig cfg;
    cfg.latent_dim = 2;
    cfg.max_epochs = 30;
    PipelineResult pipe = run_training_pipeline(full, cfg);
    const PosteriorModel& m = pipe.result.model;
    Array x = m.scaler.transform(pipe.raw_splits.test.X);
    for (auto _ : state) {
        DirichletBatch d = m.posterior(x);
        benchmark::DoNotOptimize(d.alpha.v.data());
    }
    state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_PosteriorEval);
