#include <cmath>
#include <vector>

#include <doctest.h>

#include "postnet/dirichlet.hpp"
#include "postnet/errors.hpp"
#include "postnet/loss.hpp"
#include "postnet/encoder.hpp"
#include "postnet/flow.hpp"
#include "postnet/model.hpp"
#include "postnet/rng.hpp"
#include "postnet/special.hpp"
#include "testutil.hpp"

using namespace postnet;

namespace {

ag::Value alpha_on_tape(ag::Tape& t, ag::Param& p) { return t.param(p); }

DirichletBatch batch_of(const std::vector<std::vector<double>>& alphas) {
    const int b = static_cast<int>(alphas.size());
    const int k = static_cast<int>(alphas[0].size());
    DirichletBatch out;
    out.beta_prior.assign(static_cast<std::size_t>(k), 1.0);
    out.alpha = Array({b, k});
    out.beta = Array({b, k});
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < k; ++c) {
            out.alpha.at(i, c) = alphas[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            out.beta.at(i, c) = out.alpha.at(i, c) - 1.0;
        }
    return out;
}

}  // namespace

TEST_CASE("uce closed-form values") {
    ag::Tape t;
    ag::Param a1("a", Array::matrix(1, 3, {2, 1, 1}));
    CHECK(uce_loss(t, alpha_on_tape(t, a1), {0}).data().v[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

    ag::Tape t2;
    ag::Param a2("a", Array::matrix(1, 3, {1, 1, 1}));
    CHECK(uce_loss(t2, alpha_on_tape(t2, a2), {1}).data().v[0] == doctest::Approx(1.5).epsilon(1e-12));

    // Certain and correct prediction drives the loss to zero.
    ag::Tape t3;
    ag::Param a3("a", Array::matrix(1, 3, {1e9, 1, 1}));
    CHECK(uce_loss(t3, alpha_on_tape(t3, a3), {0}).data().v[0] == doctest::Approx(0.0).epsilon(1e-6));

    ag::Tape t4;
    ag::Param a4("a", Array::matrix(1, 3, {2, 1, 1}));
    CHECK_THROWS_AS(uce_loss(t4, alpha_on_tape(t4, a4), {3}), InvalidArgument);

    // Non-negative on random parameters.
    testutil::McRng rng(3);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> av{1.0 + 5 * rng.uniform(), 1.0 + 5 * rng.uniform(), 1.0 + 5 * rng.uniform()};
        ag::Tape tt;
        ag::Param ap("a", Array::matrix(1, 3, av));
        CHECK(uce_loss(tt, alpha_on_tape(tt, ap), {i % 3}).data().v[0] >= 0.0);
    }
}

TEST_CASE("bayesian loss composition") {
    // Weight zero reduces to mean UCE.
    {
        ag::Tape t;
        ag::Param a("a", Array::matrix(2, 2, {2, 1, 1, 3}));
        const double got = bayesian_loss(t, alpha_on_tape(t, a), {0, 1}, 0.0).data().v[0];
        const double expect = 0.5 * ((digamma(3) - digamma(2)) + (digamma(4) - digamma(3)));
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
    // Single sample with the default weight.
    {
        ag::Tape t;
        ag::Param a("a", Array::matrix(1, 3, {2, 1, 1}));
        const double got = bayesian_loss(t, alpha_on_tape(t, a), {0}, 1e-5).data().v[0];
        const double expect = 5.0 / 6.0 - 1e-5 * dirichlet_entropy(std::vector<double>{2, 1, 1});
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("closed-form loss matches Monte Carlo estimates of E[CE] - H") {
    testutil::McRng rng(29);
    const int samples = 100000;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> alpha{0.8 + 4 * rng.uniform(), 0.8 + 4 * rng.uniform(),
                                  0.8 + 4 * rng.uniform()};
        const int label = trial % 3;

        DirichletParams d;
        d.alpha = alpha;
        d.beta_prior.assign(3, 1.0);

        std::vector<double> ce_samples, h_samples;
        ce_samples.reserve(samples);
        h_samples.reserve(samples);
        for (int s = 0; s < samples; ++s) {
            const auto p = rng.dirichlet(alpha);
            ce_samples.push_back(-std::log(p[static_cast<std::size_t>(label)]));
            h_samples.push_back(-dirichlet_log_pdf(p, d));
        }
        const double mc = testutil::mean_se(ce_samples).mean - testutil::mean_se(h_samples).mean;

        ag::Tape t;
        ag::Param a("a", Array::matrix(1, 3, alpha));
        const double closed = bayesian_loss(t, alpha_on_tape(t, a), {label}, 1.0).data().v[0];
        CHECK(std::fabs(closed - mc) < 5e-3);
    }
}

TEST_CASE("value-path losses agree with the tape") {
    const DirichletBatch b = batch_of({{2.5, 1.2, 3.3}, {1.0, 4.0, 2.0}});
    const std::vector<int> labels{2, 1};
    for (double w : {0.0, 1e-5, 1.0}) {
        ag::Tape t;
        ag::Param a("a", b.alpha);
        CHECK(bayesian_loss_value(b, labels, w) ==
              doctest::Approx(bayesian_loss(t, alpha_on_tape(t, a), labels, w).data().v[0]).epsilon(1e-12));
    }
    ag::Tape t;
    ag::Param a("a", b.alpha);
    CHECK(cross_entropy_value(b, labels) ==
          doctest::Approx(cross_entropy_loss(t, alpha_on_tape(t, a), labels).data().v[0]).epsilon(1e-12));
}

TEST_CASE("cross entropy on the mean") {
    ag::Tape t;
    ag::Param a("a", Array::matrix(1, 2, {3, 1}));
    // -log(3/4)
    CHECK(cross_entropy_loss(t, alpha_on_tape(t, a), {0}).data().v[0] ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("loss gradients w.r.t. alpha match finite differences") {
    ag::Param a("alpha", Array::matrix(3, 4, {2.5, 1.2, 3.3, 0.9, 1.0, 4.0, 2.0, 1.5, 5.0, 0.7, 1.1, 2.2}));
    const std::vector<int> labels{0, 3, 2};
    for (double w : {0.0, 1e-2, 1.0}) {
        auto loss_value = [&]() {
            ag::Tape t;
            return bayesian_loss(t, t.param(a), labels, w).data().v[0];
        };
        auto run_backward = [&]() {
            ag::Tape t;
            t.backward(bayesian_loss(t, t.param(a), labels, w));
        };
        auto res = testutil::check_gradients(loss_value, run_backward, {&a}, 1e-6);
        CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
    }
}

TEST_CASE("full joint-model gradients match finite differences") {
    testutil::ToyJointFixture f(10, 2, 2, 2, 3, /*seed=*/131);
    auto params = f.params();
    auto loss_value = [&]() { return f.loss(false); };
    auto run_backward = [&]() { (void)f.loss(true); };
    auto res = testutil::check_gradients(loss_value, run_backward, params);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
}

TEST_CASE("cross-entropy loss gradients match finite differences") {
    ag::Param a("alpha", Array::matrix(3, 3, {2.5, 1.2, 3.3, 1.0, 4.0, 2.0, 5.0, 0.7, 1.1}));
    const std::vector<int> labels{0, 1, 2};
    auto loss_value = [&]() {
        ag::Tape t;
        return cross_entropy_loss(t, t.param(a), labels).data().v[0];
    };
    auto run_backward = [&]() {
        ag::Tape t;
        t.backward(cross_entropy_loss(t, t.param(a), labels));
    };
    auto res = testutil::check_gradients(loss_value, run_backward, {&a}, 1e-6);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
}

TEST_CASE("evidence-head and mog model gradients match finite differences") {
    // The no-flow ablation path: encoder + batchnorm + exp(linear) evidence.
    Rng rng(61);
    EncoderConfig ec;
    ec.input_dim = 3;
    ec.hidden_dims = {6, 5};
    ec.latent_dim = 2;
    ec.activation = Activation::kLeakyRelu;
    ec.seed = 62;
    EncoderParams enc = init_encoder(ec);
    LinearEvidenceHead head = init_evidence_head(2, 3, 63);
    Array x({6, 3});
    for (double& v : x.v) v = rng.normal();
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};

    auto build_linear = [&](bool backward) {
        ag::Tape t;
        ag::Value z = encode(t, enc, t.input(x), true, true, false);
        ag::Value logits = t.add_rowvec(t.matmul(z, t.param(head.w)), t.param(head.b));
        ag::Value alpha = t.add_const(t.exp_fn(logits), 1.0);
        ag::Value loss = bayesian_loss(t, alpha, labels, 1e-3);
        if (backward) t.backward(loss);
        return loss.data().v[0];
    };
    std::vector<ag::Param*> params = enc.trainable_params();
    params.push_back(&head.w);
    params.push_back(&head.b);
    auto res = testutil::check_gradients([&]() { return build_linear(false); },
                                         [&]() { (void)build_linear(true); }, params);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);

    // Mixture-of-Gaussians densities instead of flows.
    std::vector<MoGDensity> mogs;
    for (int c = 0; c < 3; ++c) {
        MoGDensity g = init_mog(2, 2, 70 + c);
        for (auto& comp : g.components) {
            for (double& v : comp.mean.value.v) v += 0.4 * rng.normal();
            for (double& v : comp.log_var.value.v) v += 0.2 * rng.normal();
        }
        mogs.push_back(std::move(g));
    }
    ClassCounts counts{{30.0, 50.0, 40.0}};
    auto build_mog = [&](bool backward) {
        ag::Tape t;
        ag::Value z = encode(t, enc, t.input(x), true, true, false);
        std::vector<ag::Value> cols;
        for (int c = 0; c < 3; ++c) {
            ag::Value lp = mog_log_density(t, mogs[static_cast<std::size_t>(c)], z);
            cols.push_back(t.add_const(
                t.scale_const(t.clamp_min(t.exp_fn(lp), kDensityFloor), counts.n_c[static_cast<std::size_t>(c)]),
                1.0));
        }
        ag::Value loss = bayesian_loss(t, t.stack_cols(cols), labels, 1e-3);
        if (backward) t.backward(loss);
        return loss.data().v[0];
    };
    std::vector<ag::Param*> mog_params = enc.trainable_params();
    for (auto& g : mogs)
        for (ag::Param* p : g.trainable_params()) mog_params.push_back(p);
    auto res2 = testutil::check_gradients([&]() { return build_mog(false); },
                                          [&]() { (void)build_mog(true); }, mog_params);
    CHECK_MESSAGE(res2.max_rel_err < 1e-4, res2.worst);
}

TEST_CASE("adam step behavior") {
    // Zero gradient from a fresh state leaves parameters untouched.
    ag::Param p("p", Array::vec({1.0, -2.0}));
    Adam adam({&p}, 0.01);
    adam.zero_grad();
    adam.step();
    CHECK(p.value.v == std::vector<double>{1.0, -2.0});

    // First step with a nonzero gradient is about -lr * sign(g).
    ag::Param q("q", Array::vec({0.5, 0.5}));
    Adam adam2({&q}, 0.01);
    adam2.zero_grad();
    q.grad.v = {0.3, -4.0};
    adam2.step();
    CHECK(q.value.v[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
    CHECK(q.value.v[1] == doctest::Approx(0.5 + 0.01).epsilon(1e-6));

    // Identical gradient streams give identical trajectories.
    ag::Param r1("r", Array::vec({0.1})), r2("r", Array::vec({0.1}));
    Adam a1({&r1}, 0.005), a2({&r2}, 0.005);
    for (int step = 0; step < 25; ++step) {
        const double g = std::sin(0.3 * step);
        r1.grad.v = {g};
        r2.grad.v = {g};
        a1.step();
        a2.step();
    }
    CHECK(r1.value.v[0] == r2.value.v[0]);
}
