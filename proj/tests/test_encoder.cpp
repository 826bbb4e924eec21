#include <cmath>

#include <doctest.h>

#include "postnet/encoder.hpp"
#include "postnet/errors.hpp"
#include "postnet/rng.hpp"
#include "testutil.hpp"

using namespace postnet;

namespace {

EncoderConfig small_config() {
    EncoderConfig c;
    c.input_dim = 2;
    c.hidden_dims = {64, 64, 64};
    c.latent_dim = 6;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("init_encoder produces the documented layer chain") {
    EncoderParams p = init_encoder(small_config());
    REQUIRE(p.layers.size() == 4);
    CHECK(p.layers[0].w.value.shape == std::vector<int>{2, 64});
    CHECK(p.layers[1].w.value.shape == std::vector<int>{64, 64});
    CHECK(p.layers[2].w.value.shape == std::vector<int>{64, 64});
    CHECK(p.layers[3].w.value.shape == std::vector<int>{64, 6});
    CHECK(p.bn.has_value());

    for (const auto& l : p.layers) {
        for (double b : l.b.value.v) CHECK(b == 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.w.value.rows()));
        for (double w : l.w.value.v) CHECK(std::fabs(w) <= bound);
    }
}

TEST_CASE("init_encoder is deterministic per seed") {
    EncoderParams a = init_encoder(small_config());
    EncoderParams b = init_encoder(small_config());
    for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(a.layers[l].w.value.v == b.layers[l].w.value.v);

    EncoderConfig other = small_config();
    other.seed = 4;
    EncoderParams c = init_encoder(other);
    CHECK(a.layers[0].w.value.v != c.layers[0].w.value.v);
}

TEST_CASE("invalid configs are rejected") {
    EncoderConfig c = small_config();
    c.latent_dim = 65;
    CHECK_THROWS_AS(init_encoder(c), InvalidArgument);
    c = small_config();
    c.hidden_dims = {0};
    CHECK_THROWS_AS(init_encoder(c), InvalidArgument);
}

TEST_CASE("zero weights and zero input give a zero latent before batchnorm") {
    EncoderConfig c = small_config();
    c.final_batchnorm = false;
    EncoderParams p = init_encoder(c);
    for (auto& l : p.layers) std::fill(l.w.value.v.begin(), l.w.value.v.end(), 0.0);
    Array out = encode_eval(p, Array({3, 2}));
    for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("train-mode encode rejects single-row batches when batchnorm is on") {
    EncoderParams p = init_encoder(small_config());
    ag::Tape t;
    CHECK_THROWS_AS(encode(t, p, t.input(Array({1, 2})), /*train_mode=*/true), InvalidArgument);
}

TEST_CASE("eval-mode tape forward matches encode_eval") {
    EncoderParams p = init_encoder(small_config());
    Rng rng(11);
    Array x({5, 2});
    for (double& v : x.v) v = rng.normal();
    p.bn->running_mean.v = {0.1, -0.2, 0.3, 0.0, 0.05, -0.4};
    p.bn->running_var.v = {1.0, 0.5, 2.0, 1.5, 0.8, 1.2};

    ag::Tape t;
    ag::Value out = encode(t, p, t.input(x), /*train_mode=*/false);
    Array plain = encode_eval(p, x);
    REQUIRE(out.data().v.size() == plain.v.size());
    for (std::size_t i = 0; i < plain.v.size(); ++i)
        CHECK(out.data().v[i] == doctest::Approx(plain.v[i]).epsilon(1e-13));
}

TEST_CASE("gradient reaches every encoder parameter") {
    EncoderConfig c;
    c.input_dim = 3;
    c.hidden_dims = {8, 6};
    c.latent_dim = 4;
    c.activation = Activation::kLeakyRelu;
    c.seed = 5;
    EncoderParams p = init_encoder(c);

    Rng rng(17);
    Array x({6, 3});
    for (double& v : x.v) v = rng.normal();

    ag::Tape t;
    ag::Value z = encode(t, p, t.input(x), /*train_mode=*/true, /*trainable=*/true, /*update_running=*/false);
    t.backward(t.sum(t.softplus_fn(z)));

    for (ag::Param* prm : p.trainable_params()) {
        double norm = 0.0;
        for (double g : prm->grad.v) norm += std::fabs(g);
        CHECK_MESSAGE(norm > 0.0, prm->name);
    }
}

TEST_CASE("train-mode encoder gradients match finite differences") {
    EncoderConfig c;
    c.input_dim = 3;
    c.hidden_dims = {5, 4};
    c.latent_dim = 2;
    c.activation = Activation::kLeakyRelu;
    c.seed = 9;
    EncoderParams p = init_encoder(c);

    Rng rng(23);
    Array x({6, 3});
    for (double& v : x.v) v = rng.normal();

    auto loss_value = [&]() {
        ag::Tape t;
        ag::Value z = encode(t, p, t.input(x), true, true, false);
        return t.sum(t.square(z)).data().v[0];
    };
    auto run_backward = [&]() {
        ag::Tape t;
        ag::Value z = encode(t, p, t.input(x), true, true, false);
        t.backward(t.sum(t.square(z)));
    };
    auto res = testutil::check_gradients(loss_value, run_backward, p.trainable_params());
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
}
