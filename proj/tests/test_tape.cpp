#include <cmath>
#include <vector>

#include <doctest.h>

#include "postnet/errors.hpp"
#include "postnet/rng.hpp"
#include "postnet/tape.hpp"
#include "testutil.hpp"

using namespace postnet;
using ag::Param;
using ag::Tape;
using ag::Value;

TEST_CASE("matmul forward examples") {
    Tape t;
    Value eye = t.input(Array::matrix(2, 2, {1, 0, 0, 1}));
    Value v = t.input(Array::matrix(2, 1, {2, 3}));
    Value out = t.matmul(eye, v);
    CHECK(out.data().v == std::vector<double>{2, 3});

    Value a = t.input(Array::matrix(1, 2, {1, 2}));
    Value b = t.input(Array::matrix(2, 1, {3, 4}));
    CHECK(t.matmul(a, b).data().v[0] == doctest::Approx(11.0));

    CHECK_THROWS_AS(t.matmul(eye, a), InvalidArgument);
}

TEST_CASE("matmul gradient equals column sums of b and matches finite differences") {
    Rng rng(7);
    Param a("a", Array({4, 3}));
    Param b("b", Array({3, 2}));
    for (double& x : a.value.v) x = rng.normal();
    for (double& x : b.value.v) x = rng.normal();

    auto loss_value = [&]() {
        Tape t;
        return t.sum(t.matmul(t.param(a), t.param(b))).data().v[0];
    };
    auto run_backward = [&]() {
        Tape t;
        t.backward(t.sum(t.matmul(t.param(a), t.param(b))));
    };
    auto res = testutil::check_gradients(loss_value, run_backward, {&a, &b});
    CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);

    // d sum(a.b) / d a_il = sum_j b_lj
    for (int i = 0; i < 4; ++i)
        for (int l = 0; l < 3; ++l) {
            const double colsum = b.value.at(l, 0) + b.value.at(l, 1);
            CHECK(a.grad.at(i, l) == doctest::Approx(colsum).epsilon(1e-12));
        }
}

TEST_CASE("leaky_relu values and gradient") {
    Tape t;
    CHECK(t.leaky_relu(t.input(Array::scalar(0.0)), 0.1).data().v[0] == 0.0);
    Value out = t.leaky_relu(t.input(Array::vec({-2.0, 3.0})), 0.1);
    CHECK(out.data().v[0] == doctest::Approx(-0.2));
    CHECK(out.data().v[1] == doctest::Approx(3.0));
    CHECK_THROWS_AS(t.leaky_relu(out, 1.5), InvalidArgument);

    Param x("x", Array::scalar(-2.0));
    auto loss_value = [&]() {
        Tape tt;
        return tt.sum(tt.leaky_relu(tt.param(x), 0.1)).data().v[0];
    };
    auto run_backward = [&]() {
        Tape tt;
        tt.backward(tt.sum(tt.leaky_relu(tt.param(x), 0.1)));
    };
    auto res = testutil::check_gradients(loss_value, run_backward, {&x});
    CHECK(res.max_rel_err < 1e-6);
    CHECK(x.grad.v[0] == doctest::Approx(0.1));
}

TEST_CASE("backward on linear and quadratic reductions") {
    Param w("w", Array::vec({1.0, 2.0, 3.0}));
    {
        Tape t;
        t.backward(t.sum(t.param(w)));
        CHECK(w.grad.v == std::vector<double>{1, 1, 1});
    }
    w = Param("w", Array::vec({1.0, 2.0}));
    {
        Tape t;
        t.backward(t.sum(t.square(t.param(w))));
        CHECK(w.grad.v == std::vector<double>{2, 4});
    }
}

TEST_CASE("backward misuse is rejected") {
    Param w("w", Array::vec({1.0, 2.0}));
    Tape t;
    Value s = t.sum(t.param(w));
    t.backward(s);
    CHECK_THROWS_AS(t.backward(s), InvalidArgument);

    Tape t2;
    Value v = t2.param(w);
    CHECK_THROWS_AS(t2.backward(v), InvalidArgument);  // non-scalar root

    Tape t3;
    Value bad = t3.log_fn(t3.input(Array::scalar(-1.0)));
    CHECK_THROWS_AS(t3.backward(bad), NumericError);  // NaN at output
}

TEST_CASE("scalar specials on the tape") {
    Tape t;
    const double euler = 0.5772156649015329;
    CHECK(t.digamma_fn(t.input(Array::scalar(1.0))).data().v[0] == doctest::Approx(-euler).epsilon(1e-10));
    CHECK(t.lgamma_fn(t.input(Array::scalar(1.0))).data().v[0] == doctest::Approx(0.0));
    const double d42 = t.digamma_fn(t.input(Array::scalar(4.0))).data().v[0] -
                       t.digamma_fn(t.input(Array::scalar(2.0))).data().v[0];
    CHECK(d42 == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("batchnorm train examples") {
    Param gamma("g", Array::vec({1.0}));
    Param beta("b", Array::vec({0.0}));
    Array rm({1}), rv({1});
    rv.v[0] = 1.0;

    {
        // Constant column normalizes to zero before scale/shift.
        Tape t;
        Value x = t.input(Array::matrix(3, 1, {5.0, 5.0, 5.0}));
        Value out = t.batchnorm_train(x, t.param(gamma), t.param(beta), &rm, &rv, 1e-5, 0.1, false);
        for (double v : out.data().v) CHECK(v == doctest::Approx(0.0));
    }
    {
        Tape t;
        Value x = t.input(Array::matrix(2, 1, {-1.0, 1.0}));
        Value out = t.batchnorm_train(x, t.param(gamma), t.param(beta), &rm, &rv, 1e-5, 0.1, false);
        CHECK(out.data().v[0] == doctest::Approx(-1.0).epsilon(1e-4));
        CHECK(out.data().v[1] == doctest::Approx(1.0).epsilon(1e-4));
    }
    {
        Tape t;
        Value x = t.input(Array::matrix(1, 1, {0.5}));
        CHECK_THROWS_AS(t.batchnorm_train(x, t.param(gamma), t.param(beta), &rm, &rv, 1e-5, 0.1, false),
                        InvalidArgument);
    }
}

TEST_CASE("batchnorm eval with identity statistics is an affine map") {
    Param gamma("g", Array::vec({2.0}));
    Param beta("b", Array::vec({0.5}));
    Array rm({1}), rv({1});
    rv.v[0] = 1.0;
    Tape t;
    Value x = t.input(Array::matrix(3, 1, {-1.0, 0.0, 2.0}));
    Value out = t.batchnorm_eval(x, t.param(gamma), t.param(beta), rm, rv, 1e-5);
    for (int i = 0; i < 3; ++i)
        CHECK(out.data().v[static_cast<std::size_t>(i)] ==
              doctest::Approx(2.0 * x.data().v[static_cast<std::size_t>(i)] + 0.5).epsilon(1e-4));
}

TEST_CASE("batchnorm running statistics update") {
    Param gamma("g", Array::vec({1.0}));
    Param beta("b", Array::vec({0.0}));
    Array rm({1}), rv({1});
    rv.v[0] = 1.0;
    Tape t;
    Value x = t.input(Array::matrix(2, 1, {0.0, 4.0}));
    (void)t.batchnorm_train(x, t.param(gamma), t.param(beta), &rm, &rv, 1e-5, 0.1, true);
    CHECK(rm.v[0] == doctest::Approx(0.1 * 2.0));             // mean 2
    CHECK(rv.v[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 8.0));  // unbiased var 8
}

namespace {

// A composition touching most of the op set, on strictly positive inputs
// where needed.
struct CompositionFixture {
    Param w{"w", Array({3, 4})};
    Param b{"b", Array({4})};
    Param s{"s", Array::scalar(0.7)};
    Param gamma{"gamma", Array::vec({1.0, 1.2, 0.9, 1.05})};
    Param beta{"beta", Array::vec({0.0, 0.1, -0.1, 0.2})};
    Array x{{5, 3}};
    Array rm{{4}}, rv{{4}};
    std::vector<int> labels{0, 2, 1, 3, 2};

    explicit CompositionFixture(std::uint64_t seed) {
        Rng rng(seed);
        for (double& v : w.value.v) v = rng.normal() * 0.7;
        for (double& v : b.value.v) v = rng.normal() * 0.2;
        for (double& v : x.v) v = rng.normal();
        for (double& v : rv.v) v = 1.0 + 0.3 * rng.uniform();
        for (double& v : rm.v) v = 0.2 * rng.normal();
    }

    double build(ag::Tape& t, bool backward) {
        Value h = t.add_rowvec(t.matmul(t.input(x), t.param(w)), t.param(b));
        h = t.batchnorm_train(h, t.param(gamma), t.param(beta), &rm, &rv, 1e-5, 0.1, false);
        h = t.leaky_relu(h, 0.05);
        Value pos = t.add_const(t.softplus_fn(h), 0.1);     // strictly positive matrix
        Value lg = t.row_sum(t.lgamma_fn(pos));
        Value dg = t.digamma_fn(t.add_const(t.row_sum(pos), 1.0));
        Value gathered = t.gather_cols(pos, labels);
        Value mixed = t.mul(t.add(lg, dg), t.tanh_fn(gathered));
        Value scaled = t.scale_rows(t.square(t.input(x)), t.exp_fn(t.neg(gathered)));
        Value lse = t.logsumexp_list(std::vector<Value>{mixed, t.row_sum(scaled), t.log1p_fn(t.square(dg))});
        Value stacked = t.stack_cols(std::vector<Value>{lse, t.sqrt_fn(t.add_const(t.square(mixed), 1e-3))});
        Value ratio = t.div(t.row_sum(t.log_fn(t.clamp_min(pos, 0.05))), t.add_const(t.square(dg), 2.0));
        Value eval_bn = t.batchnorm_eval(t.sub_rowvec(t.mul_rowvec(pos, t.param(gamma)), t.param(beta)),
                                         t.param(gamma), t.param(beta), rm, rv, 1e-5);
        Value pick = t.index_elem(t.row_sum(eval_bn), 2);
        Value total = t.add(t.sum(stacked), t.mul(t.param(s), t.logsumexp_all(t.reciprocal(pos))));
        total = t.add(total, t.add(t.sum(ratio), pick));
        Value loss = t.scale_const(total, 0.1);
        if (backward) t.backward(loss);
        return loss.data().v[0];
    }
};

}  // namespace

TEST_CASE("gradients of a random op composition match finite differences") {
    for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
        CompositionFixture f(seed);
        std::vector<Param*> params{&f.w, &f.b, &f.s, &f.gamma, &f.beta};
        auto loss_value = [&]() {
            Tape t;
            return f.build(t, false);
        };
        auto run_backward = [&]() {
            Tape t;
            f.build(t, true);
        };
        auto res = testutil::check_gradients(loss_value, run_backward, params, 1e-5);
        CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
    }
}

TEST_CASE("forward and gradients are bit-identical across reruns") {
    CompositionFixture f1(99), f2(99);
    Tape t1, t2;
    const double v1 = f1.build(t1, true);
    const double v2 = f2.build(t2, true);
    CHECK(v1 == v2);
    CHECK(f1.w.grad.v == f2.w.grad.v);
    CHECK(f1.gamma.grad.v == f2.gamma.grad.v);
}
