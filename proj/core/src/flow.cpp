#include "postnet/flow.hpp"

#include <cmath>
#include <string>

#include "postnet/errors.hpp"
#include "postnet/rng.hpp"
#include "postnet/special.hpp"

namespace postnet {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

std::vector<ag::Param*> RadialFlowStack::trainable_params() {
    std::vector<ag::Param*> ps;
    for (auto& l : layers) {
        ps.push_back(&l.z0);
        ps.push_back(&l.alpha_raw);
        ps.push_back(&l.beta_raw);
    }
    return ps;
}

RadialFlowStack init_radial_flow(int latent_dim, int length, std::uint64_t seed) {
    if (latent_dim < 1) throw InvalidArgument("init_radial_flow: latent_dim must be >= 1");
    if (length < 0) throw InvalidArgument("init_radial_flow: length must be >= 0");
    RadialFlowStack f;
    f.latent_dim = latent_dim;
    const double raw_unit = softplus_inv(1.0);  // alpha == 1
    for (int l = 0; l < length; ++l) {
        Rng rng(derive_seed(seed, "radial_init", static_cast<std::uint64_t>(l)));
        Array z0({latent_dim});
        for (double& x : z0.v) x = 0.1 * rng.normal();
        const double a = raw_unit + 0.01 * rng.normal();
        // beta_raw == alpha_raw makes beta_hat == 0, i.e. an identity layer.
        const double b = a + 0.01 * rng.normal();
        f.layers.push_back({ag::Param("flow.z0." + std::to_string(l), std::move(z0)),
                            ag::Param("flow.a." + std::to_string(l), Array::scalar(a)),
                            ag::Param("flow.b." + std::to_string(l), Array::scalar(b))});
    }
    return f;
}

ag::Value radial_log_density(ag::Tape& tape, RadialFlowStack& flow, ag::Value z, bool trainable) {
    const Array& Z = z.data();
    if (Z.rank() != 2 || Z.cols() != flow.latent_dim)
        throw InvalidArgument("radial_log_density: input shape " + Z.shape_str() + " does not match latent dim");
    for (double v : Z.v)
        if (!std::isfinite(v)) throw NumericError("radial_log_density: non-finite input");
    const int b = Z.rows();
    const int h = flow.latent_dim;
    auto bind = [&](ag::Param& p) { return trainable ? tape.param(p) : tape.frozen(p); };

    ag::Value cur = z;
    ag::Value log_det = tape.input(Array({b}));  // zeros
    for (auto& layer : flow.layers) {
        ag::Value z0 = bind(layer.z0);
        ag::Value alpha = tape.softplus_fn(bind(layer.alpha_raw));
        ag::Value beta_hat = tape.sub(tape.softplus_fn(bind(layer.beta_raw)), alpha);

        ag::Value diff = tape.sub_rowvec(cur, z0);
        ag::Value r = tape.sqrt_fn(tape.row_sum(tape.square(diff)));
        ag::Value hfun = tape.reciprocal(tape.add(r, alpha));
        ag::Value bh = tape.mul(hfun, beta_hat);  // beta_hat * h  [B]
        cur = tape.add(cur, tape.scale_rows(diff, bh));
        // log|det J| = (H-1) log(1 + bh) + log(1 + alpha*beta_hat*h^2)
        ag::Value t1 = tape.scale_const(tape.log1p_fn(bh), static_cast<double>(h - 1));
        ag::Value t2 = tape.log1p_fn(tape.mul(tape.square(hfun), tape.mul(alpha, beta_hat)));
        log_det = tape.add(log_det, tape.add(t1, t2));
    }
    ag::Value base = tape.add_const(tape.scale_const(tape.row_sum(tape.square(cur)), -0.5),
                                    -0.5 * h * kLogTwoPi);
    return tape.add(base, log_det);
}

namespace {

struct LayerView {
    const double* z0;
    double alpha;
    double beta_hat;
};

LayerView view(const RadialLayer& l) {
    const double alpha = softplus(l.alpha_raw.value.v[0]);
    return {l.z0.value.v.data(), alpha, -alpha + softplus(l.beta_raw.value.v[0])};
}

}  // namespace

void radial_normalize(const RadialFlowStack& flow, const Array& z, Array* base, std::vector<double>* log_det) {
    const int b = z.rows(), h = flow.latent_dim;
    if (z.rank() != 2 || z.cols() != h) throw InvalidArgument("radial_normalize: bad input shape");
    Array cur = z;
    std::vector<double> ld(static_cast<std::size_t>(b), 0.0);
    for (const auto& layer : flow.layers) {
        const LayerView lv = view(layer);
        for (int i = 0; i < b; ++i) {
            double r2 = 0.0;
            for (int j = 0; j < h; ++j) {
                const double d = cur.at(i, j) - lv.z0[j];
                r2 += d * d;
            }
            const double r = std::sqrt(r2);
            const double hf = 1.0 / (lv.alpha + r);
            const double bh = lv.beta_hat * hf;
            for (int j = 0; j < h; ++j) cur.at(i, j) += bh * (cur.at(i, j) - lv.z0[j]);
            ld[static_cast<std::size_t>(i)] +=
                (h - 1) * std::log1p(bh) + std::log1p(lv.alpha * lv.beta_hat * hf * hf);
        }
    }
    if (base) *base = std::move(cur);
    if (log_det) *log_det = std::move(ld);
}

std::vector<double> radial_log_density_eval(const RadialFlowStack& flow, const Array& z) {
    Array base;
    std::vector<double> ld;
    radial_normalize(flow, z, &base, &ld);
    const int b = z.rows(), h = flow.latent_dim;
    std::vector<double> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        double s = 0.0;
        for (int j = 0; j < h; ++j) s += base.at(i, j) * base.at(i, j);
        out[static_cast<std::size_t>(i)] = -0.5 * s - 0.5 * h * kLogTwoPi + ld[static_cast<std::size_t>(i)];
    }
    return out;
}

namespace {

// Invert t = y + beta_hat*h(alpha,|y-z0|)*(y-z0) for y, given that the map
// scales radii monotonically along rays from z0. Solves
// r*(1 + beta_hat/(alpha+r)) = R by bisection.
void invert_radial_layer(const LayerView& lv, int h, double* t) {
    double r2 = 0.0;
    for (int j = 0; j < h; ++j) {
        const double d = t[j] - lv.z0[j];
        r2 += d * d;
    }
    const double big_r = std::sqrt(r2);
    if (big_r == 0.0) {
        for (int j = 0; j < h; ++j) t[j] = lv.z0[j];
        return;
    }
    double lo = 0.0;
    double hi = big_r + std::fabs(lv.beta_hat) + 1.0;
    for (int it = 0; it < 500 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double val = mid * (1.0 + lv.beta_hat / (lv.alpha + mid));
        if (val < big_r)
            lo = mid;
        else
            hi = mid;
    }
    const double r = 0.5 * (lo + hi);
    const double scale = r / big_r;
    for (int j = 0; j < h; ++j) t[j] = lv.z0[j] + scale * (t[j] - lv.z0[j]);
}

}  // namespace

Array flow_sample(const RadialFlowStack& flow, int n, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("flow_sample: n must be >= 1");
    const int h = flow.latent_dim;
    Rng rng(derive_seed(seed, "flow_sample"));
    Array out({n, h});
    for (double& v : out.v) v = rng.normal();
    for (int i = 0; i < n; ++i) {
        double* row = out.v.data() + static_cast<std::size_t>(i) * h;
        for (auto it = flow.layers.rbegin(); it != flow.layers.rend(); ++it)
            invert_radial_layer(view(*it), h, row);
    }
    return out;
}

std::vector<ag::Param*> MoGDensity::trainable_params() {
    std::vector<ag::Param*> ps;
    ps.push_back(&weight_logits);
    for (auto& c : components) {
        ps.push_back(&c.mean);
        ps.push_back(&c.log_var);
    }
    return ps;
}

MoGDensity init_mog(int latent_dim, int components, std::uint64_t seed) {
    if (latent_dim < 1 || components < 1) throw InvalidArgument("init_mog: bad dimensions");
    MoGDensity m;
    m.latent_dim = latent_dim;
    m.weight_logits = ag::Param("mog.logits", Array({components}));
    for (int j = 0; j < components; ++j) {
        Rng rng(derive_seed(seed, "mog_init", static_cast<std::uint64_t>(j)));
        Array mean({latent_dim});
        for (double& x : mean.v) x = 0.3 * rng.normal();
        m.components.push_back(
            {ag::Param("mog.mean." + std::to_string(j), std::move(mean)),
             ag::Param("mog.logvar." + std::to_string(j), Array({latent_dim}))});
    }
    return m;
}

ag::Value mog_log_density(ag::Tape& tape, MoGDensity& mog, ag::Value z, bool trainable) {
    const Array& Z = z.data();
    if (Z.rank() != 2 || Z.cols() != mog.latent_dim)
        throw InvalidArgument("mog_log_density: input shape " + Z.shape_str() + " does not match latent dim");
    const int h = mog.latent_dim;
    auto bind = [&](ag::Param& p) { return trainable ? tape.param(p) : tape.frozen(p); };

    ag::Value logits = bind(mog.weight_logits);
    ag::Value lse = tape.logsumexp_all(logits);
    std::vector<ag::Value> comps;
    for (std::size_t j = 0; j < mog.components.size(); ++j) {
        ag::Value mean = bind(mog.components[j].mean);
        ag::Value log_var = bind(mog.components[j].log_var);
        ag::Value logw = tape.sub(tape.index_elem(logits, static_cast<int>(j)), lse);
        ag::Value inv_var = tape.exp_fn(tape.neg(log_var));
        ag::Value quad = tape.row_sum(tape.mul_rowvec(tape.square(tape.sub_rowvec(z, mean)), inv_var));
        ag::Value c = tape.add_const(tape.add(logw, tape.scale_const(tape.sum(log_var), -0.5)),
                                     -0.5 * h * kLogTwoPi);
        comps.push_back(tape.add(tape.scale_const(quad, -0.5), c));
    }
    return tape.logsumexp_list(comps);
}

std::vector<double> mog_log_density_eval(const MoGDensity& mog, const Array& z) {
    const int b = z.rows(), h = mog.latent_dim;
    if (z.rank() != 2 || z.cols() != h) throw InvalidArgument("mog_log_density_eval: bad input shape");
    const std::size_t J = mog.components.size();
    const auto& logits = mog.weight_logits.value.v;
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double acc = 0.0;
    for (double x : logits) acc += std::exp(x - mx);
    const double lse = mx + std::log(acc);

    std::vector<double> out(static_cast<std::size_t>(b));
    std::vector<double> comp(J);
    for (int i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
            const auto& mean = mog.components[j].mean.value.v;
            const auto& lv = mog.components[j].log_var.value.v;
            double quad = 0.0, sum_lv = 0.0;
            for (int d = 0; d < h; ++d) {
                const double diff = z.at(i, d) - mean[static_cast<std::size_t>(d)];
                quad += diff * diff * std::exp(-lv[static_cast<std::size_t>(d)]);
                sum_lv += lv[static_cast<std::size_t>(d)];
            }
            comp[j] = logits[j] - lse - 0.5 * quad - 0.5 * sum_lv - 0.5 * h * kLogTwoPi;
        }
        double cm = comp[0];
        for (double x : comp) cm = std::max(cm, x);
        double s = 0.0;
        for (double x : comp) s += std::exp(x - cm);
        out[static_cast<std::size_t>(i)] = cm + std::log(s);
    }
    return out;
}

}  // namespace postnet
