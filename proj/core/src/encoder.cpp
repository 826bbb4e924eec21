#include "postnet/encoder.hpp"

#include <cmath>
#include <string>

#include "postnet/errors.hpp"
#include "postnet/rng.hpp"

namespace postnet {

void EncoderConfig::validate() const {
    if (input_dim < 1) throw InvalidArgument("EncoderConfig: input_dim must be >= 1");
    if (latent_dim < 1 || latent_dim > 64) throw InvalidArgument("EncoderConfig: latent_dim must be in [1,64]");
    for (int h : hidden_dims)
        if (h < 1) throw InvalidArgument("EncoderConfig: hidden dims must be >= 1");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw InvalidArgument("EncoderConfig: leaky slope in [0,1)");
}

std::vector<ag::Param*> EncoderParams::trainable_params() {
    std::vector<ag::Param*> ps;
    for (auto& l : layers) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    if (bn) {
        ps.push_back(&bn->gamma);
        ps.push_back(&bn->beta);
    }
    return ps;
}

EncoderParams init_encoder(const EncoderConfig& config) {
    config.validate();
    EncoderParams p;
    p.config = config;
    std::vector<int> dims;
    dims.push_back(config.input_dim);
    for (int h : config.hidden_dims) dims.push_back(h);
    dims.push_back(config.latent_dim);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l], fan_out = dims[l + 1];
        Rng rng(derive_seed(config.seed, "encoder_init", l));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Array w({fan_in, fan_out});
        for (double& x : w.v) x = rng.uniform(-bound, bound);
        Array b({fan_out});
        p.layers.push_back({ag::Param("enc.w" + std::to_string(l), std::move(w)),
                            ag::Param("enc.b" + std::to_string(l), std::move(b))});
    }
    if (config.final_batchnorm) {
        const int h = config.latent_dim;
        Array gamma({h});
        std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
        Array var({h});
        std::fill(var.v.begin(), var.v.end(), 1.0);
        p.bn = BatchNormState{ag::Param("enc.bn.gamma", std::move(gamma)), ag::Param("enc.bn.beta", Array({h})),
                              Array({h}), std::move(var)};
    }
    return p;
}

ag::Value encode(ag::Tape& tape, EncoderParams& params, ag::Value x, bool train_mode, bool trainable,
                 bool update_running) {
    const Array& X = x.data();
    if (X.rank() != 2 || X.cols() != params.config.input_dim)
        throw InvalidArgument("encode: input shape " + X.shape_str() + " does not match input_dim " +
                              std::to_string(params.config.input_dim));
    auto bind = [&](ag::Param& p) { return trainable ? tape.param(p) : tape.frozen(p); };

    const double slope = params.config.activation == Activation::kLeakyRelu ? params.config.leaky_slope : 0.0;
    ag::Value h = x;
    const std::size_t n_layers = params.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        h = tape.add_rowvec(tape.matmul(h, bind(params.layers[l].w)), bind(params.layers[l].b));
        if (l + 1 < n_layers) h = tape.leaky_relu(h, slope);
    }
    if (params.bn) {
        BatchNormState& bn = *params.bn;
        ag::Value g = bind(bn.gamma), b = bind(bn.beta);
        if (train_mode)
            h = tape.batchnorm_train(h, g, b, &bn.running_mean, &bn.running_var, bn.eps, bn.momentum,
                                     update_running);
        else
            h = tape.batchnorm_eval(h, g, b, bn.running_mean, bn.running_var, bn.eps);
    }
    return h;
}

Array encode_eval(const EncoderParams& params, const Array& x) {
    if (x.rank() != 2 || x.cols() != params.config.input_dim)
        throw InvalidArgument("encode_eval: input shape " + x.shape_str() + " does not match input_dim " +
                              std::to_string(params.config.input_dim));
    const double slope = params.config.activation == Activation::kLeakyRelu ? params.config.leaky_slope : 0.0;
    Array h = x;
    const std::size_t n_layers = params.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Array& w = params.layers[l].w.value;
        const Array& b = params.layers[l].b.value;
        Array out({h.rows(), w.cols()});
        for (int i = 0; i < h.rows(); ++i)
            for (int kk = 0; kk < w.rows(); ++kk) {
                const double hik = h.at(i, kk);
                if (hik == 0.0) continue;
                for (int j = 0; j < w.cols(); ++j) out.at(i, j) += hik * w.at(kk, j);
            }
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < out.cols(); ++j) out.at(i, j) += b.v[static_cast<std::size_t>(j)];
        if (l + 1 < n_layers)
            for (double& v : out.v) v = v > 0.0 ? v : slope * v;
        h = std::move(out);
    }
    if (params.bn) {
        const BatchNormState& bn = *params.bn;
        for (int j = 0; j < h.cols(); ++j) {
            const double invstd = 1.0 / std::sqrt(bn.running_var.v[static_cast<std::size_t>(j)] + bn.eps);
            const double mean = bn.running_mean.v[static_cast<std::size_t>(j)];
            const double g = bn.gamma.value.v[static_cast<std::size_t>(j)];
            const double b = bn.beta.value.v[static_cast<std::size_t>(j)];
            for (int i = 0; i < h.rows(); ++i) h.at(i, j) = g * (h.at(i, j) - mean) * invstd + b;
        }
    }
    return h;
}

}  // namespace postnet
