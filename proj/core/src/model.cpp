#include "postnet/model.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "postnet/errors.hpp"
#include "postnet/rng.hpp"

namespace postnet {

using ordered_json = nlohmann::ordered_json;

std::string density_kind_name(DensityKind k) {
    switch (k) {
        case DensityKind::kRadial: return "radial";
        case DensityKind::kMoG: return "mog";
        case DensityKind::kLinear: return "linear";
    }
    return "radial";
}

DensityKind density_kind_from_name(const std::string& s) {
    if (s == "radial") return DensityKind::kRadial;
    if (s == "mog") return DensityKind::kMoG;
    if (s == "linear") return DensityKind::kLinear;
    throw DataError("unknown density kind '" + s + "'");
}

LinearEvidenceHead init_evidence_head(int latent_dim, int classes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "evidence_init"));
    const double bound = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    Array w({latent_dim, classes});
    for (double& x : w.v) x = rng.uniform(-bound, bound);
    return {ag::Param("evid.w", std::move(w)), ag::Param("evid.b", Array({classes}))};
}

Array PosteriorModel::class_log_densities(const Array& z) const {
    const int k = num_classes();
    const int b = z.rows();
    Array out({b, k});
    if (density_kind == DensityKind::kRadial) {
        for (int c = 0; c < k; ++c) {
            const auto lp = radial_log_density_eval(flows[static_cast<std::size_t>(c)], z);
            for (int i = 0; i < b; ++i) out.at(i, c) = lp[static_cast<std::size_t>(i)];
        }
    } else if (density_kind == DensityKind::kMoG) {
        for (int c = 0; c < k; ++c) {
            const auto lp = mog_log_density_eval(mogs[static_cast<std::size_t>(c)], z);
            for (int i = 0; i < b; ++i) out.at(i, c) = lp[static_cast<std::size_t>(i)];
        }
    } else {
        throw InvalidArgument("class_log_densities: the linear evidence head is not a density");
    }
    return out;
}

Array PosteriorModel::class_densities(const Array& z) const {
    Array lp = class_log_densities(z);
    // -inf maps to 0; the upper clamp keeps absurdly peaked densities finite.
    for (double& v : lp.v) v = std::exp(std::min(v, 690.0));
    return lp;
}

DirichletBatch PosteriorModel::posterior(const Array& x_scaled) const {
    const Array z = encode_eval(encoder, x_scaled);
    const int b = z.rows(), k = num_classes();
    if (density_kind == DensityKind::kLinear) {
        DirichletBatch out;
        out.beta_prior = beta_prior;
        out.alpha = Array({b, k});
        out.beta = Array({b, k});
        const Array& w = evidence.w.value;
        const Array& bias = evidence.b.value;
        for (int i = 0; i < b; ++i)
            for (int c = 0; c < k; ++c) {
                double logit = bias.v[static_cast<std::size_t>(c)];
                for (int j = 0; j < z.cols(); ++j) logit += z.at(i, j) * w.at(j, c);
                const double beta = std::exp(std::min(logit, 700.0));
                out.beta.at(i, c) = beta;
                out.alpha.at(i, c) = beta_prior[static_cast<std::size_t>(c)] + beta;
            }
        return out;
    }
    return posterior_params(class_densities(z), counts, beta_prior);
}

namespace {

ordered_json param_json(const ag::Param& p) { return ordered_json(p.value.v); }

void load_values(ag::Param& p, const ordered_json& j) {
    const auto xs = j.get<std::vector<double>>();
    if (xs.size() != p.value.v.size()) throw DataError("model archive: size mismatch for " + p.name);
    p.value.v = xs;
}

}  // namespace

ordered_json model_to_json(const PosteriorModel& m) {
    ordered_json j;
    j["format_version"] = 1;
    j["seed"] = m.seed;
    if (!m.config_echo.empty())
        j["train_config"] = ordered_json::parse(m.config_echo);
    else
        j["train_config"] = nullptr;
    j["class_names"] = m.class_names;
    j["class_counts"] = m.counts.n_c;
    j["beta_prior"] = m.beta_prior;
    j["scaler"] = {{"min", m.scaler.min}, {"max", m.scaler.max}};

    const EncoderConfig& ec = m.encoder.config;
    ordered_json enc;
    enc["input_dim"] = ec.input_dim;
    enc["hidden_dims"] = ec.hidden_dims;
    enc["latent_dim"] = ec.latent_dim;
    enc["activation"] = ec.activation == Activation::kLeakyRelu ? "leaky_relu" : "relu";
    enc["leaky_slope"] = ec.leaky_slope;
    enc["final_batchnorm"] = ec.final_batchnorm;
    enc["seed"] = ec.seed;
    ordered_json layers = ordered_json::array();
    for (const auto& l : m.encoder.layers) layers.push_back({{"w", param_json(l.w)}, {"b", param_json(l.b)}});
    enc["layers"] = layers;
    if (m.encoder.bn) {
        enc["batchnorm"] = {{"gamma", param_json(m.encoder.bn->gamma)},
                            {"beta", param_json(m.encoder.bn->beta)},
                            {"running_mean", m.encoder.bn->running_mean.v},
                            {"running_var", m.encoder.bn->running_var.v}};
    }
    j["encoder"] = enc;

    ordered_json den;
    den["kind"] = density_kind_name(m.density_kind);
    if (m.density_kind == DensityKind::kRadial) {
        ordered_json per_class = ordered_json::array();
        for (const auto& f : m.flows) {
            ordered_json stack = ordered_json::array();
            for (const auto& l : f.layers)
                stack.push_back({{"z0", param_json(l.z0)},
                                 {"alpha_raw", l.alpha_raw.value.v[0]},
                                 {"beta_raw", l.beta_raw.value.v[0]}});
            per_class.push_back(stack);
        }
        den["flows"] = per_class;
    } else if (m.density_kind == DensityKind::kMoG) {
        ordered_json per_class = ordered_json::array();
        for (const auto& g : m.mogs) {
            ordered_json mog;
            mog["weight_logits"] = param_json(g.weight_logits);
            ordered_json comps = ordered_json::array();
            for (const auto& c : g.components)
                comps.push_back({{"mean", param_json(c.mean)}, {"log_var", param_json(c.log_var)}});
            mog["components"] = comps;
            per_class.push_back(mog);
        }
        den["mogs"] = per_class;
    } else {
        den["evidence"] = {{"w", param_json(m.evidence.w)}, {"b", param_json(m.evidence.b)}};
    }
    j["density"] = den;
    return j;
}

PosteriorModel model_from_json(const ordered_json& j) {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
        throw DataError("model archive: unsupported format version");

    PosteriorModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("train_config") && !j["train_config"].is_null()) m.config_echo = j["train_config"].dump();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.counts.n_c = j.at("class_counts").get<std::vector<double>>();
    m.beta_prior = j.at("beta_prior").get<std::vector<double>>();
    m.scaler.min = j.at("scaler").at("min").get<std::vector<double>>();
    m.scaler.max = j.at("scaler").at("max").get<std::vector<double>>();

    const auto& enc = j.at("encoder");
    EncoderConfig ec;
    ec.input_dim = enc.at("input_dim").get<int>();
    ec.hidden_dims = enc.at("hidden_dims").get<std::vector<int>>();
    ec.latent_dim = enc.at("latent_dim").get<int>();
    ec.activation = enc.at("activation").get<std::string>() == "leaky_relu" ? Activation::kLeakyRelu
                                                                            : Activation::kRelu;
    ec.leaky_slope = enc.at("leaky_slope").get<double>();
    ec.final_batchnorm = enc.at("final_batchnorm").get<bool>();
    ec.seed = enc.at("seed").get<std::uint64_t>();
    m.encoder = init_encoder(ec);
    const auto& layers = enc.at("layers");
    if (layers.size() != m.encoder.layers.size()) throw DataError("model archive: layer count mismatch");
    for (std::size_t l = 0; l < m.encoder.layers.size(); ++l) {
        load_values(m.encoder.layers[l].w, layers[l].at("w"));
        load_values(m.encoder.layers[l].b, layers[l].at("b"));
    }
    if (ec.final_batchnorm) {
        const auto& bn = enc.at("batchnorm");
        load_values(m.encoder.bn->gamma, bn.at("gamma"));
        load_values(m.encoder.bn->beta, bn.at("beta"));
        m.encoder.bn->running_mean.v = bn.at("running_mean").get<std::vector<double>>();
        m.encoder.bn->running_var.v = bn.at("running_var").get<std::vector<double>>();
        if (m.encoder.bn->running_mean.v.size() != static_cast<std::size_t>(ec.latent_dim))
            throw DataError("model archive: running stats size mismatch");
    }

    const auto& den = j.at("density");
    m.density_kind = density_kind_from_name(den.at("kind").get<std::string>());
    const int k = static_cast<int>(m.class_names.size());
    if (m.density_kind == DensityKind::kRadial) {
        const auto& per_class = den.at("flows");
        if (static_cast<int>(per_class.size()) != k) throw DataError("model archive: flow count mismatch");
        for (const auto& stack : per_class) {
            RadialFlowStack f = init_radial_flow(ec.latent_dim, static_cast<int>(stack.size()), 0);
            for (std::size_t l = 0; l < f.layers.size(); ++l) {
                load_values(f.layers[l].z0, stack[l].at("z0"));
                f.layers[l].alpha_raw.value.v[0] = stack[l].at("alpha_raw").get<double>();
                f.layers[l].beta_raw.value.v[0] = stack[l].at("beta_raw").get<double>();
            }
            m.flows.push_back(std::move(f));
        }
    } else if (m.density_kind == DensityKind::kMoG) {
        const auto& per_class = den.at("mogs");
        if (static_cast<int>(per_class.size()) != k) throw DataError("model archive: mog count mismatch");
        for (const auto& mog : per_class) {
            const auto& comps = mog.at("components");
            MoGDensity g = init_mog(ec.latent_dim, static_cast<int>(comps.size()), 0);
            load_values(g.weight_logits, mog.at("weight_logits"));
            for (std::size_t ci = 0; ci < g.components.size(); ++ci) {
                load_values(g.components[ci].mean, comps[ci].at("mean"));
                load_values(g.components[ci].log_var, comps[ci].at("log_var"));
            }
            m.mogs.push_back(std::move(g));
        }
    } else {
        m.evidence = init_evidence_head(ec.latent_dim, k, 0);
        load_values(m.evidence.w, den.at("evidence").at("w"));
        load_values(m.evidence.b, den.at("evidence").at("b"));
    }
    return m;
}

void save_model(const PosteriorModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_model: cannot open " + path + " for writing");
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw DataError("save_model: write failed for " + path);
}

PosteriorModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_model: cannot open " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("load_model: invalid JSON in " + path + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const ordered_json::exception& e) {
        throw DataError("load_model: schema mismatch in " + path + ": " + e.what());
    }
}

}  // namespace postnet
