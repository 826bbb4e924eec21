#include "postnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "postnet/errors.hpp"
#include "postnet/loss.hpp"
#include "postnet/rng.hpp"

namespace postnet {

using ordered_json = nlohmann::ordered_json;

std::string train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::kJoint: return "joint";
        case TrainMode::kSequential: return "sequential";
        case TrainMode::kNoFlow: return "no_flow";
        case TrainMode::kNoBayesLoss: return "no_bayes_loss";
    }
    return "joint";
}

TrainMode train_mode_from_name(const std::string& s) {
    if (s == "joint") return TrainMode::kJoint;
    if (s == "sequential") return TrainMode::kSequential;
    if (s == "no_flow") return TrainMode::kNoFlow;
    if (s == "no_bayes_loss") return TrainMode::kNoBayesLoss;
    throw DataError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
    if (entropy_weight < 0.0) throw InvalidArgument("TrainConfig: entropy_weight must be >= 0");
    if (lr <= 0.0) throw InvalidArgument("TrainConfig: lr must be > 0");
    if (batch_size < 2) throw InvalidArgument("TrainConfig: batch_size must be >= 2");
    if (max_epochs < 1) throw InvalidArgument("TrainConfig: max_epochs must be >= 1");
    if (eval_every < 1) throw InvalidArgument("TrainConfig: eval_every must be >= 1");
    if (patience < 1) throw InvalidArgument("TrainConfig: patience must be >= 1");
    if (flow_length < 0) throw InvalidArgument("TrainConfig: flow_length must be >= 0");
    if (mog_components < 0) throw InvalidArgument("TrainConfig: mog_components must be >= 0");
    if (latent_dim < 1) throw InvalidArgument("TrainConfig: latent_dim must be >= 1");
    if (density_type == DensityKind::kLinear)
        throw InvalidArgument("TrainConfig: density_type must be radial or mog");
}

ordered_json train_config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["mode"] = train_mode_name(cfg.mode);
    j["density_type"] = density_kind_name(cfg.density_type);
    j["entropy_weight"] = cfg.entropy_weight;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["max_epochs"] = cfg.max_epochs;
    j["eval_every"] = cfg.eval_every;
    j["patience"] = cfg.patience;
    j["seed"] = cfg.seed;
    j["use_batchnorm"] = cfg.use_batchnorm;
    j["flow_length"] = cfg.flow_length;
    j["mog_components"] = cfg.mog_components;
    j["latent_dim"] = cfg.latent_dim;
    j["hidden_dims"] = cfg.hidden_dims;
    j["activation"] = cfg.activation == Activation::kLeakyRelu ? "leaky_relu" : "relu";
    j["leaky_slope"] = cfg.leaky_slope;
    return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
    static const std::set<std::string> known = {
        "mode", "density_type", "entropy_weight", "lr", "batch_size", "max_epochs", "eval_every",
        "patience", "seed", "use_batchnorm", "flow_length", "mog_components", "latent_dim",
        "hidden_dims", "activation", "leaky_slope"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw DataError("train config: unknown key '" + it.key() + "'");

    TrainConfig cfg;
    try {
        if (j.contains("mode")) cfg.mode = train_mode_from_name(j["mode"].get<std::string>());
        if (j.contains("density_type"))
            cfg.density_type = density_kind_from_name(j["density_type"].get<std::string>());
        if (j.contains("entropy_weight")) cfg.entropy_weight = j["entropy_weight"].get<double>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
        if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<int>();
        if (j.contains("eval_every")) cfg.eval_every = j["eval_every"].get<int>();
        if (j.contains("patience")) cfg.patience = j["patience"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("use_batchnorm")) cfg.use_batchnorm = j["use_batchnorm"].get<bool>();
        if (j.contains("flow_length")) cfg.flow_length = j["flow_length"].get<int>();
        if (j.contains("mog_components")) cfg.mog_components = j["mog_components"].get<int>();
        if (j.contains("latent_dim")) cfg.latent_dim = j["latent_dim"].get<int>();
        if (j.contains("hidden_dims")) cfg.hidden_dims = j["hidden_dims"].get<std::vector<int>>();
        if (j.contains("activation"))
            cfg.activation = j["activation"].get<std::string>() == "leaky_relu" ? Activation::kLeakyRelu
                                                                                : Activation::kRelu;
        if (j.contains("leaky_slope")) cfg.leaky_slope = j["leaky_slope"].get<double>();
    } catch (const ordered_json::exception& e) {
        throw DataError(std::string("train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

Array take_rows(const Array& x, const std::vector<int>& idx, int from, int to) {
    Array out({to - from, x.cols()});
    for (int i = from; i < to; ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i - from, j) = x.at(idx[static_cast<std::size_t>(i)], j);
    return out;
}

struct Snapshot {
    std::vector<std::vector<double>> values;
    std::vector<double> running_mean, running_var;
};

Snapshot take_snapshot(const std::vector<ag::Param*>& params, const EncoderParams& enc) {
    Snapshot s;
    s.values.reserve(params.size());
    for (const ag::Param* p : params) s.values.push_back(p->value.v);
    if (enc.bn) {
        s.running_mean = enc.bn->running_mean.v;
        s.running_var = enc.bn->running_var.v;
    }
    return s;
}

void restore_snapshot(const Snapshot& s, const std::vector<ag::Param*>& params, EncoderParams& enc) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.v = s.values[i];
    if (enc.bn) {
        enc.bn->running_mean.v = s.running_mean;
        enc.bn->running_var.v = s.running_var;
    }
}

// Shared training loop. When frozen_encoder is set the encoder is used in
// eval mode with precomputed latents and only the density parameters train.
TrainResult train_core(const LabeledDataset& train_ds, const LabeledDataset& val_ds, const TrainConfig& cfg,
                       EncoderParams encoder, bool frozen_encoder) {
    const int k = train_ds.num_classes();
    const int n = train_ds.size();

    PosteriorModel m;
    m.encoder = std::move(encoder);
    m.counts.n_c.assign(static_cast<std::size_t>(k), 0.0);
    for (int y : train_ds.y) m.counts.n_c[static_cast<std::size_t>(y)] += 1.0;
    m.beta_prior.assign(static_cast<std::size_t>(k), 1.0);
    m.class_names = train_ds.class_names;
    m.seed = cfg.seed;
    m.config_echo = train_config_to_json(cfg).dump();

    if (cfg.mode == TrainMode::kNoFlow) {
        m.density_kind = DensityKind::kLinear;
        m.evidence = init_evidence_head(cfg.latent_dim, k, derive_seed(cfg.seed, "evidence"));
    } else if (cfg.density_type == DensityKind::kRadial) {
        m.density_kind = DensityKind::kRadial;
        for (int c = 0; c < k; ++c)
            m.flows.push_back(init_radial_flow(cfg.latent_dim, cfg.flow_length,
                                               derive_seed(cfg.seed, "flow", static_cast<std::uint64_t>(c))));
    } else {
        m.density_kind = DensityKind::kMoG;
        const int comps = cfg.mog_components > 0 ? cfg.mog_components : k;
        for (int c = 0; c < k; ++c)
            m.mogs.push_back(
                init_mog(cfg.latent_dim, comps, derive_seed(cfg.seed, "mog", static_cast<std::uint64_t>(c))));
    }

    std::vector<ag::Param*> params;
    if (!frozen_encoder)
        for (ag::Param* p : m.encoder.trainable_params()) params.push_back(p);
    if (m.density_kind == DensityKind::kLinear) {
        for (ag::Param* p : m.evidence.trainable_params()) params.push_back(p);
    } else if (m.density_kind == DensityKind::kRadial) {
        for (auto& f : m.flows)
            for (ag::Param* p : f.trainable_params()) params.push_back(p);
    } else {
        for (auto& g : m.mogs)
            for (ag::Param* p : g.trainable_params()) params.push_back(p);
    }
    Adam adam(params, cfg.lr);

    std::optional<Array> frozen_latents;
    if (frozen_encoder) frozen_latents = encode_eval(m.encoder, train_ds.X);
    const Array& source = frozen_encoder ? *frozen_latents : train_ds.X;

    auto build_alpha = [&](ag::Tape& tape, const Array& batch) -> ag::Value {
        ag::Value z;
        if (frozen_encoder)
            z = tape.input(batch);
        else
            z = encode(tape, m.encoder, tape.input(batch), /*train_mode=*/true, /*trainable=*/true,
                       /*update_running=*/true);
        if (m.density_kind == DensityKind::kLinear) {
            ag::Value logits =
                tape.add_rowvec(tape.matmul(z, tape.param(m.evidence.w)), tape.param(m.evidence.b));
            return tape.add_rowvec(tape.exp_fn(logits), tape.input(Array::vec(m.beta_prior)));
        }
        std::vector<ag::Value> cols;
        cols.reserve(static_cast<std::size_t>(k));
        for (int c = 0; c < k; ++c) {
            ag::Value lp = m.density_kind == DensityKind::kRadial
                               ? radial_log_density(tape, m.flows[static_cast<std::size_t>(c)], z)
                               : mog_log_density(tape, m.mogs[static_cast<std::size_t>(c)], z);
            ag::Value beta_c = tape.scale_const(tape.clamp_min(tape.exp_fn(lp), kDensityFloor),
                                                m.counts.n_c[static_cast<std::size_t>(c)]);
            cols.push_back(tape.add_const(beta_c, m.beta_prior[static_cast<std::size_t>(c)]));
        }
        return tape.stack_cols(cols);
    };

    const bool bayes = cfg.mode != TrainMode::kNoBayesLoss;
    auto validation_loss = [&]() {
        const DirichletBatch b = m.posterior(val_ds.X);
        return bayes ? bayesian_loss_value(b, val_ds.y, cfg.entropy_weight)
                     : cross_entropy_value(b, val_ds.y);
    };

    TrainResult res;
    double best = std::numeric_limits<double>::infinity();
    int fails = 0;
    std::optional<Snapshot> best_snapshot;

    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(idx);

        double loss_acc = 0.0;
        int count = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            if (end - start < 2) continue;  // batchnorm needs at least two rows
            Array xb = take_rows(source, idx, start, end);
            std::vector<int> yb(static_cast<std::size_t>(end - start));
            for (int i = start; i < end; ++i)
                yb[static_cast<std::size_t>(i - start)] = train_ds.y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];

            ag::Tape tape;
            ag::Value alpha = build_alpha(tape, xb);
            ag::Value loss = bayes ? bayesian_loss(tape, alpha, yb, cfg.entropy_weight)
                                   : cross_entropy_loss(tape, alpha, yb);
            const double lv = loss.data().v[0];
            if (!std::isfinite(lv))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            adam.zero_grad();
            tape.backward(loss);
            adam.step();
            loss_acc += lv * (end - start);
            count += end - start;
        }
        if (count == 0) throw InvalidArgument("train: no batch of size >= 2 could be formed");

        EpochRecord rec{epoch, loss_acc / count, std::nullopt};
        if (epoch % cfg.eval_every == 0) {
            const double vl = validation_loss();
            rec.val_loss = vl;
            if (vl < best) {
                best = vl;
                best_snapshot = take_snapshot(params, m.encoder);
                fails = 0;
            } else {
                ++fails;
            }
        }
        res.log.push_back(rec);
        res.epochs_run = epoch;
        if (fails >= cfg.patience) break;
    }

    if (best_snapshot) restore_snapshot(*best_snapshot, params, m.encoder);
    res.best_val_loss = best;
    res.model = std::move(m);
    return res;
}

}  // namespace

TrainResult train(const LabeledDataset& train_ds, const LabeledDataset& val_ds, const TrainConfig& cfg) {
    cfg.validate();
    train_ds.validate();
    val_ds.validate();
    if (train_ds.size() < 2) throw InvalidArgument("train: empty or degenerate training split");
    if (val_ds.size() < 1) throw InvalidArgument("train: empty validation split");
    if (train_ds.num_classes() < 2) throw InvalidArgument("train: need at least two classes");
    {
        std::set<int> seen(train_ds.y.begin(), train_ds.y.end());
        if (seen.size() < 2) throw InvalidArgument("train: single-class training data");
    }

    EncoderConfig ec;
    ec.input_dim = train_ds.dim();
    ec.hidden_dims = cfg.hidden_dims;
    ec.latent_dim = cfg.latent_dim;
    ec.activation = cfg.activation;
    ec.leaky_slope = cfg.leaky_slope;
    ec.final_batchnorm = cfg.use_batchnorm;
    ec.seed = derive_seed(cfg.seed, "encoder");

    if (cfg.mode == TrainMode::kSequential) {
        TrainConfig pre = cfg;
        pre.mode = TrainMode::kNoFlow;
        TrainResult stage1 = train(train_ds, val_ds, pre);
        return train_core(train_ds, val_ds, cfg, std::move(stage1.model.encoder), /*frozen_encoder=*/true);
    }
    return train_core(train_ds, val_ds, cfg, init_encoder(ec), /*frozen_encoder=*/false);
}

TrainResult train_with_lr_grid(const LabeledDataset& train_ds, const LabeledDataset& val_ds, TrainConfig cfg,
                               const std::vector<double>& lrs) {
    if (lrs.empty()) throw InvalidArgument("train_with_lr_grid: empty grid");
    std::vector<double> sorted = lrs;
    std::sort(sorted.begin(), sorted.end());
    std::optional<TrainResult> best;
    for (double lr : sorted) {
        cfg.lr = lr;
        TrainResult r = train(train_ds, val_ds, cfg);
        if (!best || r.best_val_loss < best->best_val_loss) best = std::move(r);
    }
    return std::move(*best);
}

PipelineResult run_training_pipeline(const LabeledDataset& full, const TrainConfig& cfg,
                                     std::array<double, 3> ratios) {
    full.validate();
    PipelineResult out;
    out.raw_splits = split(full, ratios, cfg.seed);

    LabeledDataset train_scaled = out.raw_splits.train;
    LabeledDataset val_scaled = out.raw_splits.val;
    LabeledDataset test_scaled = out.raw_splits.test;
    MinMaxScaler scaler = fit_apply_minmax(train_scaled, val_scaled, test_scaled);

    out.result = train(train_scaled, val_scaled, cfg);
    out.result.model.scaler = std::move(scaler);
    return out;
}

}  // namespace postnet
