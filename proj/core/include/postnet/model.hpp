#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "postnet/data.hpp"
#include "postnet/dirichlet.hpp"
#include "postnet/encoder.hpp"
#include "postnet/flow.hpp"

namespace postnet {

enum class DensityKind { kRadial, kMoG, kLinear };

std::string density_kind_name(DensityKind k);
DensityKind density_kind_from_name(const std::string& s);

// Evidence head used by the no-flow ablation: beta = exp(W z + b).
struct LinearEvidenceHead {
    ag::Param w;  // [H,K]
    ag::Param b;  // [K]

    std::vector<ag::Param*> trainable_params() { return {&w, &b}; }
};

LinearEvidenceHead init_evidence_head(int latent_dim, int classes, std::uint64_t seed);

// Trained posterior network: encoder, per-class latent densities, class
// counts, prior and the input scaler. All prediction paths are pure.
struct PosteriorModel {
    EncoderParams encoder;
    DensityKind density_kind = DensityKind::kRadial;
    std::vector<RadialFlowStack> flows;  // one per class when kRadial
    std::vector<MoGDensity> mogs;        // one per class when kMoG
    LinearEvidenceHead evidence;         // when kLinear
    ClassCounts counts;
    std::vector<double> beta_prior;
    MinMaxScaler scaler;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    std::string config_echo;  // JSON text of the training config

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int latent_dim() const { return encoder.config.latent_dim; }
    int input_dim() const { return encoder.config.input_dim; }

    // log P(z | c) for each class, on latent points. [B,K]
    Array class_log_densities(const Array& z) const;

    // exp of the above; entries are finite and >= 0 even for far-field z.
    Array class_densities(const Array& z) const;

    // Full eval-mode posterior on network-ready (already scaled) inputs.
    DirichletBatch posterior(const Array& x_scaled) const;

    Array latent(const Array& x_scaled) const { return encode_eval(encoder, x_scaled); }
};

// Human-readable archive with an explicit format version. Round-trips the
// model bit-exactly in eval mode.
void save_model(const PosteriorModel& model, const std::string& path);
PosteriorModel load_model(const std::string& path);

nlohmann::ordered_json model_to_json(const PosteriorModel& model);
PosteriorModel model_from_json(const nlohmann::ordered_json& j);

}  // namespace postnet
