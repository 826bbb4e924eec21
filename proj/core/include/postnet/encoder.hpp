#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "postnet/array.hpp"
#include "postnet/tape.hpp"

namespace postnet {

enum class Activation { kRelu, kLeakyRelu };

struct EncoderConfig {
    int input_dim = 2;
    std::vector<int> hidden_dims = {64, 64, 64};
    int latent_dim = 6;
    Activation activation = Activation::kRelu;
    double leaky_slope = 0.01;
    bool final_batchnorm = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BatchNormState {
    ag::Param gamma;
    ag::Param beta;
    Array running_mean;
    Array running_var;
    double eps = 1e-5;
    double momentum = 0.1;
};

// The map f: input -> latent vector. Three hidden layers with activation,
// a final linear projection to the latent dimension, then batch
// normalization when enabled.
struct EncoderParams {
    EncoderConfig config;
    struct Layer {
        ag::Param w;  // [in, out]
        ag::Param b;  // [out]
    };
    std::vector<Layer> layers;
    std::optional<BatchNormState> bn;

    std::vector<ag::Param*> trainable_params();
};

EncoderParams init_encoder(const EncoderConfig& config);

// Differentiable forward on a tape. In train mode batch statistics are used
// (and folded into running stats when update_running is set); eval mode uses
// the stored running statistics. With trainable=false the weights enter the
// tape as constants.
ag::Value encode(ag::Tape& tape, EncoderParams& params, ag::Value x, bool train_mode,
                 bool trainable = true, bool update_running = true);

// Plain eval-mode forward used for inference and validation.
Array encode_eval(const EncoderParams& params, const Array& x);

}  // namespace postnet
