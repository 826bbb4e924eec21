#pragma once

#include <cstdint>
#include <vector>

#include "postnet/array.hpp"
#include "postnet/tape.hpp"

namespace postnet {

// One radial layer. Effective parameters are alpha = softplus(alpha_raw) > 0
// and beta_hat = -alpha + softplus(beta_raw) > -alpha, which makes the map
// z -> z + beta_hat * h(alpha, r) * (z - z0), h = 1/(alpha + r), r = |z - z0|,
// injective for every parameter value.
struct RadialLayer {
    ag::Param z0;         // [H]
    ag::Param alpha_raw;  // [1]
    ag::Param beta_raw;   // [1]
};

// A stack of radial layers over a standard-normal base on R^H. The stack is
// read in the normalizing direction: log_density applies the layers to a
// latent point and accumulates the log-Jacobians; sampling runs the inverse.
struct RadialFlowStack {
    int latent_dim = 2;
    std::vector<RadialLayer> layers;

    std::vector<ag::Param*> trainable_params();
};

RadialFlowStack init_radial_flow(int latent_dim, int length, std::uint64_t seed);

// log p(z) for a batch, differentiable w.r.t. z and the flow parameters.
ag::Value radial_log_density(ag::Tape& tape, RadialFlowStack& flow, ag::Value z, bool trainable = true);

// Plain (non-tape) evaluation.
std::vector<double> radial_log_density_eval(const RadialFlowStack& flow, const Array& z);

// Push n standard-normal draws through the generative direction of the stack
// (each layer inverted by a scalar root-find on the radius, bisection to
// 1e-12). Deterministic per seed.
Array flow_sample(const RadialFlowStack& flow, int n, std::uint64_t seed);

// Map a batch of latent points to the base space, also returning the summed
// log-Jacobian per row. Exposed for round-trip checks.
void radial_normalize(const RadialFlowStack& flow, const Array& z, Array* base, std::vector<double>* log_det);

// Diagonal-covariance mixture of Gaussians on the latent space.
struct MoGComponent {
    ag::Param mean;     // [H]
    ag::Param log_var;  // [H]
};

struct MoGDensity {
    int latent_dim = 2;
    ag::Param weight_logits;  // [J]
    std::vector<MoGComponent> components;

    std::vector<ag::Param*> trainable_params();
};

MoGDensity init_mog(int latent_dim, int components, std::uint64_t seed);

ag::Value mog_log_density(ag::Tape& tape, MoGDensity& mog, ag::Value z, bool trainable = true);
std::vector<double> mog_log_density_eval(const MoGDensity& mog, const Array& z);

}  // namespace postnet
