#pragma once

#include <vector>

#include "postnet/dirichlet.hpp"
#include "postnet/tape.hpp"

namespace postnet {

// Expected cross-entropy under Dir(alpha): psi(alpha_0) - psi(alpha_label),
// per sample. alpha is [B,K] on the tape.
ag::Value uce_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels);

// Dirichlet entropy per sample, differentiable w.r.t. alpha.
ag::Value dirichlet_entropy_term(ag::Tape& tape, ag::Value alpha);

// Mean over the batch of [UCE - entropy_weight * H(q)].
ag::Value bayesian_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels,
                        double entropy_weight);

// Plain cross-entropy on the Dirichlet mean: mean of -log(alpha_label/alpha_0).
ag::Value cross_entropy_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels);

// Closed-form counterparts on plain values; used for validation loss.
double uce_value(const DirichletParams& d, int label);
double bayesian_loss_value(const DirichletBatch& batch, const std::vector<int>& labels, double entropy_weight);
double cross_entropy_value(const DirichletBatch& batch, const std::vector<int>& labels);

// Adam with bias correction; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
public:
    Adam(std::vector<ag::Param*> params, double lr);

    void zero_grad();
    void step();
    int steps_taken() const { return t_; }
    double lr() const { return lr_; }

private:
    std::vector<ag::Param*> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    int t_ = 0;
};

}  // namespace postnet
