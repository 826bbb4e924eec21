#pragma once

#include <vector>

#include "postnet/array.hpp"

namespace postnet {

// Densities below this floor are clamped before scaling by the class counts,
// so alpha stays strictly above the prior in a differentiable way even for
// far-field inputs whose density underflows to an exact zero.
inline constexpr double kDensityFloor = 1e-300;

// Ground-truth observations per class from the training split; the total
// acts as the certainty budget the normalized densities distribute.
struct ClassCounts {
    std::vector<double> n_c;

    double total() const {
        double t = 0.0;
        for (double x : n_c) t += x;
        return t;
    }
    int num_classes() const { return static_cast<int>(n_c.size()); }
};

// Posterior concentration for one sample: alpha_c = beta_prior_c + beta_c.
struct DirichletParams {
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> beta_prior;

    double alpha0() const {
        double s = 0.0;
        for (double a : alpha) s += a;
        return s;
    }
    int num_classes() const { return static_cast<int>(alpha.size()); }
};

// Batch of posteriors sharing one prior.
struct DirichletBatch {
    Array alpha;  // [B,K]
    Array beta;   // [B,K]
    std::vector<double> beta_prior;

    int batch() const { return alpha.rows(); }
    int num_classes() const { return alpha.cols(); }
    double alpha0(int i) const {
        double s = 0.0;
        for (int c = 0; c < alpha.cols(); ++c) s += alpha.at(i, c);
        return s;
    }
    DirichletParams row(int i) const;
};

// alpha_c = beta_prior_c + N_c * max(density_c, floor), per sample.
DirichletBatch posterior_params(const Array& densities, const ClassCounts& counts,
                                const std::vector<double>& beta_prior);

std::vector<double> dirichlet_mean(const DirichletParams& d);

// argmax of the mean (equivalently of alpha); ties break to the lowest index.
int predict_class(const DirichletParams& d);

// Var(p_c) when c == c2, Cov(p_c, p_c2) otherwise.
double dirichlet_var_cov(const DirichletParams& d, int c, int c2);

// log density of Dir(alpha) at p; p must lie on the simplex interior
// (coordinate sum within 1e-9 of one).
double dirichlet_log_pdf(const std::vector<double>& p, const DirichletParams& d);

// H(q) = log B(alpha) + (alpha0 - K) psi(alpha0) - sum_c (alpha_c - 1) psi(alpha_c)
double dirichlet_entropy(const DirichletParams& d);
double dirichlet_entropy(const std::vector<double>& alpha);

// -sum p log p with 0 log 0 = 0.
double categorical_entropy(const std::vector<double>& p);

}  // namespace postnet
