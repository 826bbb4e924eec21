#include "postnet/dirichlet.hpp"

#include <cmath>
#include <string>

#include "postnet/errors.hpp"
#include "postnet/special.hpp"

namespace postnet {

DirichletParams DirichletBatch::row(int i) const {
    DirichletParams d;
    const int k = num_classes();
    d.alpha.resize(static_cast<std::size_t>(k));
    d.beta.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        d.alpha[static_cast<std::size_t>(c)] = alpha.at(i, c);
        d.beta[static_cast<std::size_t>(c)] = beta.at(i, c);
    }
    d.beta_prior = beta_prior;
    return d;
}

DirichletBatch posterior_params(const Array& densities, const ClassCounts& counts,
                                const std::vector<double>& beta_prior) {
    const int k = counts.num_classes();
    if (densities.rank() != 2 || densities.cols() != k)
        throw InvalidArgument("posterior_params: densities must be [B,K]");
    if (static_cast<int>(beta_prior.size()) != k)
        throw InvalidArgument("posterior_params: prior size mismatch");
    for (double p : beta_prior)
        if (!(p > 0.0)) throw InvalidArgument("posterior_params: prior must be > 0");
    DirichletBatch out;
    out.beta_prior = beta_prior;
    out.alpha = Array(densities.shape);
    out.beta = Array(densities.shape);
    for (int i = 0; i < densities.rows(); ++i)
        for (int c = 0; c < k; ++c) {
            const double d = densities.at(i, c);
            if (d < 0.0 || std::isnan(d)) throw InvalidArgument("posterior_params: negative density");
            const double b = counts.n_c[static_cast<std::size_t>(c)] * std::max(d, kDensityFloor);
            out.beta.at(i, c) = b;
            out.alpha.at(i, c) = beta_prior[static_cast<std::size_t>(c)] + b;
        }
    return out;
}

std::vector<double> dirichlet_mean(const DirichletParams& d) {
    const double a0 = d.alpha0();
    std::vector<double> p(d.alpha.size());
    for (std::size_t c = 0; c < d.alpha.size(); ++c) p[c] = d.alpha[c] / a0;
    return p;
}

int predict_class(const DirichletParams& d) {
    int best = 0;
    for (std::size_t c = 1; c < d.alpha.size(); ++c)
        if (d.alpha[c] > d.alpha[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

double dirichlet_var_cov(const DirichletParams& d, int c, int c2) {
    const int k = d.num_classes();
    if (c < 0 || c >= k || c2 < 0 || c2 >= k) throw InvalidArgument("dirichlet_var_cov: index out of range");
    const double a0 = d.alpha0();
    const double denom = a0 * a0 * (a0 + 1.0);
    const double ac = d.alpha[static_cast<std::size_t>(c)];
    if (c == c2) return ac * (a0 - ac) / denom;
    return -ac * d.alpha[static_cast<std::size_t>(c2)] / denom;
}

double dirichlet_log_pdf(const std::vector<double>& p, const DirichletParams& d) {
    if (p.size() != d.alpha.size()) throw InvalidArgument("dirichlet_log_pdf: dimension mismatch");
    double sum = 0.0;
    for (double x : p) {
        if (!(x > 0.0)) throw InvalidArgument("dirichlet_log_pdf: p must be interior to the simplex");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw InvalidArgument("dirichlet_log_pdf: coordinates must sum to 1");
    double out = log_gamma(d.alpha0());
    for (std::size_t c = 0; c < p.size(); ++c) {
        out -= log_gamma(d.alpha[c]);
        out += (d.alpha[c] - 1.0) * std::log(p[c]);
    }
    return out;
}

double dirichlet_entropy(const std::vector<double>& alpha) {
    const int k = static_cast<int>(alpha.size());
    double a0 = 0.0;
    for (double a : alpha) a0 += a;
    double log_beta = -log_gamma(a0);
    for (double a : alpha) log_beta += log_gamma(a);
    double h = log_beta + (a0 - k) * digamma(a0);
    for (double a : alpha) h -= (a - 1.0) * digamma(a);
    return h;
}

double dirichlet_entropy(const DirichletParams& d) { return dirichlet_entropy(d.alpha); }

double categorical_entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p) {
        if (x < 0.0) throw InvalidArgument("categorical_entropy: negative probability");
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

}  // namespace postnet
