#include "postnet/loss.hpp"

#include <cmath>

#include "postnet/errors.hpp"
#include "postnet/special.hpp"

namespace postnet {

namespace {

void check_labels(const Array& alpha, const std::vector<int>& labels) {
    if (alpha.rank() != 2) throw InvalidArgument("loss: alpha must be [B,K]");
    if (static_cast<int>(labels.size()) != alpha.rows())
        throw InvalidArgument("loss: one label per row required");
    for (int y : labels)
        if (y < 0 || y >= alpha.cols()) throw InvalidArgument("loss: label out of range");
}

}  // namespace

ag::Value uce_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels) {
    check_labels(alpha.data(), labels);
    ag::Value alpha0 = tape.row_sum(alpha);
    ag::Value a_label = tape.gather_cols(alpha, labels);
    return tape.sub(tape.digamma_fn(alpha0), tape.digamma_fn(a_label));
}

ag::Value dirichlet_entropy_term(ag::Tape& tape, ag::Value alpha) {
    const int k = alpha.data().cols();
    ag::Value alpha0 = tape.row_sum(alpha);
    ag::Value log_beta = tape.sub(tape.row_sum(tape.lgamma_fn(alpha)), tape.lgamma_fn(alpha0));
    ag::Value t2 = tape.mul(tape.add_const(alpha0, -static_cast<double>(k)), tape.digamma_fn(alpha0));
    ag::Value t3 = tape.row_sum(tape.mul(tape.add_const(alpha, -1.0), tape.digamma_fn(alpha)));
    return tape.sub(tape.add(log_beta, t2), t3);
}

ag::Value bayesian_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels,
                        double entropy_weight) {
    const int b = alpha.data().rows();
    if (b == 0) throw InvalidArgument("bayesian_loss: empty batch");
    ag::Value per_sample = uce_loss(tape, alpha, labels);
    if (entropy_weight != 0.0)
        per_sample = tape.sub(per_sample, tape.scale_const(dirichlet_entropy_term(tape, alpha), entropy_weight));
    return tape.scale_const(tape.sum(per_sample), 1.0 / b);
}

ag::Value cross_entropy_loss(ag::Tape& tape, ag::Value alpha, const std::vector<int>& labels) {
    const int b = alpha.data().rows();
    if (b == 0) throw InvalidArgument("cross_entropy_loss: empty batch");
    check_labels(alpha.data(), labels);
    ag::Value alpha0 = tape.row_sum(alpha);
    ag::Value a_label = tape.gather_cols(alpha, labels);
    ag::Value per_sample = tape.sub(tape.log_fn(alpha0), tape.log_fn(a_label));
    return tape.scale_const(tape.sum(per_sample), 1.0 / b);
}

double uce_value(const DirichletParams& d, int label) {
    if (label < 0 || label >= d.num_classes()) throw InvalidArgument("uce_value: label out of range");
    return digamma(d.alpha0()) - digamma(d.alpha[static_cast<std::size_t>(label)]);
}

double bayesian_loss_value(const DirichletBatch& batch, const std::vector<int>& labels,
                           double entropy_weight) {
    const int b = batch.batch();
    if (b == 0) throw InvalidArgument("bayesian_loss_value: empty batch");
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
        const DirichletParams d = batch.row(i);
        acc += uce_value(d, labels[static_cast<std::size_t>(i)]);
        if (entropy_weight != 0.0) acc -= entropy_weight * dirichlet_entropy(d);
    }
    return acc / b;
}

double cross_entropy_value(const DirichletBatch& batch, const std::vector<int>& labels) {
    const int b = batch.batch();
    if (b == 0) throw InvalidArgument("cross_entropy_value: empty batch");
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= batch.num_classes()) throw InvalidArgument("cross_entropy_value: label out of range");
        acc += std::log(batch.alpha0(i)) - std::log(batch.alpha.at(i, y));
    }
    return acc / b;
}

Adam::Adam(std::vector<ag::Param*> params, double lr) : params_(std::move(params)), lr_(lr) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ag::Param* p : params_) {
        m_.emplace_back(p->value.v.size(), 0.0);
        v_.emplace_back(p->value.v.size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (ag::Param* p : params_) p->zero_grad();
}

void Adam::step() {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        ag::Param& p = *params_[pi];
        if (p.grad.v.size() != p.value.v.size()) throw InvalidArgument("Adam: grad/value shape mismatch");
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p.value.v.size(); ++i) {
            const double g = p.grad.v[i];
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value.v[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

}  // namespace postnet
