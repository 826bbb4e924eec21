#include "postnet/tape.hpp"

#include <cmath>
#include <string>

#include "postnet/errors.hpp"
#include "postnet/special.hpp"

namespace postnet::ag {

const Array& Value::data() const {
    if (!valid()) throw InvalidArgument("Value: handle is not bound to a tape");
    return tape_->data(id_);
}

const Array& Tape::data(int id) const { return nodes_[static_cast<std::size_t>(id)].out; }

Value Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Tape::Node& Tape::node(Value v) { return nodes_[static_cast<std::size_t>(v.id())]; }
const Tape::Node& Tape::cnode(Value v) const { return nodes_[static_cast<std::size_t>(v.id())]; }

bool Tape::tracked_of(Value v) const { return cnode(v).tracked; }

void Tape::check_same_tape(Value v) const {
    if (v.tape() != this) throw InvalidArgument("Tape: value belongs to a different tape");
}

Value Tape::input(Array a) {
    Node n;
    n.op = Op::kInput;
    n.out = std::move(a);
    n.tracked = false;
    return push(std::move(n));
}

Value Tape::param(Param& p) {
    Node n;
    n.op = Op::kParam;
    n.out = p.value;
    n.tracked = true;
    n.bound = &p;
    return push(std::move(n));
}

Value Tape::matmul(Value a, Value b) {
    check_same_tape(a);
    check_same_tape(b);
    const Array& A = cnode(a).out;
    const Array& B = cnode(b).out;
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
        throw InvalidArgument("matmul: shape mismatch " + A.shape_str() + " * " + B.shape_str());
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Node nd;
    nd.op = Op::kMatmul;
    nd.parents = {a.id(), b.id()};
    nd.tracked = cnode(a).tracked || cnode(b).tracked;
    nd.out = Array({m, n});
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            const double ail = A.at(i, l);
            if (ail == 0.0) continue;
            for (int j = 0; j < n; ++j) nd.out.at(i, j) += ail * B.at(l, j);
        }
    return push(std::move(nd));
}

Value Tape::binary(Op op, Value a, Value b) {
    check_same_tape(a);
    check_same_tape(b);
    const Array& A = cnode(a).out;
    const Array& B = cnode(b).out;
    const bool a_scalar = A.is_scalar(), b_scalar = B.is_scalar();
    if (!(A.same_shape(B) || a_scalar || b_scalar))
        throw InvalidArgument("elementwise op: incompatible shapes " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = op;
    n.parents = {a.id(), b.id()};
    n.tracked = cnode(a).tracked || cnode(b).tracked;
    const Array& big = a_scalar && !b_scalar ? B : A;
    n.out = Array(big.shape);
    const std::int64_t sz = n.out.numel();
    for (std::int64_t i = 0; i < sz; ++i) {
        const double x = A.v[a_scalar ? 0 : i];
        const double y = B.v[b_scalar ? 0 : i];
        switch (op) {
            case Op::kAdd: n.out.v[i] = x + y; break;
            case Op::kSub: n.out.v[i] = x - y; break;
            case Op::kMul: n.out.v[i] = x * y; break;
            case Op::kDiv: n.out.v[i] = x / y; break;
            default: throw InvalidArgument("binary: bad op");
        }
    }
    return push(std::move(n));
}

Value Tape::add(Value a, Value b) { return binary(Op::kAdd, a, b); }
Value Tape::sub(Value a, Value b) { return binary(Op::kSub, a, b); }
Value Tape::mul(Value a, Value b) { return binary(Op::kMul, a, b); }
Value Tape::div(Value a, Value b) { return binary(Op::kDiv, a, b); }

static void require_mat_vec(const Array& M, const Array& V, const char* what) {
    if (M.rank() != 2 || V.rank() != 1 || M.cols() != V.shape[0])
        throw InvalidArgument(std::string(what) + ": need [B,H] with [H], got " + M.shape_str() + " and " +
                              V.shape_str());
}

Value Tape::add_rowvec(Value m, Value v) {
    check_same_tape(m);
    check_same_tape(v);
    const Array& M = cnode(m).out;
    const Array& V = cnode(v).out;
    require_mat_vec(M, V, "add_rowvec");
    Node n;
    n.op = Op::kAddRowVec;
    n.parents = {m.id(), v.id()};
    n.tracked = cnode(m).tracked || cnode(v).tracked;
    n.out = Array(M.shape);
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) n.out.at(i, j) = M.at(i, j) + V.v[j];
    return push(std::move(n));
}

Value Tape::sub_rowvec(Value m, Value v) {
    check_same_tape(m);
    check_same_tape(v);
    const Array& M = cnode(m).out;
    const Array& V = cnode(v).out;
    require_mat_vec(M, V, "sub_rowvec");
    Node n;
    n.op = Op::kSubRowVec;
    n.parents = {m.id(), v.id()};
    n.tracked = cnode(m).tracked || cnode(v).tracked;
    n.out = Array(M.shape);
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) n.out.at(i, j) = M.at(i, j) - V.v[j];
    return push(std::move(n));
}

Value Tape::mul_rowvec(Value m, Value v) {
    check_same_tape(m);
    check_same_tape(v);
    const Array& M = cnode(m).out;
    const Array& V = cnode(v).out;
    require_mat_vec(M, V, "mul_rowvec");
    Node n;
    n.op = Op::kMulRowVec;
    n.parents = {m.id(), v.id()};
    n.tracked = cnode(m).tracked || cnode(v).tracked;
    n.out = Array(M.shape);
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) n.out.at(i, j) = M.at(i, j) * V.v[j];
    return push(std::move(n));
}

Value Tape::scale_rows(Value m, Value s) {
    check_same_tape(m);
    check_same_tape(s);
    const Array& M = cnode(m).out;
    const Array& S = cnode(s).out;
    if (M.rank() != 2 || S.rank() != 1 || S.shape[0] != M.rows())
        throw InvalidArgument("scale_rows: need [B,H] with [B], got " + M.shape_str() + " and " + S.shape_str());
    Node n;
    n.op = Op::kScaleRows;
    n.parents = {m.id(), s.id()};
    n.tracked = cnode(m).tracked || cnode(s).tracked;
    n.out = Array(M.shape);
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) n.out.at(i, j) = M.at(i, j) * S.v[i];
    return push(std::move(n));
}

Value Tape::unary(Op op, Value x, double c0) {
    check_same_tape(x);
    const Array& X = cnode(x).out;
    Node n;
    n.op = op;
    n.c0 = c0;
    n.parents = {x.id()};
    n.tracked = cnode(x).tracked;
    n.out = Array(X.shape);
    const std::int64_t sz = X.numel();
    for (std::int64_t i = 0; i < sz; ++i) {
        const double v = X.v[i];
        double r = 0.0;
        switch (op) {
            case Op::kNeg: r = -v; break;
            case Op::kAddConst: r = v + c0; break;
            case Op::kScaleConst: r = v * c0; break;
            case Op::kClampMin: r = v < c0 ? c0 : v; break;
            case Op::kLeakyRelu: r = v > 0.0 ? v : c0 * v; break;
            case Op::kTanh: r = std::tanh(v); break;
            case Op::kExp: r = std::exp(v); break;
            case Op::kLog: r = std::log(v); break;
            case Op::kLog1p: r = std::log1p(v); break;
            case Op::kSqrt: r = std::sqrt(v); break;
            case Op::kSquare: r = v * v; break;
            case Op::kSoftplus: r = postnet::softplus(v); break;
            case Op::kReciprocal: r = 1.0 / v; break;
            case Op::kDigamma: r = postnet::digamma(v); break;
            case Op::kLgamma: r = postnet::log_gamma(v); break;
            default: throw InvalidArgument("unary: bad op");
        }
        n.out.v[i] = r;
    }
    return push(std::move(n));
}

Value Tape::neg(Value x) { return unary(Op::kNeg, x); }
Value Tape::add_const(Value x, double c) { return unary(Op::kAddConst, x, c); }
Value Tape::scale_const(Value x, double c) { return unary(Op::kScaleConst, x, c); }
Value Tape::clamp_min(Value x, double c) { return unary(Op::kClampMin, x, c); }
Value Tape::leaky_relu(Value x, double slope) {
    if (!(slope >= 0.0 && slope < 1.0)) throw InvalidArgument("leaky_relu: slope must be in [0,1)");
    return unary(Op::kLeakyRelu, x, slope);
}
Value Tape::tanh_fn(Value x) { return unary(Op::kTanh, x); }
Value Tape::exp_fn(Value x) { return unary(Op::kExp, x); }
Value Tape::log_fn(Value x) { return unary(Op::kLog, x); }
Value Tape::log1p_fn(Value x) { return unary(Op::kLog1p, x); }
Value Tape::sqrt_fn(Value x) { return unary(Op::kSqrt, x); }
Value Tape::square(Value x) { return unary(Op::kSquare, x); }
Value Tape::softplus_fn(Value x) { return unary(Op::kSoftplus, x); }
Value Tape::reciprocal(Value x) { return unary(Op::kReciprocal, x); }
Value Tape::digamma_fn(Value x) { return unary(Op::kDigamma, x); }
Value Tape::lgamma_fn(Value x) { return unary(Op::kLgamma, x); }

Value Tape::sum(Value x) {
    check_same_tape(x);
    Node n;
    n.op = Op::kSum;
    n.parents = {x.id()};
    n.tracked = cnode(x).tracked;
    double acc = 0.0;
    for (double v : cnode(x).out.v) acc += v;
    n.out = Array::scalar(acc);
    return push(std::move(n));
}

Value Tape::row_sum(Value m) {
    check_same_tape(m);
    const Array& M = cnode(m).out;
    if (M.rank() != 2) throw InvalidArgument("row_sum: need rank-2 input");
    Node n;
    n.op = Op::kRowSum;
    n.parents = {m.id()};
    n.tracked = cnode(m).tracked;
    n.out = Array({M.rows()});
    for (int i = 0; i < M.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < M.cols(); ++j) acc += M.at(i, j);
        n.out.v[static_cast<std::size_t>(i)] = acc;
    }
    return push(std::move(n));
}

Value Tape::logsumexp_all(Value v) {
    check_same_tape(v);
    const Array& V = cnode(v).out;
    if (V.numel() == 0) throw InvalidArgument("logsumexp_all: empty input");
    Node n;
    n.op = Op::kLogSumExpAll;
    n.parents = {v.id()};
    n.tracked = cnode(v).tracked;
    double mx = V.v[0];
    for (double x : V.v) mx = std::max(mx, x);
    double acc = 0.0;
    for (double x : V.v) acc += std::exp(x - mx);
    const double out = mx + std::log(acc);
    n.aux.resize(V.v.size());
    for (std::size_t i = 0; i < V.v.size(); ++i) n.aux[i] = std::exp(V.v[i] - out);
    n.out = Array::scalar(out);
    return push(std::move(n));
}

Value Tape::logsumexp_list(std::span<const Value> xs) {
    if (xs.empty()) throw InvalidArgument("logsumexp_list: empty list");
    Node n;
    n.op = Op::kLogSumExpList;
    const Array& first = cnode(xs[0]).out;
    for (const Value& x : xs) {
        check_same_tape(x);
        if (!cnode(x).out.same_shape(first)) throw InvalidArgument("logsumexp_list: shape mismatch");
        n.parents.push_back(x.id());
        n.tracked = n.tracked || cnode(x).tracked;
    }
    const std::int64_t sz = first.numel();
    const std::size_t k = xs.size();
    n.out = Array(first.shape);
    n.aux.resize(k * static_cast<std::size_t>(sz));
    for (std::int64_t i = 0; i < sz; ++i) {
        double mx = cnode(xs[0]).out.v[i];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, cnode(xs[j]).out.v[i]);
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += std::exp(cnode(xs[j]).out.v[i] - mx);
        const double out = mx + std::log(acc);
        n.out.v[i] = out;
        for (std::size_t j = 0; j < k; ++j)
            n.aux[j * static_cast<std::size_t>(sz) + static_cast<std::size_t>(i)] =
                std::exp(cnode(xs[j]).out.v[i] - out);
    }
    return push(std::move(n));
}

Value Tape::stack_cols(std::span<const Value> cols) {
    if (cols.empty()) throw InvalidArgument("stack_cols: empty list");
    const Array& first = cnode(cols[0]).out;
    if (first.rank() != 1) throw InvalidArgument("stack_cols: need rank-1 columns");
    Node n;
    n.op = Op::kStackCols;
    for (const Value& c : cols) {
        check_same_tape(c);
        if (!cnode(c).out.same_shape(first)) throw InvalidArgument("stack_cols: shape mismatch");
        n.parents.push_back(c.id());
        n.tracked = n.tracked || cnode(c).tracked;
    }
    const int b = first.shape[0];
    const int k = static_cast<int>(cols.size());
    n.out = Array({b, k});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < k; ++j) n.out.at(i, j) = cnode(cols[static_cast<std::size_t>(j)]).out.v[i];
    return push(std::move(n));
}

Value Tape::gather_cols(Value m, const std::vector<int>& idx) {
    check_same_tape(m);
    const Array& M = cnode(m).out;
    if (M.rank() != 2 || static_cast<int>(idx.size()) != M.rows())
        throw InvalidArgument("gather_cols: need one index per row");
    Node n;
    n.op = Op::kGatherCols;
    n.parents = {m.id()};
    n.tracked = cnode(m).tracked;
    n.iaux = idx;
    n.out = Array({M.rows()});
    for (int i = 0; i < M.rows(); ++i) {
        if (idx[static_cast<std::size_t>(i)] < 0 || idx[static_cast<std::size_t>(i)] >= M.cols())
            throw InvalidArgument("gather_cols: index out of range");
        n.out.v[static_cast<std::size_t>(i)] = M.at(i, idx[static_cast<std::size_t>(i)]);
    }
    return push(std::move(n));
}

Value Tape::index_elem(Value v, int i) {
    check_same_tape(v);
    const Array& V = cnode(v).out;
    if (i < 0 || i >= V.numel()) throw InvalidArgument("index_elem: out of range");
    Node n;
    n.op = Op::kIndexElem;
    n.parents = {v.id()};
    n.tracked = cnode(v).tracked;
    n.iaux = {i};
    n.out = Array::scalar(V.v[static_cast<std::size_t>(i)]);
    return push(std::move(n));
}

Value Tape::batchnorm_train(Value x, Value gamma, Value beta, Array* running_mean, Array* running_var,
                            double eps, double momentum, bool update_running) {
    check_same_tape(x);
    check_same_tape(gamma);
    check_same_tape(beta);
    const Array& X = cnode(x).out;
    if (X.rank() != 2) throw InvalidArgument("batchnorm_train: need [B,H] input");
    const int b = X.rows(), h = X.cols();
    if (b < 2) throw InvalidArgument("batchnorm_train: batch size must be >= 2");
    const Array& G = cnode(gamma).out;
    const Array& Bt = cnode(beta).out;
    if (G.numel() != h || Bt.numel() != h) throw InvalidArgument("batchnorm_train: gamma/beta size mismatch");

    Node n;
    n.op = Op::kBatchNormTrain;
    n.parents = {x.id(), gamma.id(), beta.id()};
    n.tracked = cnode(x).tracked || cnode(gamma).tracked || cnode(beta).tracked;
    n.out = Array(X.shape);
    // aux layout: xhat (b*h) then invstd (h)
    n.aux.resize(static_cast<std::size_t>(b) * h + h);
    for (int j = 0; j < h; ++j) {
        double mean = 0.0;
        for (int i = 0; i < b; ++i) mean += X.at(i, j);
        mean /= b;
        double var = 0.0;
        for (int i = 0; i < b; ++i) {
            const double d = X.at(i, j) - mean;
            var += d * d;
        }
        var /= b;
        const double invstd = 1.0 / std::sqrt(var + eps);
        n.aux[static_cast<std::size_t>(b) * h + j] = invstd;
        for (int i = 0; i < b; ++i) {
            const double xhat = (X.at(i, j) - mean) * invstd;
            n.aux[static_cast<std::size_t>(i) * h + j] = xhat;
            n.out.at(i, j) = G.v[static_cast<std::size_t>(j)] * xhat + Bt.v[static_cast<std::size_t>(j)];
        }
        if (update_running) {
            const double var_unbiased = var * static_cast<double>(b) / (b - 1);
            running_mean->v[static_cast<std::size_t>(j)] =
                (1.0 - momentum) * running_mean->v[static_cast<std::size_t>(j)] + momentum * mean;
            running_var->v[static_cast<std::size_t>(j)] =
                (1.0 - momentum) * running_var->v[static_cast<std::size_t>(j)] + momentum * var_unbiased;
        }
    }
    return push(std::move(n));
}

Value Tape::batchnorm_eval(Value x, Value gamma, Value beta, const Array& running_mean,
                           const Array& running_var, double eps) {
    check_same_tape(x);
    check_same_tape(gamma);
    check_same_tape(beta);
    const Array& X = cnode(x).out;
    if (X.rank() != 2) throw InvalidArgument("batchnorm_eval: need [B,H] input");
    const int b = X.rows(), h = X.cols();
    if (running_mean.numel() != h || running_var.numel() != h)
        throw InvalidArgument("batchnorm_eval: running stats size mismatch");
    const Array& G = cnode(gamma).out;
    const Array& Bt = cnode(beta).out;

    Node n;
    n.op = Op::kBatchNormEval;
    n.parents = {x.id(), gamma.id(), beta.id()};
    n.tracked = cnode(x).tracked || cnode(gamma).tracked || cnode(beta).tracked;
    n.out = Array(X.shape);
    // aux layout: xhat (b*h) then g*invstd (h)
    n.aux.resize(static_cast<std::size_t>(b) * h + h);
    for (int j = 0; j < h; ++j) {
        const double invstd = 1.0 / std::sqrt(running_var.v[static_cast<std::size_t>(j)] + eps);
        n.aux[static_cast<std::size_t>(b) * h + j] = G.v[static_cast<std::size_t>(j)] * invstd;
        for (int i = 0; i < b; ++i) {
            const double xhat = (X.at(i, j) - running_mean.v[static_cast<std::size_t>(j)]) * invstd;
            n.aux[static_cast<std::size_t>(i) * h + j] = xhat;
            n.out.at(i, j) = G.v[static_cast<std::size_t>(j)] * xhat + Bt.v[static_cast<std::size_t>(j)];
        }
    }
    return push(std::move(n));
}

void Tape::backward(Value root) {
    check_same_tape(root);
    if (consumed_) throw InvalidArgument("backward: tape already consumed");
    consumed_ = true;
    Node& r = node(root);
    if (!r.out.is_scalar()) throw InvalidArgument("backward: root must be scalar");
    if (!std::isfinite(r.out.v[0])) throw NumericError("backward: non-finite value at graph output");
    if (!r.tracked) return;

    for (int id = 0; id <= root.id(); ++id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.tracked) n.grad = Array(n.out.shape);
    }
    r.grad.v[0] = 1.0;

    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.tracked) continue;
        if (n.op == Op::kParam) {
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) n.bound->grad.v[i] += n.grad.v[i];
            continue;
        }
        if (n.op == Op::kInput) continue;
        backward_node(id);
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Array& g = n.grad;

    auto parent = [&](std::size_t i) -> Node& { return nodes_[static_cast<std::size_t>(n.parents[i])]; };
    auto tracked = [&](std::size_t i) { return parent(i).tracked; };
    auto pgrad = [&](std::size_t i) -> Array& { return parent(i).grad; };
    auto pdata = [&](std::size_t i) -> const Array& { return parent(i).out; };

    switch (n.op) {
        case Op::kMatmul: {
            const Array& A = pdata(0);
            const Array& B = pdata(1);
            const int m = A.rows(), k = A.cols(), c = B.cols();
            if (tracked(0)) {
                Array& da = pgrad(0);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < c; ++j) {
                        const double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (int l = 0; l < k; ++l) da.at(i, l) += gij * B.at(l, j);
                    }
            }
            if (tracked(1)) {
                Array& db = pgrad(1);
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        const double ail = A.at(i, l);
                        if (ail == 0.0) continue;
                        for (int j = 0; j < c; ++j) db.at(l, j) += ail * g.at(i, j);
                    }
            }
            break;
        }
        case Op::kAdd:
        case Op::kSub:
        case Op::kMul:
        case Op::kDiv: {
            const Array& A = pdata(0);
            const Array& B = pdata(1);
            const bool as = A.is_scalar() && !n.out.is_scalar();
            const bool bs = B.is_scalar() && !n.out.is_scalar();
            const std::int64_t sz = n.out.numel();
            for (std::int64_t i = 0; i < sz; ++i) {
                const double gi = g.v[i];
                const double x = A.v[as ? 0 : i];
                const double y = B.v[bs ? 0 : i];
                double dx = 0.0, dy = 0.0;
                switch (n.op) {
                    case Op::kAdd: dx = gi; dy = gi; break;
                    case Op::kSub: dx = gi; dy = -gi; break;
                    case Op::kMul: dx = gi * y; dy = gi * x; break;
                    case Op::kDiv: dx = gi / y; dy = -gi * x / (y * y); break;
                    default: break;
                }
                if (tracked(0)) pgrad(0).v[as ? 0 : i] += dx;
                if (tracked(1)) pgrad(1).v[bs ? 0 : i] += dy;
            }
            break;
        }
        case Op::kAddRowVec:
        case Op::kSubRowVec: {
            const int b = n.out.rows(), h = n.out.cols();
            const double sgn = n.op == Op::kAddRowVec ? 1.0 : -1.0;
            if (tracked(0))
                for (std::int64_t i = 0; i < n.out.numel(); ++i) pgrad(0).v[i] += g.v[i];
            if (tracked(1))
                for (int j = 0; j < h; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < b; ++i) acc += g.at(i, j);
                    pgrad(1).v[static_cast<std::size_t>(j)] += sgn * acc;
                }
            break;
        }
        case Op::kMulRowVec: {
            const Array& M = pdata(0);
            const Array& V = pdata(1);
            const int b = n.out.rows(), h = n.out.cols();
            if (tracked(0))
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < h; ++j) pgrad(0).at(i, j) += g.at(i, j) * V.v[static_cast<std::size_t>(j)];
            if (tracked(1))
                for (int j = 0; j < h; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < b; ++i) acc += g.at(i, j) * M.at(i, j);
                    pgrad(1).v[static_cast<std::size_t>(j)] += acc;
                }
            break;
        }
        case Op::kScaleRows: {
            const Array& M = pdata(0);
            const Array& S = pdata(1);
            const int b = n.out.rows(), h = n.out.cols();
            if (tracked(0))
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < h; ++j) pgrad(0).at(i, j) += g.at(i, j) * S.v[static_cast<std::size_t>(i)];
            if (tracked(1))
                for (int i = 0; i < b; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < h; ++j) acc += g.at(i, j) * M.at(i, j);
                    pgrad(1).v[static_cast<std::size_t>(i)] += acc;
                }
            break;
        }
        case Op::kNeg:
        case Op::kAddConst:
        case Op::kScaleConst:
        case Op::kClampMin:
        case Op::kLeakyRelu:
        case Op::kTanh:
        case Op::kExp:
        case Op::kLog:
        case Op::kLog1p:
        case Op::kSqrt:
        case Op::kSquare:
        case Op::kSoftplus:
        case Op::kReciprocal:
        case Op::kDigamma:
        case Op::kLgamma: {
            if (!tracked(0)) break;
            const Array& X = pdata(0);
            Array& dx = pgrad(0);
            const std::int64_t sz = n.out.numel();
            for (std::int64_t i = 0; i < sz; ++i) {
                const double gi = g.v[i];
                if (gi == 0.0) continue;
                const double x = X.v[i];
                const double y = n.out.v[i];
                double d = 0.0;
                switch (n.op) {
                    case Op::kNeg: d = -1.0; break;
                    case Op::kAddConst: d = 1.0; break;
                    case Op::kScaleConst: d = n.c0; break;
                    case Op::kClampMin: d = x > n.c0 ? 1.0 : 0.0; break;
                    case Op::kLeakyRelu: d = x > 0.0 ? 1.0 : n.c0; break;
                    case Op::kTanh: d = 1.0 - y * y; break;
                    case Op::kExp: d = y; break;
                    case Op::kLog: d = 1.0 / x; break;
                    case Op::kLog1p: d = 1.0 / (1.0 + x); break;
                    case Op::kSqrt: d = 0.5 / (y > 1e-150 ? y : 1e-150); break;
                    case Op::kSquare: d = 2.0 * x; break;
                    case Op::kSoftplus: d = 1.0 / (1.0 + std::exp(-x)); break;
                    case Op::kReciprocal: d = -y * y; break;
                    case Op::kDigamma: d = postnet::trigamma(x); break;
                    case Op::kLgamma: d = postnet::digamma(x); break;
                    default: break;
                }
                dx.v[i] += gi * d;
            }
            break;
        }
        case Op::kSum: {
            if (!tracked(0)) break;
            Array& dx = pgrad(0);
            const double gi = g.v[0];
            for (double& d : dx.v) d += gi;
            break;
        }
        case Op::kRowSum: {
            if (!tracked(0)) break;
            Array& dx = pgrad(0);
            const int b = dx.rows(), h = dx.cols();
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < h; ++j) dx.at(i, j) += g.v[static_cast<std::size_t>(i)];
            break;
        }
        case Op::kLogSumExpAll: {
            if (!tracked(0)) break;
            Array& dx = pgrad(0);
            const double gi = g.v[0];
            for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += gi * n.aux[i];
            break;
        }
        case Op::kLogSumExpList: {
            const std::int64_t sz = n.out.numel();
            for (std::size_t j = 0; j < n.parents.size(); ++j) {
                if (!tracked(j)) continue;
                Array& dx = pgrad(j);
                for (std::int64_t i = 0; i < sz; ++i)
                    dx.v[i] += g.v[i] * n.aux[j * static_cast<std::size_t>(sz) + static_cast<std::size_t>(i)];
            }
            break;
        }
        case Op::kStackCols: {
            const int b = n.out.rows();
            for (std::size_t j = 0; j < n.parents.size(); ++j) {
                if (!tracked(j)) continue;
                Array& dx = pgrad(j);
                for (int i = 0; i < b; ++i) dx.v[static_cast<std::size_t>(i)] += g.at(i, static_cast<int>(j));
            }
            break;
        }
        case Op::kGatherCols: {
            if (!tracked(0)) break;
            Array& dx = pgrad(0);
            for (int i = 0; i < static_cast<int>(n.iaux.size()); ++i)
                dx.at(i, n.iaux[static_cast<std::size_t>(i)]) += g.v[static_cast<std::size_t>(i)];
            break;
        }
        case Op::kIndexElem: {
            if (!tracked(0)) break;
            pgrad(0).v[static_cast<std::size_t>(n.iaux[0])] += g.v[0];
            break;
        }
        case Op::kBatchNormTrain: {
            const int b = n.out.rows(), h = n.out.cols();
            const Array& G = pdata(1);
            const double* xhat = n.aux.data();
            const double* invstd = n.aux.data() + static_cast<std::size_t>(b) * h;
            for (int j = 0; j < h; ++j) {
                double gsum = 0.0, gxsum = 0.0;
                for (int i = 0; i < b; ++i) {
                    const double gij = g.at(i, j);
                    gsum += gij;
                    gxsum += gij * xhat[static_cast<std::size_t>(i) * h + j];
                }
                if (tracked(1)) pgrad(1).v[static_cast<std::size_t>(j)] += gxsum;
                if (tracked(2)) pgrad(2).v[static_cast<std::size_t>(j)] += gsum;
                if (tracked(0)) {
                    const double gj = G.v[static_cast<std::size_t>(j)];
                    const double k = gj * invstd[j];
                    const double mg = gsum / b, mgx = gxsum / b;
                    for (int i = 0; i < b; ++i) {
                        const double xh = xhat[static_cast<std::size_t>(i) * h + j];
                        pgrad(0).at(i, j) += k * (g.at(i, j) - mg - xh * mgx);
                    }
                }
            }
            break;
        }
        case Op::kBatchNormEval: {
            const int b = n.out.rows(), h = n.out.cols();
            const double* xhat = n.aux.data();
            const double* ginvstd = n.aux.data() + static_cast<std::size_t>(b) * h;
            for (int j = 0; j < h; ++j) {
                double gsum = 0.0, gxsum = 0.0;
                for (int i = 0; i < b; ++i) {
                    const double gij = g.at(i, j);
                    gsum += gij;
                    gxsum += gij * xhat[static_cast<std::size_t>(i) * h + j];
                    if (tracked(0)) pgrad(0).at(i, j) += gij * ginvstd[j];
                }
                if (tracked(1)) pgrad(1).v[static_cast<std::size_t>(j)] += gxsum;
                if (tracked(2)) pgrad(2).v[static_cast<std::size_t>(j)] += gsum;
            }
            break;
        }
        case Op::kInput:
        case Op::kParam:
            break;
    }
}

}  // namespace postnet::ag
