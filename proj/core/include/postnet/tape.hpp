#pragma once

#include <span>
#include <string>
#include <vector>

#include "postnet/array.hpp"

namespace postnet::ag {

// Trainable leaf. Lives outside any tape; gradients accumulate here when
// backward() runs on a tape the param was bound to.
struct Param {
    std::string name;
    Array value;
    Array grad;

    Param() = default;
    Param(std::string n, Array v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid once the tape dies.
class Value {
public:
    Value() = default;
    Value(Tape* t, int id) : tape_(t), id_(id) {}

    const Array& data() const;
    bool valid() const { return tape_ != nullptr && id_ >= 0; }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Reverse-mode tape over dense arrays. Nodes are recorded in insertion
// order, which is also the topological order; backward() walks the records
// once in reverse. The op set is exactly what the model needs.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Value input(Array a);        // untracked constant
    Value param(Param& p);       // tracked, bound to p
    Value frozen(const Param& p) { return input(p.value); }

    // Linear algebra.
    Value matmul(Value a, Value b);

    // Elementwise binary; same shape, or either side a 1-element scalar.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);

    // Row/column broadcasts for B-by-H matrices.
    Value add_rowvec(Value m, Value v);   // m[B,H] + v[H]
    Value sub_rowvec(Value m, Value v);   // m[B,H] - v[H]
    Value mul_rowvec(Value m, Value v);   // m[B,H] * v[H]
    Value scale_rows(Value m, Value s);   // row i scaled by s[i]

    // Elementwise with constants.
    Value neg(Value x);
    Value add_const(Value x, double c);
    Value scale_const(Value x, double c);
    Value clamp_min(Value x, double c);

    // Elementwise nonlinearities and special functions.
    Value leaky_relu(Value x, double slope);
    Value tanh_fn(Value x);
    Value exp_fn(Value x);
    Value log_fn(Value x);
    Value log1p_fn(Value x);
    Value sqrt_fn(Value x);
    Value square(Value x);
    Value softplus_fn(Value x);
    Value reciprocal(Value x);
    Value digamma_fn(Value x);
    Value lgamma_fn(Value x);

    // Reductions and reshuffles.
    Value sum(Value x);                                   // -> scalar
    Value row_sum(Value m);                               // [B,H] -> [B]
    Value logsumexp_all(Value v);                         // [n] -> scalar
    Value logsumexp_list(std::span<const Value> xs);      // k of [B] -> [B]
    Value stack_cols(std::span<const Value> cols);        // k of [B] -> [B,k]
    Value gather_cols(Value m, const std::vector<int>& idx);  // [B,K] -> [B]
    Value index_elem(Value v, int i);                     // [n] -> scalar

    // Batch normalization over features. Train mode uses biased batch
    // variance for normalization and, when update_running is set, folds the
    // unbiased batch statistics into the running buffers (momentum mixing).
    Value batchnorm_train(Value x, Value gamma, Value beta, Array* running_mean, Array* running_var,
                          double eps, double momentum, bool update_running);
    Value batchnorm_eval(Value x, Value gamma, Value beta, const Array& running_mean,
                         const Array& running_var, double eps);

    // Root must be scalar and finite. Gradients land in bound Params.
    // A tape can only be walked once.
    void backward(Value root);

    const Array& data(int id) const;
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    enum class Op {
        kInput, kParam, kMatmul,
        kAdd, kSub, kMul, kDiv,
        kAddRowVec, kSubRowVec, kMulRowVec, kScaleRows,
        kNeg, kAddConst, kScaleConst, kClampMin,
        kLeakyRelu, kTanh, kExp, kLog, kLog1p, kSqrt, kSquare, kSoftplus, kReciprocal,
        kDigamma, kLgamma,
        kSum, kRowSum, kLogSumExpAll, kLogSumExpList, kStackCols, kGatherCols, kIndexElem,
        kBatchNormTrain, kBatchNormEval,
    };

    struct Node {
        Op op;
        std::vector<int> parents;
        Array out;
        Array grad;
        bool tracked = false;
        double c0 = 0.0;
        std::vector<double> aux;
        std::vector<int> iaux;
        Param* bound = nullptr;
    };

    Value push(Node n);
    Node& node(Value v);
    const Node& cnode(Value v) const;
    bool tracked_of(Value v) const;
    Value unary(Op op, Value x, double c0 = 0.0);
    Value binary(Op op, Value a, Value b);
    void check_same_tape(Value v) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace postnet::ag
