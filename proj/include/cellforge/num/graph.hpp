#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cellforge/num/tensor.hpp"

namespace cellforge::num {

/// Named parameter tensors with gradient slots. std::map keeps iteration
/// order deterministic for optimizers and checkpoints.
struct ParamStore {
    struct Entry {
        Tensor value;
        Tensor grad;
    };
    std::map<std::string, Entry> entries;

    void add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return entries.count(name) != 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);
    void zero_grads();
    std::size_t total_size() const;
};

/// Handle to a traced value. Only valid for the graph that created it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Tape-style reverse-mode autodiff over dense tensors. Nodes are appended in
/// evaluation order, so the backward sweep is a single reverse pass. One graph
/// per training step; parameters are copied in at trace time and their
/// gradients accumulated back into the store afterwards.
class Graph {
public:
    /// Differentiable leaf bound to a store parameter (value copied in).
    Var param(const ParamStore& store, const std::string& name);
    /// Differentiable leaf not bound to the store (e.g. an input we want
    /// gradients for).
    Var input(Tensor value);
    /// Non-differentiable leaf.
    Var constant(Tensor value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    /// X[m,n] + r[1,n] broadcast down rows (bias add).
    Var add_rowvec(Var x, Var r);
    /// X[m,n] + c[m,1] broadcast across columns.
    Var add_colvec(Var x, Var c);
    /// X[m,n] * c[m,1] broadcast across columns.
    Var mul_colvec(Var x, Var c);
    /// r[1,n] tiled to [m,n].
    Var broadcast_rows(Var r, std::size_t m);
    Var relu(Var a);
    Var softplus(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var neg(Var a);
    Var lgamma(Var a);
    /// Row-wise log-softmax.
    Var log_softmax_rows(Var a);
    /// Elementwise log(exp(a) + exp(b)), overflow-safe.
    Var logaddexp(Var a, Var b);
    Var sum_all(Var a);
    Var concat_cols(Var a, Var b);
    /// Rows of a [V,d] table selected by index; duplicate indices accumulate
    /// gradient.
    Var gather_rows(Var table, std::vector<std::size_t> indices);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward() loss w.r.t. v. Zero tensor if v was
    /// never reached.
    const Tensor& grad(Var v) const;

    /// Reverse sweep from a scalar loss. Fills every node's gradient;
    /// parameters not on a path to the loss keep zero gradient.
    void backward(Var loss);

    /// Accumulate leaf gradients into the bound store parameters.
    void add_param_grads(ParamStore& store) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        kParam, kInput, kConst,
        kMatMul, kAdd, kSub, kMul, kDiv,
        kAddRow, kAddCol, kMulCol, kBroadcastRows,
        kRelu, kSoftplus, kSigmoid, kExp, kLog, kNeg, kLgamma,
        kLogSoftmaxRows, kLogAddExp, kSumAll, kConcatCols, kGatherRows,
        kAddScalar, kMulScalar,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;
        int a = -1;
        int b = -1;
        double scalar = 0.0;
        std::vector<std::size_t> indices;
        std::string param_name;
    };

    int push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    void check(Var v) const;
    void backprop_node(int id);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

/// Digamma (derivative of lgamma) for x > 0.
double digamma(double x);

}  // namespace cellforge::num
