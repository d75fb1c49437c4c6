#include "cellforge/num/graph.hpp"

#include <cmath>
#include <limits>

#include "cellforge/kernels/kernels.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::num {

void ParamStore::add(const std::string& name, Tensor init) {
    if (entries.count(name)) throw StateError("parameter already exists: " + name);
    Entry e;
    e.grad = Tensor::zeros(init.shape);
    e.value = std::move(init);
    entries.emplace(name, std::move(e));
}

Tensor& ParamStore::value(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw StateError("unknown parameter: " + name);
    return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw StateError("unknown parameter: " + name);
    return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw StateError("unknown parameter: " + name);
    return it->second.grad;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries) e.grad.fill(0.0);
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries) n += e.value.size();
    return n;
}

double digamma(double x) {
    if (!(x > 0.0)) throw NumericError("digamma: argument must be positive");
    double result = 0.0;
    // Recurrence up to the asymptotic region.
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv
            - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

namespace {

double stable_softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

int Graph::push(Node n) {
    n.grad = Tensor::zeros(n.value.shape);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Graph::Node& Graph::node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

void Graph::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw StateError("value was not traced on this graph");
}

Var Graph::param(const ParamStore& store, const std::string& name) {
    Node n;
    n.op = Op::kParam;
    n.value = store.value(name);
    n.param_name = name;
    return Var{push(std::move(n))};
}

Var Graph::input(Tensor value) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(value);
    return Var{push(std::move(n))};
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(value);
    return Var{push(std::move(n))};
}

Var Graph::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.cols() != tb.rows())
        throw ValidationError("matmul: inner dimensions disagree " + shape_str(ta) + " * " +
                              shape_str(tb));
    Node n;
    n.op = Op::kMatMul;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::zeros({ta.rows(), tb.cols()});
    kernels::gemm(ta.data.data(), tb.data.data(), n.value.data.data(),
                  ta.rows(), ta.cols(), tb.cols());
    return Var{push(std::move(n))};
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ValidationError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}
}  // namespace

Var Graph::add(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    require_same_shape(ta, tb, "add");
    Node n;
    n.op = Op::kAdd;
    n.a = a.id;
    n.b = b.id;
    n.value = ta;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += tb.data[i];
    return Var{push(std::move(n))};
}

Var Graph::sub(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    require_same_shape(ta, tb, "sub");
    Node n;
    n.op = Op::kSub;
    n.a = a.id;
    n.b = b.id;
    n.value = ta;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= tb.data[i];
    return Var{push(std::move(n))};
}

Var Graph::mul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    require_same_shape(ta, tb, "mul");
    Node n;
    n.op = Op::kMul;
    n.a = a.id;
    n.b = b.id;
    n.value = ta;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= tb.data[i];
    return Var{push(std::move(n))};
}

Var Graph::div(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    require_same_shape(ta, tb, "div");
    Node n;
    n.op = Op::kDiv;
    n.a = a.id;
    n.b = b.id;
    n.value = ta;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] /= tb.data[i];
    return Var{push(std::move(n))};
}

Var Graph::add_rowvec(Var x, Var r) {
    check(x);
    check(r);
    const Tensor& tx = node(x).value;
    const Tensor& tr = node(r).value;
    if (tr.size() != tx.cols())
        throw ValidationError("add_rowvec: vector length " + shape_str(tr) +
                              " does not match columns of " + shape_str(tx));
    Node n;
    n.op = Op::kAddRow;
    n.a = x.id;
    n.b = r.id;
    n.value = tx;
    std::size_t cols = tx.cols();
    for (std::size_t i = 0; i < tx.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value.data[i * cols + j] += tr.data[j];
    return Var{push(std::move(n))};
}

Var Graph::add_colvec(Var x, Var c) {
    check(x);
    check(c);
    const Tensor& tx = node(x).value;
    const Tensor& tc = node(c).value;
    if (tc.size() != tx.rows())
        throw ValidationError("add_colvec: vector length does not match rows");
    Node n;
    n.op = Op::kAddCol;
    n.a = x.id;
    n.b = c.id;
    n.value = tx;
    std::size_t cols = tx.cols();
    for (std::size_t i = 0; i < tx.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value.data[i * cols + j] += tc.data[i];
    return Var{push(std::move(n))};
}

Var Graph::mul_colvec(Var x, Var c) {
    check(x);
    check(c);
    const Tensor& tx = node(x).value;
    const Tensor& tc = node(c).value;
    if (tc.size() != tx.rows())
        throw ValidationError("mul_colvec: vector length does not match rows");
    Node n;
    n.op = Op::kMulCol;
    n.a = x.id;
    n.b = c.id;
    n.value = tx;
    std::size_t cols = tx.cols();
    for (std::size_t i = 0; i < tx.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value.data[i * cols + j] *= tc.data[i];
    return Var{push(std::move(n))};
}

Var Graph::broadcast_rows(Var r, std::size_t m) {
    check(r);
    const Tensor& tr = node(r).value;
    std::size_t cols = tr.size();
    Node n;
    n.op = Op::kBroadcastRows;
    n.a = r.id;
    n.value = Tensor::zeros({m, cols});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value.data[i * cols + j] = tr.data[j];
    return Var{push(std::move(n))};
}

#define CF_UNARY(NAME, OP, EXPR)                                  \
    Var Graph::NAME(Var a) {                                      \
        check(a);                                                 \
        Node n;                                                   \
        n.op = OP;                                                \
        n.a = a.id;                                               \
        n.value = node(a).value;                                  \
        for (double& x : n.value.data) x = (EXPR);                \
        return Var{push(std::move(n))};                           \
    }

CF_UNARY(relu, Op::kRelu, x > 0.0 ? x : 0.0)
CF_UNARY(softplus, Op::kSoftplus, stable_softplus(x))
CF_UNARY(sigmoid, Op::kSigmoid, sigmoid_scalar(x))
CF_UNARY(exp, Op::kExp, std::exp(x))
CF_UNARY(log, Op::kLog, std::log(x))
CF_UNARY(neg, Op::kNeg, -x)
CF_UNARY(lgamma, Op::kLgamma, std::lgamma(x))

#undef CF_UNARY

Var Graph::log_softmax_rows(Var a) {
    check(a);
    const Tensor& ta = node(a).value;
    Node n;
    n.op = Op::kLogSoftmaxRows;
    n.a = a.id;
    n.value = ta;
    std::size_t cols = ta.cols();
    for (std::size_t i = 0; i < ta.rows(); ++i) {
        double* row = n.value.data.data() + i * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += std::exp(row[j] - mx);
        double lse = mx + std::log(acc);
        for (std::size_t j = 0; j < cols; ++j) row[j] -= lse;
    }
    return Var{push(std::move(n))};
}

Var Graph::logaddexp(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    require_same_shape(ta, tb, "logaddexp");
    Node n;
    n.op = Op::kLogAddExp;
    n.a = a.id;
    n.b = b.id;
    n.value = ta;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        double x = ta.data[i], y = tb.data[i];
        double hi = std::max(x, y), lo = std::min(x, y);
        if (hi == -std::numeric_limits<double>::infinity())
            n.value.data[i] = hi;
        else
            n.value.data[i] = hi + std::log1p(std::exp(lo - hi));
    }
    return Var{push(std::move(n))};
}

Var Graph::sum_all(Var a) {
    check(a);
    const Tensor& ta = node(a).value;
    double acc = 0.0;
    for (double x : ta.data) acc += x;
    Node n;
    n.op = Op::kSumAll;
    n.a = a.id;
    n.value = Tensor::scalar(acc);
    return Var{push(std::move(n))};
}

Var Graph::concat_cols(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.rows() != tb.rows()) throw ValidationError("concat_cols: row counts disagree");
    std::size_t rows = ta.rows(), ca = ta.cols(), cb = tb.cols();
    Node n;
    n.op = Op::kConcatCols;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::zeros({rows, ca + cb});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < ca; ++j) n.value.data[i * (ca + cb) + j] = ta.data[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j)
            n.value.data[i * (ca + cb) + ca + j] = tb.data[i * cb + j];
    }
    return Var{push(std::move(n))};
}

Var Graph::gather_rows(Var table, std::vector<std::size_t> indices) {
    check(table);
    const Tensor& tt = node(table).value;
    std::size_t cols = tt.cols();
    for (std::size_t idx : indices)
        if (idx >= tt.rows()) throw ValidationError("gather_rows: index out of range");
    Node n;
    n.op = Op::kGatherRows;
    n.a = table.id;
    n.value = Tensor::zeros({indices.size(), cols});
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
            n.value.data[i * cols + j] = tt.data[indices[i] * cols + j];
    n.indices = std::move(indices);
    return Var{push(std::move(n))};
}

Var Graph::add_scalar(Var a, double s) {
    check(a);
    Node n;
    n.op = Op::kAddScalar;
    n.a = a.id;
    n.scalar = s;
    n.value = node(a).value;
    for (double& x : n.value.data) x += s;
    return Var{push(std::move(n))};
}

Var Graph::mul_scalar(Var a, double s) {
    check(a);
    Node n;
    n.op = Op::kMulScalar;
    n.a = a.id;
    n.scalar = s;
    n.value = node(a).value;
    for (double& x : n.value.data) x *= s;
    return Var{push(std::move(n))};
}

const Tensor& Graph::value(Var v) const {
    check(v);
    return node(v).value;
}

const Tensor& Graph::grad(Var v) const {
    check(v);
    return node(v).grad;
}

void Graph::backward(Var loss) {
    check(loss);
    Node& l = node(loss);
    if (l.value.size() != 1)
        throw StateError("backward: loss must be a scalar, got " + shape_str(l.value));
    for (Node& n : nodes_) n.grad.fill(0.0);
    l.grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) backprop_node(id);
    ran_backward_ = true;
}

void Graph::backprop_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    bool any = false;
    for (double g : n.grad.data)
        if (g != 0.0) {
            any = true;
            break;
        }
    if (!any) return;

    auto ga = [&]() -> Tensor& { return nodes_[static_cast<std::size_t>(n.a)].grad; };
    auto gb = [&]() -> Tensor& { return nodes_[static_cast<std::size_t>(n.b)].grad; };
    auto va = [&]() -> const Tensor& { return nodes_[static_cast<std::size_t>(n.a)].value; };
    auto vb = [&]() -> const Tensor& { return nodes_[static_cast<std::size_t>(n.b)].value; };

    switch (n.op) {
        case Op::kParam:
        case Op::kInput:
        case Op::kConst:
            break;
        case Op::kMatMul: {
            const Tensor& A = va();
            const Tensor& B = vb();
            std::size_t m = A.rows(), k = A.cols(), c = B.cols();
            // dA += dC * B^T
            Tensor da = Tensor::zeros({m, k});
            kernels::gemm_nt(n.grad.data.data(), B.data.data(), da.data.data(), m, c, k);
            for (std::size_t i = 0; i < da.size(); ++i) ga().data[i] += da.data[i];
            // dB += A^T * dC
            Tensor db = Tensor::zeros({k, c});
            kernels::gemm_tn(A.data.data(), n.grad.data.data(), db.data.data(), k, m, c);
            for (std::size_t i = 0; i < db.size(); ++i) gb().data[i] += db.data[i];
            break;
        }
        case Op::kAdd:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                ga().data[i] += n.grad.data[i];
                gb().data[i] += n.grad.data[i];
            }
            break;
        case Op::kSub:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                ga().data[i] += n.grad.data[i];
                gb().data[i] -= n.grad.data[i];
            }
            break;
        case Op::kMul:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                ga().data[i] += n.grad.data[i] * vb().data[i];
                gb().data[i] += n.grad.data[i] * va().data[i];
            }
            break;
        case Op::kDiv:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                double bi = vb().data[i];
                ga().data[i] += n.grad.data[i] / bi;
                gb().data[i] -= n.grad.data[i] * va().data[i] / (bi * bi);
            }
            break;
        case Op::kAddRow: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.grad.size(); ++i) ga().data[i] += n.grad.data[i];
            for (std::size_t i = 0; i < n.value.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) gb().data[j] += n.grad.data[i * cols + j];
            break;
        }
        case Op::kAddCol: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.grad.size(); ++i) ga().data[i] += n.grad.data[i];
            for (std::size_t i = 0; i < n.value.rows(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < cols; ++j) acc += n.grad.data[i * cols + j];
                gb().data[i] += acc;
            }
            break;
        }
        case Op::kMulCol: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.value.rows(); ++i) {
                double ci = vb().data[i];
                double acc = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    double g = n.grad.data[i * cols + j];
                    ga().data[i * cols + j] += g * ci;
                    acc += g * va().data[i * cols + j];
                }
                gb().data[i] += acc;
            }
            break;
        }
        case Op::kBroadcastRows: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.value.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) ga().data[j] += n.grad.data[i * cols + j];
            break;
        }
        case Op::kRelu:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                if (va().data[i] > 0.0) ga().data[i] += n.grad.data[i];
            break;
        case Op::kSoftplus:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ga().data[i] += n.grad.data[i] * sigmoid_scalar(va().data[i]);
            break;
        case Op::kSigmoid:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                double y = n.value.data[i];
                ga().data[i] += n.grad.data[i] * y * (1.0 - y);
            }
            break;
        case Op::kExp:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ga().data[i] += n.grad.data[i] * n.value.data[i];
            break;
        case Op::kLog:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ga().data[i] += n.grad.data[i] / va().data[i];
            break;
        case Op::kNeg:
            for (std::size_t i = 0; i < n.grad.size(); ++i) ga().data[i] -= n.grad.data[i];
            break;
        case Op::kLgamma:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ga().data[i] += n.grad.data[i] * digamma(va().data[i]);
            break;
        case Op::kLogSoftmaxRows: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.value.rows(); ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < cols; ++j) gsum += n.grad.data[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j) {
                    double soft = std::exp(n.value.data[i * cols + j]);
                    ga().data[i * cols + j] += n.grad.data[i * cols + j] - soft * gsum;
                }
            }
            break;
        }
        case Op::kLogAddExp:
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                double out = n.value.data[i];
                if (out == -std::numeric_limits<double>::infinity()) continue;
                ga().data[i] += n.grad.data[i] * std::exp(va().data[i] - out);
                gb().data[i] += n.grad.data[i] * std::exp(vb().data[i] - out);
            }
            break;
        case Op::kSumAll: {
            double g = n.grad.data[0];
            for (std::size_t i = 0; i < ga().size(); ++i) ga().data[i] += g;
            break;
        }
        case Op::kConcatCols: {
            std::size_t rows = n.value.rows();
            std::size_t ca = va().cols(), cb = vb().cols();
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < ca; ++j)
                    ga().data[i * ca + j] += n.grad.data[i * (ca + cb) + j];
                for (std::size_t j = 0; j < cb; ++j)
                    gb().data[i * cb + j] += n.grad.data[i * (ca + cb) + ca + j];
            }
            break;
        }
        case Op::kGatherRows: {
            std::size_t cols = n.value.cols();
            for (std::size_t i = 0; i < n.indices.size(); ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    ga().data[n.indices[i] * cols + j] += n.grad.data[i * cols + j];
            break;
        }
        case Op::kAddScalar:
            for (std::size_t i = 0; i < n.grad.size(); ++i) ga().data[i] += n.grad.data[i];
            break;
        case Op::kMulScalar:
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ga().data[i] += n.grad.data[i] * n.scalar;
            break;
    }
}

void Graph::add_param_grads(ParamStore& store) const {
    if (!ran_backward_) throw StateError("add_param_grads: backward has not run");
    for (const Node& n : nodes_) {
        if (n.op != Op::kParam) continue;
        Tensor& g = store.grad(n.param_name);
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
    }
}

}  // namespace cellforge::num
