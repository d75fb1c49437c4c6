#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cellforge/num/adam.hpp"
#include "cellforge/num/checkpoint.hpp"
#include "cellforge/num/graph.hpp"
#include "cellforge/num/mlp.hpp"
#include "cellforge/num/rng.hpp"
#include "cellforge/util/errors.hpp"
#include "support/oracles.hpp"

using namespace cellforge;
using num::Graph;
using num::MlpSpec;
using num::ParamStore;
using num::Rng;
using num::Tensor;
using num::Var;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t = Tensor::zeros({3, 4});
    CHECK(t.size() == 12);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ValidationError);
}

TEST_CASE("rng determinism and seed sensitivity") {
    Rng a(42), b(42), c(43);
    bool all_same = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform(), y = b.uniform(), z = c.uniform();
        if (x != y) all_same = false;
        if (i < 100 && x != z) any_diff = true;
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("rng normal moments") {
    Rng rng(7);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng derived streams differ") {
    Rng base(5);
    Rng s0 = base.derive(0), s1 = base.derive(1);
    CHECK(s0.uniform() != s1.uniform());
}

TEST_CASE("mlp identity network passes input through") {
    MlpSpec spec = MlpSpec::dense({3, 3}, num::Activation::kIdentity,
                                  num::Activation::kIdentity);
    ParamStore store;
    Tensor w = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) w.data[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    store.add("net.w0", w);
    store.add("net.b0", Tensor::zeros({1, 3}));
    Tensor x = Tensor::matrix(2, 3, {1, 2, 3, -4, 5, 0.5});
    Tensor y = num::mlp_apply(spec, store, "net", x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("mlp single affine layer") {
    MlpSpec spec = MlpSpec::dense({1, 1}, num::Activation::kIdentity,
                                  num::Activation::kIdentity);
    ParamStore store;
    store.add("net.w0", Tensor::matrix(1, 1, {2.0}));
    store.add("net.b0", Tensor::matrix(1, 1, {1.0}));
    Tensor y = num::mlp_apply(spec, store, "net", Tensor::matrix(1, 1, {3.0}));
    CHECK(y.data[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("mlp forward matches straight-line recomputation") {
    Rng rng(11);
    MlpSpec spec = MlpSpec::dense({4, 5, 3}, num::Activation::kRelu,
                                  num::Activation::kIdentity);
    ParamStore store;
    num::init_mlp(store, spec, "net", rng);
    Tensor x = Tensor::zeros({2, 4});
    for (double& v : x.data) v = rng.normal();

    Graph g;
    Var out = num::mlp_forward(g, spec, store, "net", g.constant(x));
    const Tensor& traced = g.value(out);

    // independent straight-line recomputation
    auto matmul_add = [&](const std::vector<double>& in, std::size_t rows, std::size_t a,
                          const Tensor& w, const Tensor& b) {
        std::vector<double> out_v(rows * w.cols(), 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double acc = b.data[j];
                for (std::size_t p = 0; p < a; ++p)
                    acc += in[i * a + p] * w.data[p * w.cols() + j];
                out_v[i * w.cols() + j] = acc;
            }
        return out_v;
    };
    std::vector<double> h =
        matmul_add(x.data, 2, 4, store.value("net.w0"), store.value("net.b0"));
    for (double& v : h) v = v > 0.0 ? v : 0.0;
    std::vector<double> o =
        matmul_add(h, 2, 5, store.value("net.w1"), store.value("net.b1"));
    REQUIRE(traced.size() == o.size());
    for (std::size_t i = 0; i < o.size(); ++i)
        CHECK(traced.data[i] == doctest::Approx(o[i]).epsilon(1e-12));
}

TEST_CASE("mlp shape mismatch names the layer") {
    MlpSpec spec = MlpSpec::dense({4, 2}, num::Activation::kRelu, num::Activation::kIdentity);
    ParamStore store;
    Rng rng(1);
    num::init_mlp(store, spec, "net", rng);
    Graph g;
    CHECK_THROWS_AS(num::mlp_forward(g, spec, store, "net",
                                     g.constant(Tensor::zeros({1, 3}))),
                    ValidationError);
}

TEST_CASE("backward: linear loss gradient structure") {
    // loss = sum(W x), x fixed -> dL/dW = ones * x^T structure
    ParamStore store;
    store.add("w", Tensor::matrix(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}));
    Graph g;
    Var w = g.param(store, "w");
    Tensor xt = Tensor::matrix(3, 1, {1.0, 2.0, 3.0});
    Var loss = g.sum_all(g.matmul(w, g.constant(xt)));
    g.backward(loss);
    g.add_param_grads(store);
    const Tensor& gw = store.grad("w");
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(gw.data[i * 3 + j] == doctest::Approx(xt.data[j]).epsilon(1e-15));
}

TEST_CASE("backward: disconnected parameter keeps zero gradient") {
    ParamStore store;
    store.add("used", Tensor::matrix(1, 1, {2.0}));
    store.add("unused", Tensor::matrix(1, 1, {5.0}));
    Graph g;
    Var u = g.param(store, "used");
    (void)g.param(store, "unused");
    Var loss = g.sum_all(g.mul(u, u));
    g.backward(loss);
    g.add_param_grads(store);
    CHECK(store.grad("used").data[0] == doctest::Approx(4.0));
    CHECK(store.grad("unused").data[0] == 0.0);
}

TEST_CASE("backward on a non-scalar is a state error") {
    Graph g;
    Var v = g.constant(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(g.backward(v), StateError);
    CHECK_THROWS_AS(g.backward(Var{}), StateError);
}

TEST_CASE("backward matches finite differences on a composed loss") {
    Rng rng(23);
    ParamStore store;
    MlpSpec spec = MlpSpec::dense({3, 4, 2}, num::Activation::kSoftplus,
                                  num::Activation::kIdentity);
    num::init_mlp(store, spec, "net", rng);
    Tensor x = Tensor::zeros({2, 3});
    for (double& v : x.data) v = rng.normal();

    auto eval = [&]() {
        Graph g;
        Var out = num::mlp_forward(g, spec, store, "net", g.constant(x));
        Var s = g.sigmoid(out);
        Var loss = g.sum_all(g.mul(s, g.log(g.add_scalar(g.mul(s, s), 0.1))));
        return std::pair<Graph, Var>(std::move(g), loss);
    };

    auto [g0, loss0] = eval();
    g0.backward(loss0);
    store.zero_grads();
    g0.add_param_grads(store);

    for (auto& [name, entry] : store.entries) {
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            double fd = test::central_diff(
                [&]() {
                    auto [g, l] = eval();
                    return g.value(l).data[0];
                },
                entry.value.data[i]);
            CHECK(test::grad_rel_err(entry.grad.data[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("graph op gradients: logaddexp, lgamma, log_softmax, gather, colvec ops") {
    Rng rng(31);
    ParamStore store;
    store.add("a", Tensor::matrix(2, 3, {0.5, 1.5, 2.5, 0.2, 1.2, 3.0}));
    store.add("b", Tensor::matrix(2, 3, {1.1, 0.1, 0.7, 2.0, 0.4, 0.9}));
    store.add("table", Tensor::matrix(3, 2, {0.3, -0.2, 0.8, 0.5, -0.4, 1.4}));
    store.add("col", Tensor::matrix(2, 1, {0.6, -1.2}));

    auto eval = [&]() {
        Graph g;
        Var a = g.param(store, "a");
        Var b = g.param(store, "b");
        Var tab = g.param(store, "table");
        Var col = g.param(store, "col");
        Var lse = g.logaddexp(a, b);
        Var lg = g.lgamma(g.add_scalar(g.mul(a, a), 0.5));
        Var sm = g.log_softmax_rows(g.mul(a, b));
        Var gat = g.gather_rows(tab, {2, 0});
        Var mixed = g.add_colvec(g.mul_colvec(g.add(lse, lg), col), col);
        Var all = g.sum_all(g.add(mixed, sm));
        all = g.add(all, g.sum_all(gat));
        return std::pair<Graph, Var>(std::move(g), all);
    };
    auto [g0, l0] = eval();
    g0.backward(l0);
    store.zero_grads();
    g0.add_param_grads(store);
    for (auto& [name, entry] : store.entries) {
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            double fd = test::central_diff(
                [&]() {
                    auto [g, l] = eval();
                    return g.value(l).data[0];
                },
                entry.value.data[i]);
            CHECK_MESSAGE(test::grad_rel_err(entry.grad.data[i], fd) < 1e-4,
                          name << "[" << i << "]");
        }
    }
    // gather duplicates accumulate: row 1 of table untouched
    CHECK(store.grad("table").data[2] == 0.0);
    CHECK(store.grad("table").data[3] == 0.0);
}

TEST_CASE("softplus output is strictly positive") {
    Graph g;
    Tensor x = Tensor::matrix(1, 4, {-40.0, -1.0, 0.0, 30.0});
    const Tensor& y = g.value(g.softplus(g.constant(x)));
    for (double v : y.data) CHECK(v > 0.0);
}

TEST_CASE("adam: zero gradient leaves parameters fixed") {
    ParamStore store;
    store.add("w", Tensor::matrix(1, 2, {1.0, -2.0}));
    num::Adam opt(0.1);
    opt.step(store);
    CHECK(store.value("w").data[0] == 1.0);
    CHECK(store.value("w").data[1] == -2.0);
}

TEST_CASE("adam: single scalar hand recurrence, first step") {
    // g = 1, lr = 0.1: m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
    ParamStore store;
    store.add("w", Tensor::matrix(1, 1, {0.0}));
    store.grad("w").data[0] = 1.0;
    num::Adam opt(0.1);
    opt.step(store);
    double expected = -0.1 * 1.0 / (1.0 + 1e-8);
    CHECK(store.value("w").data[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(store.value("w").data[0] + 0.1) < 1e-8);
}

TEST_CASE("adam: non-finite gradient names the parameter") {
    ParamStore store;
    store.add("bad_param", Tensor::matrix(1, 1, {0.0}));
    store.grad("bad_param").data[0] = std::nan("");
    num::Adam opt(0.1);
    try {
        opt.step(store);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("bad_param") != std::string::npos);
    }
}

TEST_CASE("adam: identical runs are bitwise identical") {
    auto run = [] {
        Rng rng(3);
        ParamStore store;
        MlpSpec spec = MlpSpec::dense({2, 3, 1}, num::Activation::kRelu,
                                      num::Activation::kIdentity);
        num::init_mlp(store, spec, "net", rng);
        num::Adam opt(1e-2);
        Tensor x = Tensor::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
        for (int it = 0; it < 20; ++it) {
            Graph g;
            Var out = num::mlp_forward(g, spec, store, "net", g.constant(x));
            Var loss = g.sum_all(g.mul(out, out));
            g.backward(loss);
            store.zero_grads();
            g.add_param_grads(store);
            opt.step(store);
        }
        return store;
    };
    ParamStore a = run(), b = run();
    for (const auto& [name, entry] : a.entries) {
        const Tensor& other = b.value(name);
        for (std::size_t i = 0; i < entry.value.size(); ++i)
            CHECK(entry.value.data[i] == other.data[i]);
    }
}

TEST_CASE("residual MLP: source width validated and skip applied") {
    MlpSpec spec;
    spec.widths = {3, 3, 3};
    spec.activations = {num::Activation::kIdentity, num::Activation::kIdentity};
    spec.residual_from = {-1, 0};  // second layer adds the block input
    ParamStore store;
    Rng rng(2);
    num::init_mlp(store, spec, "net", rng);
    // zero both weight matrices: output should equal input exactly
    store.value("net.w0").fill(0.0);
    store.value("net.w1").fill(0.0);
    Tensor x = Tensor::matrix(1, 3, {0.5, -1.0, 2.0});
    Tensor y = num::mlp_apply(spec, store, "net", x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.data[i] == x.data[i]);

    MlpSpec bad = spec;
    bad.widths = {3, 4, 3};
    bad.residual_from = {-1, 1};  // source width 4 vs layer output width 3
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("checkpoint round trip preserves every tensor bit") {
    Rng rng(77);
    ParamStore store;
    store.add("alpha", Tensor::matrix(3, 4, [&] {
                  std::vector<double> v(12);
                  for (double& x : v) x = rng.normal();
                  return v;
              }()));
    store.add("beta.w0", Tensor::matrix(2, 2, {1e-300, -1e300, 0.0, 3.14}));
    std::string path = "/tmp/cellforge_test_ckpt.cfp";
    num::save_params(store, path);
    ParamStore loaded = num::load_params(path);
    for (const auto& [name, entry] : store.entries) {
        REQUIRE(loaded.has(name));
        const Tensor& t = loaded.value(name);
        REQUIRE(t.shape == entry.value.shape);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data[i] == entry.value.data[i]);
    }
    CHECK_THROWS_AS(num::load_params("/tmp/definitely_missing.cfp"), IoError);
}

TEST_CASE("digamma matches lgamma finite difference") {
    for (double x : {0.3, 1.0, 2.5, 7.0, 42.0}) {
        double h = 1e-6;
        double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
        CHECK(num::digamma(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}
