#include "cellforge/num/mlp.hpp"

#include <cmath>

#include "cellforge/kernels/kernels.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::num {

MlpSpec MlpSpec::dense(std::vector<std::size_t> widths, Activation hidden, Activation final) {
    MlpSpec spec;
    spec.widths = std::move(widths);
    if (spec.widths.size() < 2) throw ValidationError("MlpSpec: need at least two widths");
    spec.activations.assign(spec.widths.size() - 1, hidden);
    spec.activations.back() = final;
    spec.residual_from.assign(spec.widths.size() - 1, -1);
    return spec;
}

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ValidationError("MlpSpec: need at least two widths");
    if (activations.size() != widths.size() - 1 || residual_from.size() != widths.size() - 1)
        throw ValidationError("MlpSpec: per-layer lists must have widths-1 entries");
    for (std::size_t i = 0; i < residual_from.size(); ++i) {
        int src = residual_from[i];
        if (src < 0) continue;
        if (static_cast<std::size_t>(src) > i)
            throw ValidationError("MlpSpec: residual source must precede the layer");
        if (widths[static_cast<std::size_t>(src)] != widths[i + 1])
            throw ValidationError("MlpSpec: residual source width must equal layer output width");
    }
}

std::string weight_name(const std::string& prefix, std::size_t layer) {
    return prefix + ".w" + std::to_string(layer);
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
    return prefix + ".b" + std::to_string(layer);
}

void init_mlp(ParamStore& store, const MlpSpec& spec, const std::string& prefix, Rng& rng) {
    spec.validate();
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        std::size_t fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
        double scale = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
        Tensor w = Tensor::zeros({fan_in, fan_out});
        for (double& v : w.data) v = rng.normal() * scale;
        store.add(weight_name(prefix, l), std::move(w));
        store.add(bias_name(prefix, l), Tensor::zeros({1, fan_out}));
    }
}

Var mlp_forward(Graph& g, const MlpSpec& spec, const ParamStore& store,
                const std::string& prefix, Var x) {
    spec.validate();
    if (g.value(x).cols() != spec.widths.front())
        throw ValidationError("mlp_forward: input width " +
                              std::to_string(g.value(x).cols()) + " does not match layer 0 (" +
                              std::to_string(spec.widths.front()) + ") of " + prefix);
    std::vector<Var> stages;
    stages.push_back(x);
    Var h = x;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        Var w = g.param(store, weight_name(prefix, l));
        Var b = g.param(store, bias_name(prefix, l));
        h = g.add_rowvec(g.matmul(h, w), b);
        int src = spec.residual_from[l];
        if (src >= 0) h = g.add(h, stages[static_cast<std::size_t>(src)]);
        switch (spec.activations[l]) {
            case Activation::kRelu: h = g.relu(h); break;
            case Activation::kSoftplus: h = g.softplus(h); break;
            case Activation::kIdentity: break;
        }
        stages.push_back(h);
    }
    return h;
}

Tensor mlp_apply(const MlpSpec& spec, const ParamStore& store, const std::string& prefix,
                 const Tensor& x) {
    spec.validate();
    if (x.cols() != spec.widths.front())
        throw ValidationError("mlp_apply: input width does not match layer 0 of " + prefix);
    std::vector<Tensor> stages;
    stages.push_back(x);
    Tensor h = x;
    std::size_t rows = x.rows();
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const Tensor& w = store.value(weight_name(prefix, l));
        const Tensor& b = store.value(bias_name(prefix, l));
        Tensor next = Tensor::zeros({rows, w.cols()});
        kernels::gemm(h.data.data(), w.data.data(), next.data.data(), rows, w.rows(), w.cols());
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w.cols(); ++j) next.data[i * w.cols() + j] += b.data[j];
        int src = spec.residual_from[l];
        if (src >= 0) {
            const Tensor& s = stages[static_cast<std::size_t>(src)];
            for (std::size_t i = 0; i < next.size(); ++i) next.data[i] += s.data[i];
        }
        switch (spec.activations[l]) {
            case Activation::kRelu:
                for (double& v : next.data) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::kSoftplus:
                for (double& v : next.data) {
                    if (v > 35.0) continue;
                    v = v < -35.0 ? std::exp(v) : std::log1p(std::exp(v));
                }
                break;
            case Activation::kIdentity: break;
        }
        h = std::move(next);
        stages.push_back(h);
    }
    return h;
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kSoftplus: return "softplus";
        case Activation::kIdentity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "softplus") return Activation::kSoftplus;
    if (name == "identity") return Activation::kIdentity;
    throw ValidationError("unknown activation: " + name);
}

}  // namespace cellforge::num
