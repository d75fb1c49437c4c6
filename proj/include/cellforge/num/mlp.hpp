#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cellforge/num/graph.hpp"
#include "cellforge/num/rng.hpp"

namespace cellforge::num {

enum class Activation { kRelu, kSoftplus, kIdentity };

/// Fully connected stack. widths has one entry per layer boundary (>= 2);
/// activations and residual_from have widths.size()-1 entries. residual_from
/// entries index the sequence of intermediate values (0 = block input,
/// i = output of layer i) and -1 disables the skip; the source width must
/// equal the layer's output width.
struct MlpSpec {
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;
    std::vector<int> residual_from;

    static MlpSpec dense(std::vector<std::size_t> widths, Activation hidden,
                         Activation final);
    std::size_t layer_count() const { return widths.size() - 1; }
    void validate() const;
};

std::string weight_name(const std::string& prefix, std::size_t layer);
std::string bias_name(const std::string& prefix, std::size_t layer);

/// Allocate and initialize one MLP's parameters under `prefix`. Weights are
/// Glorot-scaled normals, biases zero.
void init_mlp(ParamStore& store, const MlpSpec& spec, const std::string& prefix, Rng& rng);

/// Traced forward pass; x is [batch, widths.front()].
Var mlp_forward(Graph& g, const MlpSpec& spec, const ParamStore& store,
                const std::string& prefix, Var x);

/// Untraced forward pass for inference-only paths.
Tensor mlp_apply(const MlpSpec& spec, const ParamStore& store, const std::string& prefix,
                 const Tensor& x);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace cellforge::num
