#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellforge/eval/metrics.hpp"
#include "cellforge/expr/matrix.hpp"

namespace cellforge::eval {

struct GenerativeReport {
    double mmd = 0.0;
    double omega = 0.0;
    std::map<std::size_t, double> sknn_real;
    std::map<std::size_t, double> sknn_gen;
    std::map<std::size_t, double> delta;
    std::map<std::size_t, double> pknn;
    std::size_t fit_components = 0;
    std::size_t embed_dim = 0;
};

struct EvalReport {
    std::optional<GenerativeReport> generative;
    std::optional<ClassificationMetrics> classification;

    /// Flat dotted keys (mmd, sknn.K5 ... pknn.K50, f1.weighted, f1.macro,
    /// accuracy.true, ...), deterministic byte-stable serialization.
    std::string to_json() const;
    void save_json(const std::string& path) const;
    void save_csv(const std::string& path) const;
};

struct EvalOptions {
    std::vector<std::size_t> k_sweep = kDefaultKSweep;
    std::size_t fit_components = 50;
    std::size_t embed_dim = 2;
    std::size_t bandwidth_neighbors = 25;
    double target_sum = 1e4;
};

/// Normalize both datasets, fit PCA on the real cells, embed both, compute
/// MMD / sKNN / delta-sKNN / pKNN over the K sweep.
GenerativeReport evaluate_generative(const expr::Dataset& real, const expr::Dataset& gen,
                                     const EvalOptions& opts);

}  // namespace cellforge::eval
