#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cellforge/clf/classifier.hpp"

namespace cellforge::clf {

/// Per-class aggregated gene importance in [0,1] plus the top-n gene lists.
struct SaliencyResult {
    std::vector<std::string> class_names;
    std::vector<std::vector<double>> scores;          // class x gene, in [0,1]
    std::vector<std::vector<std::size_t>> top_genes;  // class x n, descending score
    std::vector<std::string> warnings;
};

/// Gradient of the target-class loss at s (Vanilla Gradient).
std::vector<double> vanilla_gradient(const Classifier& clf, const std::vector<double>& s_norm,
                                     const std::string& target_label);

/// o = -g (*) m with m_i = 1 iff i in gene_set, g_i < 0, s_i > 0, then
/// min-max scaled to [0,1]; all-equal masked scores collapse to zeros.
/// An empty optional gene set means "every gene".
std::vector<double> saliency_scores(const std::vector<double>& gradient,
                                    const std::vector<double>& s,
                                    const std::optional<std::set<std::size_t>>& gene_set);

/// Mean of normalized per-cell scores within each class, then top-n genes
/// per class (ties broken by ascending gene index). Classes with zero cells
/// are omitted with a warning.
SaliencyResult aggregate_top_genes(
    const std::map<std::string, std::vector<std::vector<double>>>& scores_by_class,
    std::size_t n);

/// Full pipeline over a dataset: per-cell vanilla gradients against the
/// annotated label, masked scores, per-class aggregation, top-n.
SaliencyResult saliency_pipeline(const Classifier& clf, const expr::Dataset& data,
                                 const std::optional<std::set<std::size_t>>& gene_set,
                                 std::size_t top_n);

void save_saliency_tsv(const SaliencyResult& res, const expr::GeneVocabulary& vocab,
                       const std::string& path);

}  // namespace cellforge::clf
