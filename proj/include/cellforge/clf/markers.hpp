#pragma once

#include <string>
#include <vector>

#include "cellforge/clf/stats.hpp"
#include "cellforge/expr/matrix.hpp"

namespace cellforge::clf {

struct MarkerRow {
    std::size_t gene = 0;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double mean_in_class = 0.0;   // mean log1p-normalized expression in-class
    double fraction_in_class = 0.0;  // fraction of in-class cells with count > 0
};

struct MarkerTable {
    std::string class_name;
    std::vector<MarkerRow> rows;  // ranked by p ascending, ties by |t| descending
};

/// One-vs-rest Welch test per gene on log1p-normalized expression, ranked by
/// p-value. top_k = 0 keeps every gene.
MarkerTable rank_markers(const expr::Dataset& d, const std::string& class_name,
                         std::size_t top_k, double target_sum = 1e4);

void save_marker_tsv(const std::vector<MarkerTable>& tables, const expr::GeneVocabulary& vocab,
                     const std::string& path);

}  // namespace cellforge::clf
