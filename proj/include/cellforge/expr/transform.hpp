#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cellforge/expr/matrix.hpp"

namespace cellforge::expr {

/// Quality control: drop low-gene cells, aberrant cells (mitochondrial
/// fraction / total-count cap), then under-expressed genes, iterated until
/// both postconditions hold simultaneously; idempotent. Throws if no cell
/// survives (report is included in the message).
std::pair<ExpressionMatrix, QcReport> qc_filter(const ExpressionMatrix& m,
                                                const QcThresholds& thresholds);

/// Percentile of per-cell total counts (linear interpolation), used by the
/// CLI to resolve the default total-count cap.
double total_count_percentile(const ExpressionMatrix& m, double pct);

/// Row-normalize counts to target_sum, then log1p. Dense row-major output.
std::vector<double> normalize_log1p(const ExpressionMatrix& m, double target_sum);

/// Indices of the n_top most variable genes: per-gene dispersion
/// (population variance / mean of the log1p-normalized values) z-scored
/// within 20 equal-frequency mean bins, ranked descending, ties broken by
/// ascending gene index. Returned in rank order.
std::vector<std::size_t> select_hvg(const ExpressionMatrix& m, std::size_t n_top);

/// Union of per-dataset gene sets, ordered lexicographically.
GeneVocabulary build_vocabulary(const std::vector<std::set<std::string>>& hvg_sets);

struct OrthologResult {
    ExpressionMatrix matrix;
    std::vector<std::string> warnings;  // identifier collisions that were merged
};

/// Rename genes through a source->target table; unmapped genes keep their
/// identifier, collisions merge by summing counts per cell.
OrthologResult apply_ortholog_map(const ExpressionMatrix& m,
                                  const std::map<std::string, std::string>& mapping);

/// Restrict the matrix to a subset of gene columns (given as input-column
/// indices, ascending).
ExpressionMatrix restrict_genes(const ExpressionMatrix& m,
                                const std::vector<std::size_t>& gene_indices);

/// Re-project a matrix onto a target vocabulary; genes absent from the
/// target are dropped, genes absent from the source become zero columns.
ExpressionMatrix reindex(const ExpressionMatrix& m, const GeneVocabulary& target);

/// Seeded shuffle split with floor-then-remainder-to-train counts. Ratios
/// must be positive and sum to 1 within 1e-9.
std::vector<Split> make_split(std::size_t n_cells, double train, double valid, double test,
                              std::uint64_t seed);

Dataset split_dataset(Dataset d, double train, double valid, double test, std::uint64_t seed);

/// Optional rare-class filter: drop cells whose label occurs fewer than
/// min_cells times.
Dataset filter_rare_labels(const Dataset& d, std::size_t min_cells);

}  // namespace cellforge::expr
