#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace cellforge::expr {

/// Ordered list of unique gene identifiers plus the inverse index.
struct GeneVocabulary {
    std::vector<std::string> genes;
    std::unordered_map<std::string, std::size_t> index;

    static GeneVocabulary from_genes(std::vector<std::string> names);
    std::size_t size() const { return genes.size(); }
    bool contains(const std::string& g) const { return index.count(g) != 0; }
    std::uint64_t content_hash() const;
};

struct SparseEntry {
    std::uint32_t gene;
    std::uint32_t count;
};

/// Sparse cell x gene matrix of non-negative integer counts. Rows store
/// (gene index, count) pairs with strictly increasing indices and no explicit
/// zeros.
struct ExpressionMatrix {
    std::size_t n_cells = 0;
    std::size_t n_genes = 0;
    std::vector<std::vector<SparseEntry>> rows;
    GeneVocabulary vocab;

    std::size_t nnz() const;
    double total_count(std::size_t cell) const;
    std::size_t unique_genes(std::size_t cell) const { return rows[cell].size(); }
    std::vector<double> dense_row(std::size_t cell) const;
    /// Column-major dense copy is never needed; this is the row-major one.
    std::vector<double> dense() const;
    /// Enforces the sparsity canonical form; throws ValidationError.
    void validate() const;
};

enum class Split : std::uint8_t { kTrain = 0, kValid = 1, kTest = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// Per-cell annotation columns. `extra` holds any further CSV columns,
/// column-oriented.
struct CellAnnotations {
    std::vector<std::string> cell_ids;
    std::vector<std::string> labels;
    std::vector<std::string> species;
    std::vector<std::string> tissues;
    std::map<std::string, std::vector<std::string>> extra;

    std::size_t size() const { return labels.size(); }
    void validate(std::size_t n_cells) const;
    CellAnnotations subset(const std::vector<std::size_t>& keep) const;
};

struct Dataset {
    ExpressionMatrix matrix;
    CellAnnotations annotations;
    std::vector<Split> split;  // empty until split_dataset assigns tags

    void validate() const;
    std::vector<std::size_t> cells_in_split(Split s) const;
    Dataset subset(const std::vector<std::size_t>& keep) const;
};

struct QcThresholds {
    std::size_t min_genes_per_cell = 200;
    std::size_t min_cells_per_gene = 8;
    std::vector<std::string> mito_prefixes;
    double max_mito_fraction = 0.2;
    // 0 disables the absolute cap; the CLI resolves its percentile default
    // before calling in.
    double max_total_counts = 0.0;
};

struct QcReport {
    std::size_t cells_removed_low_genes = 0;
    std::size_t cells_removed_aberrant = 0;
    std::size_t genes_removed = 0;
    QcThresholds thresholds;
    std::vector<std::size_t> kept_cells;  // input-row indices that survived
    std::vector<std::size_t> kept_genes;  // input-column indices that survived
};

}  // namespace cellforge::expr
