#include "cellforge/expr/matrix.hpp"

#include "cellforge/util/errors.hpp"
#include "cellforge/util/hash.hpp"

namespace cellforge::expr {

GeneVocabulary GeneVocabulary::from_genes(std::vector<std::string> names) {
    GeneVocabulary v;
    v.genes = std::move(names);
    v.index.reserve(v.genes.size());
    for (std::size_t i = 0; i < v.genes.size(); ++i) {
        auto [it, inserted] = v.index.emplace(v.genes[i], i);
        if (!inserted) throw ValidationError("duplicate gene identifier: " + v.genes[i]);
    }
    return v;
}

std::uint64_t GeneVocabulary::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::string& g : genes) {
        h = util::fnv1a64(g, h);
        h = util::fnv1a64(std::string_view("\n"), h);
    }
    return h;
}

std::size_t ExpressionMatrix::nnz() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
}

double ExpressionMatrix::total_count(std::size_t cell) const {
    double t = 0.0;
    for (const SparseEntry& e : rows[cell]) t += e.count;
    return t;
}

std::vector<double> ExpressionMatrix::dense_row(std::size_t cell) const {
    std::vector<double> out(n_genes, 0.0);
    for (const SparseEntry& e : rows[cell]) out[e.gene] = e.count;
    return out;
}

std::vector<double> ExpressionMatrix::dense() const {
    std::vector<double> out(n_cells * n_genes, 0.0);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (const SparseEntry& e : rows[i]) out[i * n_genes + e.gene] = e.count;
    return out;
}

void ExpressionMatrix::validate() const {
    if (rows.size() != n_cells) throw ValidationError("row count does not match n_cells");
    if (vocab.size() != n_genes)
        throw ValidationError("vocabulary size does not match n_genes");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::uint32_t prev = 0;
        bool first = true;
        for (const SparseEntry& e : rows[i]) {
            if (e.gene >= n_genes)
                throw ValidationError("gene index out of range in cell " + std::to_string(i));
            if (!first && e.gene <= prev)
                throw ValidationError("gene indices not strictly increasing in cell " +
                                      std::to_string(i));
            if (e.count == 0)
                throw ValidationError("stored zero entry in cell " + std::to_string(i));
            prev = e.gene;
            first = false;
        }
    }
}

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kValid: return "valid";
        case Split::kTest: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "valid") return Split::kValid;
    if (name == "test") return Split::kTest;
    throw ValidationError("unknown split tag: " + name);
}

void CellAnnotations::validate(std::size_t n_cells) const {
    if (labels.size() != n_cells || species.size() != n_cells || tissues.size() != n_cells)
        throw ValidationError("annotation length does not match cell count");
    if (!cell_ids.empty() && cell_ids.size() != n_cells)
        throw ValidationError("cell_id column length does not match cell count");
    for (const auto& [key, col] : extra)
        if (col.size() != n_cells)
            throw ValidationError("extra annotation column '" + key + "' has wrong length");
}

CellAnnotations CellAnnotations::subset(const std::vector<std::size_t>& keep) const {
    CellAnnotations out;
    auto pick = [&](const std::vector<std::string>& src, std::vector<std::string>& dst) {
        if (src.empty()) return;
        dst.reserve(keep.size());
        for (std::size_t i : keep) dst.push_back(src[i]);
    };
    pick(cell_ids, out.cell_ids);
    pick(labels, out.labels);
    pick(species, out.species);
    pick(tissues, out.tissues);
    for (const auto& [key, col] : extra) pick(col, out.extra[key]);
    return out;
}

void Dataset::validate() const {
    matrix.validate();
    annotations.validate(matrix.n_cells);
    if (!split.empty() && split.size() != matrix.n_cells)
        throw ValidationError("split tags do not cover all cells");
}

std::vector<std::size_t> Dataset::cells_in_split(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& keep) const {
    Dataset out;
    out.matrix.n_cells = keep.size();
    out.matrix.n_genes = matrix.n_genes;
    out.matrix.vocab = matrix.vocab;
    out.matrix.rows.reserve(keep.size());
    for (std::size_t i : keep) out.matrix.rows.push_back(matrix.rows[i]);
    out.annotations = annotations.subset(keep);
    if (!split.empty()) {
        out.split.reserve(keep.size());
        for (std::size_t i : keep) out.split.push_back(split[i]);
    }
    return out;
}

}  // namespace cellforge::expr
