#include "cellforge/expr/transform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellforge/kernels/kernels.hpp"
#include "cellforge/num/rng.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::expr {

namespace {

bool has_mito_prefix(const std::string& gene, const std::vector<std::string>& prefixes) {
    for (const std::string& p : prefixes)
        if (!p.empty() && gene.rfind(p, 0) == 0) return true;
    return false;
}

ExpressionMatrix take(const ExpressionMatrix& m, const std::vector<std::size_t>& cells,
                      const std::vector<std::size_t>& genes) {
    std::vector<std::uint32_t> col_map(m.n_genes, UINT32_MAX);
    for (std::size_t j = 0; j < genes.size(); ++j)
        col_map[genes[j]] = static_cast<std::uint32_t>(j);
    ExpressionMatrix out;
    out.n_cells = cells.size();
    out.n_genes = genes.size();
    std::vector<std::string> names;
    names.reserve(genes.size());
    for (std::size_t j : genes) names.push_back(m.vocab.genes[j]);
    out.vocab = GeneVocabulary::from_genes(std::move(names));
    out.rows.reserve(cells.size());
    for (std::size_t i : cells) {
        std::vector<SparseEntry> row;
        for (const SparseEntry& e : m.rows[i])
            if (col_map[e.gene] != UINT32_MAX) row.push_back({col_map[e.gene], e.count});
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace

std::pair<ExpressionMatrix, QcReport> qc_filter(const ExpressionMatrix& m,
                                                const QcThresholds& t) {
    QcReport report;
    report.thresholds = t;

    std::vector<std::size_t> cells(m.n_cells), genes(m.n_genes);
    std::iota(cells.begin(), cells.end(), 0);
    std::iota(genes.begin(), genes.end(), 0);

    ExpressionMatrix cur = m;
    // The two postconditions interact (removing genes can push a cell below
    // the unique-gene floor and vice versa), so iterate rounds until stable.
    bool first_round = true;
    while (true) {
        bool changed = false;

        std::vector<std::size_t> keep_cells;
        for (std::size_t i = 0; i < cur.n_cells; ++i) {
            if (cur.unique_genes(i) < t.min_genes_per_cell) {
                ++report.cells_removed_low_genes;
                changed = true;
                continue;
            }
            keep_cells.push_back(i);
        }
        if (changed || first_round) {
            std::vector<std::size_t> abs_cells;
            for (std::size_t i : keep_cells) abs_cells.push_back(cells[i]);
            std::vector<std::size_t> all_genes(cur.n_genes);
            std::iota(all_genes.begin(), all_genes.end(), 0);
            cur = take(cur, keep_cells, all_genes);
            cells = std::move(abs_cells);
        }

        std::vector<std::size_t> keep_after_aberrant;
        for (std::size_t i = 0; i < cur.n_cells; ++i) {
            double total = cur.total_count(i);
            bool aberrant = false;
            if (t.max_total_counts > 0.0 && total > t.max_total_counts) aberrant = true;
            if (!aberrant && !t.mito_prefixes.empty()) {
                double mito = 0.0;
                for (const SparseEntry& e : cur.rows[i])
                    if (has_mito_prefix(cur.vocab.genes[e.gene], t.mito_prefixes))
                        mito += e.count;
                if (total > 0.0 && mito / total > t.max_mito_fraction) aberrant = true;
            }
            if (aberrant) {
                ++report.cells_removed_aberrant;
                changed = true;
            } else {
                keep_after_aberrant.push_back(i);
            }
        }
        if (keep_after_aberrant.size() != cur.n_cells) {
            std::vector<std::size_t> abs_cells;
            for (std::size_t i : keep_after_aberrant) abs_cells.push_back(cells[i]);
            std::vector<std::size_t> all_genes(cur.n_genes);
            std::iota(all_genes.begin(), all_genes.end(), 0);
            cur = take(cur, keep_after_aberrant, all_genes);
            cells = std::move(abs_cells);
        }

        if (cur.n_cells == 0) {
            throw ValidationError(
                "qc_filter removed every cell (low-gene: " +
                std::to_string(report.cells_removed_low_genes) +
                ", aberrant: " + std::to_string(report.cells_removed_aberrant) + ")");
        }

        std::vector<std::size_t> cells_per_gene(cur.n_genes, 0);
        for (const auto& row : cur.rows)
            for (const SparseEntry& e : row) ++cells_per_gene[e.gene];
        std::vector<std::size_t> keep_genes;
        for (std::size_t j = 0; j < cur.n_genes; ++j) {
            if (cells_per_gene[j] < t.min_cells_per_gene) {
                ++report.genes_removed;
                changed = true;
            } else {
                keep_genes.push_back(j);
            }
        }
        if (keep_genes.size() != cur.n_genes) {
            std::vector<std::size_t> abs_genes;
            for (std::size_t j : keep_genes) abs_genes.push_back(genes[j]);
            std::vector<std::size_t> all_cells(cur.n_cells);
            std::iota(all_cells.begin(), all_cells.end(), 0);
            cur = take(cur, all_cells, keep_genes);
            genes = std::move(abs_genes);
        }

        if (!changed) break;
        first_round = false;
    }

    report.kept_cells = cells;
    report.kept_genes = genes;
    return {std::move(cur), std::move(report)};
}

double total_count_percentile(const ExpressionMatrix& m, double pct) {
    if (m.n_cells == 0) throw ValidationError("percentile of an empty matrix");
    std::vector<double> totals(m.n_cells);
    for (std::size_t i = 0; i < m.n_cells; ++i) totals[i] = m.total_count(i);
    std::sort(totals.begin(), totals.end());
    double rank = pct / 100.0 * static_cast<double>(m.n_cells - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, m.n_cells - 1);
    double frac = rank - static_cast<double>(lo);
    return totals[lo] * (1.0 - frac) + totals[hi] * frac;
}

std::vector<double> normalize_log1p(const ExpressionMatrix& m, double target_sum) {
    if (target_sum <= 0.0) throw ValidationError("target_sum must be positive");
    std::vector<double> totals(m.n_cells);
    for (std::size_t i = 0; i < m.n_cells; ++i) {
        totals[i] = m.total_count(i);
        if (totals[i] <= 0.0)
            throw ValidationError("normalize_log1p: cell " + std::to_string(i) +
                                  " has zero total count");
    }
    std::vector<double> dense = m.dense();
    std::vector<double> out(m.n_cells * m.n_genes);
    kernels::rows_normalize_log1p(dense.data(), m.n_cells, m.n_genes, totals.data(),
                                  target_sum, out.data());
    return out;
}

std::vector<std::size_t> select_hvg(const ExpressionMatrix& m, std::size_t n_top) {
    if (n_top > m.n_genes)
        throw ValidationError("select_hvg: n_top " + std::to_string(n_top) +
                              " exceeds gene count " + std::to_string(m.n_genes));
    if (m.n_cells == 0) throw ValidationError("select_hvg: empty matrix");
    std::vector<double> x = normalize_log1p(m, 1e4);
    std::size_t g = m.n_genes, n = m.n_cells;
    std::vector<double> mean(g, 0.0), disp(g, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g; ++j) mean[j] += x[i * g + j];
    for (std::size_t j = 0; j < g; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t j = 0; j < g; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = x[i * g + j] - mean[j];
            acc += d * d;
        }
        double var = acc / static_cast<double>(n);  // population variance
        disp[j] = mean[j] > 0.0 ? var / mean[j] : 0.0;
    }

    // 20 equal-frequency mean bins; z-score dispersions within each bin.
    std::vector<std::size_t> order(g);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (mean[a] != mean[b]) return mean[a] < mean[b];
        return a < b;
    });
    constexpr std::size_t kBins = 20;
    std::size_t n_bins = std::min(kBins, g);
    std::vector<double> z(g, 0.0);
    std::size_t base = g / n_bins, extra = g % n_bins, pos = 0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        std::size_t len = base + (b < extra ? 1 : 0);
        if (len == 0) continue;
        double bm = 0.0;
        for (std::size_t k = 0; k < len; ++k) bm += disp[order[pos + k]];
        bm /= static_cast<double>(len);
        double bv = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            double d = disp[order[pos + k]] - bm;
            bv += d * d;
        }
        double bs = std::sqrt(bv / static_cast<double>(len));
        for (std::size_t k = 0; k < len; ++k) {
            std::size_t j = order[pos + k];
            z[j] = bs > 0.0 ? (disp[j] - bm) / bs : 0.0;
        }
        pos += len;
    }

    std::vector<std::size_t> rank(g);
    std::iota(rank.begin(), rank.end(), 0);
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        if (z[a] != z[b]) return z[a] > z[b];
        return a < b;
    });
    rank.resize(n_top);
    return rank;
}

GeneVocabulary build_vocabulary(const std::vector<std::set<std::string>>& hvg_sets) {
    std::set<std::string> all;
    for (const auto& s : hvg_sets) all.insert(s.begin(), s.end());
    if (all.empty()) throw ValidationError("build_vocabulary: no genes provided");
    return GeneVocabulary::from_genes({all.begin(), all.end()});
}

OrthologResult apply_ortholog_map(const ExpressionMatrix& m,
                                  const std::map<std::string, std::string>& mapping) {
    OrthologResult res;
    // Target name per input column; first occurrence fixes output position.
    std::vector<std::string> target(m.n_genes);
    for (std::size_t j = 0; j < m.n_genes; ++j) {
        auto it = mapping.find(m.vocab.genes[j]);
        target[j] = it == mapping.end() ? m.vocab.genes[j] : it->second;
    }
    std::unordered_map<std::string, std::uint32_t> out_index;
    std::vector<std::string> out_genes;
    std::vector<std::uint32_t> col_map(m.n_genes);
    for (std::size_t j = 0; j < m.n_genes; ++j) {
        auto it = out_index.find(target[j]);
        if (it == out_index.end()) {
            std::uint32_t idx = static_cast<std::uint32_t>(out_genes.size());
            out_index.emplace(target[j], idx);
            out_genes.push_back(target[j]);
            col_map[j] = idx;
        } else {
            col_map[j] = it->second;
            res.warnings.push_back("merged counts of '" + m.vocab.genes[j] + "' into '" +
                                   target[j] + "'");
        }
    }
    ExpressionMatrix out;
    out.n_cells = m.n_cells;
    out.n_genes = out_genes.size();
    out.vocab = GeneVocabulary::from_genes(std::move(out_genes));
    out.rows.resize(m.n_cells);
    for (std::size_t i = 0; i < m.n_cells; ++i) {
        std::map<std::uint32_t, std::uint64_t> acc;
        for (const SparseEntry& e : m.rows[i]) acc[col_map[e.gene]] += e.count;
        auto& row = out.rows[i];
        row.reserve(acc.size());
        for (const auto& [col, count] : acc) {
            if (count > UINT32_MAX) throw ValidationError("merged count overflows 32 bits");
            row.push_back({col, static_cast<std::uint32_t>(count)});
        }
    }
    out.validate();
    res.matrix = std::move(out);
    return res;
}

ExpressionMatrix restrict_genes(const ExpressionMatrix& m,
                                const std::vector<std::size_t>& gene_indices) {
    std::vector<std::size_t> cells(m.n_cells);
    std::iota(cells.begin(), cells.end(), 0);
    return take(m, cells, gene_indices);
}

ExpressionMatrix reindex(const ExpressionMatrix& m, const GeneVocabulary& target) {
    ExpressionMatrix out;
    out.n_cells = m.n_cells;
    out.n_genes = target.size();
    out.vocab = target;
    std::vector<std::uint32_t> col_map(m.n_genes, UINT32_MAX);
    for (std::size_t j = 0; j < m.n_genes; ++j) {
        auto it = target.index.find(m.vocab.genes[j]);
        if (it != target.index.end()) col_map[j] = static_cast<std::uint32_t>(it->second);
    }
    out.rows.resize(m.n_cells);
    for (std::size_t i = 0; i < m.n_cells; ++i) {
        std::vector<SparseEntry> row;
        for (const SparseEntry& e : m.rows[i])
            if (col_map[e.gene] != UINT32_MAX) row.push_back({col_map[e.gene], e.count});
        std::sort(row.begin(), row.end(),
                  [](const SparseEntry& a, const SparseEntry& b) { return a.gene < b.gene; });
        out.rows[i] = std::move(row);
    }
    out.validate();
    return out;
}

std::vector<Split> make_split(std::size_t n_cells, double train, double valid, double test,
                              std::uint64_t seed) {
    if (train <= 0.0 || valid <= 0.0 || test <= 0.0)
        throw ValidationError("split ratios must all be positive");
    if (std::abs(train + valid + test - 1.0) > 1e-9)
        throw ValidationError("split ratios must sum to 1");
    if (n_cells < 3) throw ValidationError("need at least 3 cells to split");
    auto n_train = static_cast<std::size_t>(std::floor(train * static_cast<double>(n_cells)));
    auto n_valid = static_cast<std::size_t>(std::floor(valid * static_cast<double>(n_cells)));
    auto n_test = static_cast<std::size_t>(std::floor(test * static_cast<double>(n_cells)));
    n_train += n_cells - (n_train + n_valid + n_test);  // remainder to train
    std::vector<std::size_t> order(n_cells);
    std::iota(order.begin(), order.end(), 0);
    num::Rng rng(seed);
    rng.shuffle(order);
    std::vector<Split> out(n_cells, Split::kTrain);
    for (std::size_t k = 0; k < n_cells; ++k) {
        if (k < n_train)
            out[order[k]] = Split::kTrain;
        else if (k < n_train + n_valid)
            out[order[k]] = Split::kValid;
        else
            out[order[k]] = Split::kTest;
    }
    return out;
}

Dataset split_dataset(Dataset d, double train, double valid, double test, std::uint64_t seed) {
    d.split = make_split(d.matrix.n_cells, train, valid, test, seed);
    d.validate();
    return d;
}

Dataset filter_rare_labels(const Dataset& d, std::size_t min_cells) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& l : d.annotations.labels) ++counts[l];
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d.matrix.n_cells; ++i)
        if (counts[d.annotations.labels[i]] >= min_cells) keep.push_back(i);
    return d.subset(keep);
}

}  // namespace cellforge::expr
