#include "cellforge/clf/markers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cellforge/expr/transform.hpp"
#include "cellforge/kernels/kernels.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::clf {

MarkerTable rank_markers(const expr::Dataset& d, const std::string& class_name,
                         std::size_t top_k, double target_sum) {
    d.validate();
    std::size_t n = d.matrix.n_cells, gn = d.matrix.n_genes;
    std::vector<std::uint8_t> in_class(n, 0);
    std::size_t n_in = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (d.annotations.labels[i] == class_name) {
            in_class[i] = 1;
            ++n_in;
        }
    if (n_in == 0)
        throw ValidationError("rank_markers: class '" + class_name + "' not present");
    if (n_in < 2 || n - n_in < 2)
        throw ValidationError("rank_markers: need >= 2 cells inside and outside the class");

    std::vector<double> norm = expr::normalize_log1p(d.matrix, target_sum);
    std::vector<kernels::GroupStats> stats(gn);
    kernels::column_group_stats(norm.data(), n, gn, in_class.data(), stats.data());

    std::vector<std::size_t> expressed(gn, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (in_class[i])
            for (const expr::SparseEntry& e : d.matrix.rows[i]) ++expressed[e.gene];

    MarkerTable table;
    table.class_name = class_name;
    table.rows.resize(gn);
    for (std::size_t j = 0; j < gn; ++j) {
        WelchResult w = welch_t_from_stats(stats[j].mean_a, stats[j].var_a, stats[j].n_a,
                                           stats[j].mean_b, stats[j].var_b, stats[j].n_b);
        MarkerRow& row = table.rows[j];
        row.gene = j;
        row.t = w.t;
        row.df = w.df;
        row.p = w.p;
        row.mean_in_class = stats[j].mean_a;
        row.fraction_in_class = static_cast<double>(expressed[j]) / static_cast<double>(n_in);
    }
    std::sort(table.rows.begin(), table.rows.end(), [](const MarkerRow& a, const MarkerRow& b) {
        if (a.p != b.p) return a.p < b.p;
        double ta = std::abs(a.t), tb = std::abs(b.t);
        if (ta != tb) return ta > tb;
        return a.gene < b.gene;
    });
    if (top_k > 0 && table.rows.size() > top_k) table.rows.resize(top_k);
    return table;
}

void save_marker_tsv(const std::vector<MarkerTable>& tables, const expr::GeneVocabulary& vocab,
                     const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write marker table: " + path);
    out << "class\trank\tgene\tt\tdf\tp\tmean_expression\texpression_fraction\n";
    out.precision(17);
    for (const MarkerTable& t : tables) {
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const MarkerRow& row = t.rows[r];
            out << t.class_name << "\t" << (r + 1) << "\t" << vocab.genes[row.gene] << "\t"
                << row.t << "\t" << row.df << "\t" << row.p << "\t" << row.mean_in_class << "\t"
                << row.fraction_in_class << "\n";
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cellforge::clf
