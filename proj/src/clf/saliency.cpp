#include "cellforge/clf/saliency.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "cellforge/expr/transform.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::clf {

std::vector<double> vanilla_gradient(const Classifier& clf, const std::vector<double>& s_norm,
                                     const std::string& target_label) {
    const auto& classes = clf.classes();
    auto it = std::find(classes.begin(), classes.end(), target_label);
    if (it == classes.end())
        throw ValidationError("vanilla_gradient: unknown label '" + target_label + "'");
    return clf.input_gradient(s_norm, static_cast<std::size_t>(it - classes.begin()));
}

std::vector<double> saliency_scores(const std::vector<double>& gradient,
                                    const std::vector<double>& s,
                                    const std::optional<std::set<std::size_t>>& gene_set) {
    if (gradient.size() != s.size())
        throw ValidationError("saliency_scores: gradient and expression lengths disagree");
    std::size_t n = s.size();
    std::vector<double> o(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        bool in_set = !gene_set || gene_set->count(i) != 0;
        if (in_set && gradient[i] < 0.0 && s[i] > 0.0) o[i] = -gradient[i];
    }
    double lo = o[0], hi = o[0];
    for (double v : o) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        std::fill(o.begin(), o.end(), 0.0);
        return o;
    }
    for (double& v : o) v = (v - lo) / (hi - lo);
    return o;
}

SaliencyResult aggregate_top_genes(
    const std::map<std::string, std::vector<std::vector<double>>>& scores_by_class,
    std::size_t n) {
    SaliencyResult res;
    for (const auto& [cls, cells] : scores_by_class) {
        if (cells.empty()) {
            res.warnings.push_back("class '" + cls + "' has no cells; omitted");
            continue;
        }
        std::size_t genes = cells.front().size();
        std::vector<double> mean(genes, 0.0);
        for (const auto& cell : cells) {
            if (cell.size() != genes)
                throw ValidationError("aggregate_top_genes: inconsistent score lengths");
            for (std::size_t j = 0; j < genes; ++j) mean[j] += cell[j];
        }
        for (double& v : mean) v /= static_cast<double>(cells.size());
        std::vector<std::size_t> order(genes);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (mean[a] != mean[b]) return mean[a] > mean[b];
            return a < b;
        });
        order.resize(std::min(n, genes));
        res.class_names.push_back(cls);
        res.scores.push_back(std::move(mean));
        res.top_genes.push_back(std::move(order));
    }
    return res;
}

SaliencyResult saliency_pipeline(const Classifier& clf, const expr::Dataset& data,
                                 const std::optional<std::set<std::size_t>>& gene_set,
                                 std::size_t top_n) {
    data.validate();
    std::size_t gn = data.matrix.n_genes;
    std::vector<double> norm = expr::normalize_log1p(data.matrix, clf.config().target_sum);
    std::map<std::string, std::vector<std::vector<double>>> by_class;
    const auto& classes = clf.classes();
    for (std::size_t i = 0; i < data.matrix.n_cells; ++i) {
        const std::string& label = data.annotations.labels[i];
        if (std::find(classes.begin(), classes.end(), label) == classes.end()) continue;
        std::vector<double> row(norm.begin() + static_cast<std::ptrdiff_t>(i * gn),
                                norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * gn));
        std::vector<double> g = vanilla_gradient(clf, row, label);
        by_class[label].push_back(saliency_scores(g, row, gene_set));
    }
    return aggregate_top_genes(by_class, top_n);
}

void save_saliency_tsv(const SaliencyResult& res, const expr::GeneVocabulary& vocab,
                       const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write saliency table: " + path);
    out << "class\trank\tgene\tscore\n";
    out.precision(17);
    for (std::size_t c = 0; c < res.class_names.size(); ++c) {
        for (std::size_t r = 0; r < res.top_genes[c].size(); ++r) {
            std::size_t gi = res.top_genes[c][r];
            out << res.class_names[c] << "\t" << (r + 1) << "\t" << vocab.genes[gi] << "\t"
                << res.scores[c][gi] << "\n";
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cellforge::clf
