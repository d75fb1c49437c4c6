#pragma once

// Synthetic dataset builders shared by the unit and acceptance suites.

#include <cmath>
#include <string>
#include <vector>

#include "cellforge/cvae/zinb.hpp"
#include "cellforge/expr/matrix.hpp"
#include "cellforge/expr/transform.hpp"
#include "cellforge/num/rng.hpp"

namespace cellforge::test {

struct ZinbClassSpec {
    std::string label;
    std::vector<double> rho;  // gene rate profile, sums to 1
    double theta = 2.0;
    double pi = 0.05;
};

/// Counts drawn from the ZINB chain with a log-normal library per cell.
/// Each class has its own rate profile; labels cycle through the classes.
inline expr::Dataset make_zinb_dataset(const std::vector<ZinbClassSpec>& classes,
                                       std::size_t n_cells, double log_library_mu,
                                       double log_library_sd, std::uint64_t seed,
                                       const std::string& species = "human",
                                       const std::string& tissue = "pancreas") {
    std::size_t n_genes = classes.front().rho.size();
    expr::Dataset d;
    d.matrix.n_cells = n_cells;
    d.matrix.n_genes = n_genes;
    std::vector<std::string> names(n_genes);
    for (std::size_t j = 0; j < n_genes; ++j) names[j] = "gene" + std::to_string(j);
    d.matrix.vocab = expr::GeneVocabulary::from_genes(names);
    d.matrix.rows.resize(n_cells);
    num::Rng rng(seed);
    for (std::size_t i = 0; i < n_cells; ++i) {
        const ZinbClassSpec& cls = classes[i % classes.size()];
        double library = std::exp(log_library_mu + log_library_sd * rng.normal());
        std::vector<expr::SparseEntry> row;
        for (std::size_t j = 0; j < n_genes; ++j) {
            std::uint64_t v =
                cvae::sample_zinb_chain(rng, cls.rho[j], cls.theta, cls.pi, library);
            if (v > 0) row.push_back({static_cast<std::uint32_t>(j),
                                      static_cast<std::uint32_t>(v)});
        }
        // guarantee a nonzero library for downstream normalization
        if (row.empty()) row.push_back({0, 1});
        d.matrix.rows[i] = std::move(row);
        d.annotations.cell_ids.push_back("cell" + std::to_string(i));
        d.annotations.labels.push_back(cls.label);
        d.annotations.species.push_back(species);
        d.annotations.tissues.push_back(tissue);
    }
    d.validate();
    return d;
}

/// Three well-separated rate profiles over n_genes (block-elevated).
inline std::vector<ZinbClassSpec> three_block_classes(std::size_t n_genes, double boost = 8.0) {
    std::vector<ZinbClassSpec> classes(3);
    const char* names[3] = {"alpha", "beta", "delta"};
    for (std::size_t c = 0; c < 3; ++c) {
        classes[c].label = names[c];
        classes[c].rho.assign(n_genes, 1.0);
        std::size_t block = n_genes / 3;
        for (std::size_t j = c * block; j < (c + 1) * block; ++j) classes[c].rho[j] = boost;
        double total = 0.0;
        for (double v : classes[c].rho) total += v;
        for (double& v : classes[c].rho) v /= total;
    }
    return classes;
}

/// Linearly separable classification data: class k gets a strong bump on a
/// dedicated block of genes.
inline expr::Dataset make_separable_dataset(std::size_t n_classes, std::size_t n_cells,
                                            std::size_t n_genes, std::uint64_t seed) {
    expr::Dataset d;
    d.matrix.n_cells = n_cells;
    d.matrix.n_genes = n_genes;
    std::vector<std::string> names(n_genes);
    for (std::size_t j = 0; j < n_genes; ++j) names[j] = "gene" + std::to_string(j);
    d.matrix.vocab = expr::GeneVocabulary::from_genes(names);
    d.matrix.rows.resize(n_cells);
    num::Rng rng(seed);
    std::size_t block = n_genes / n_classes;
    for (std::size_t i = 0; i < n_cells; ++i) {
        std::size_t cls = i % n_classes;
        std::vector<expr::SparseEntry> row;
        for (std::size_t j = 0; j < n_genes; ++j) {
            bool hot = j >= cls * block && j < (cls + 1) * block;
            double lam = hot ? 50.0 : 2.0;
            std::uint64_t v = cvae::sample_poisson(rng, lam);
            if (v > 0) row.push_back({static_cast<std::uint32_t>(j),
                                      static_cast<std::uint32_t>(v)});
        }
        if (row.empty()) row.push_back({0, 1});
        d.matrix.rows[i] = std::move(row);
        d.annotations.cell_ids.push_back("cell" + std::to_string(i));
        d.annotations.labels.push_back("class" + std::to_string(cls));
        d.annotations.species.push_back("human");
        d.annotations.tissues.push_back("blood");
    }
    d.validate();
    return d;
}

}  // namespace cellforge::test
