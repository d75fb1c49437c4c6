#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cellforge/expr/io.hpp"
#include "cellforge/expr/transform.hpp"
#include "cellforge/num/rng.hpp"
#include "cellforge/util/errors.hpp"
#include "support/synth.hpp"

using namespace cellforge;
using expr::ExpressionMatrix;
using expr::GeneVocabulary;
using expr::SparseEntry;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = "/tmp/cf_expr_" + name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

ExpressionMatrix make_matrix(std::size_t cells, std::size_t genes,
                             const std::vector<std::vector<std::uint32_t>>& dense) {
    ExpressionMatrix m;
    m.n_cells = cells;
    m.n_genes = genes;
    std::vector<std::string> names(genes);
    for (std::size_t j = 0; j < genes; ++j) names[j] = "g" + std::to_string(j);
    m.vocab = GeneVocabulary::from_genes(names);
    m.rows.resize(cells);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t j = 0; j < genes; ++j)
            if (dense[i][j] > 0)
                m.rows[i].push_back({static_cast<std::uint32_t>(j), dense[i][j]});
    m.validate();
    return m;
}

}  // namespace

TEST_CASE("load_matrix: 3x4 matrix market with 5 nonzeros") {
    std::string path = write_temp("mini.mtx",
                                  "%%MatrixMarket matrix coordinate integer general\n"
                                  "% comment line\n"
                                  "3 4 5\n"
                                  "1 1 2\n"
                                  "1 4 7\n"
                                  "2 2 1\n"
                                  "3 1 4\n"
                                  "3 3 9\n");
    ExpressionMatrix m = expr::load_matrix(path, expr::MatrixFormat::kMatrixMarket);
    CHECK(m.n_cells == 3);
    CHECK(m.n_genes == 4);
    CHECK(m.nnz() == 5);
    CHECK(m.rows[0][1].gene == 3);
    CHECK(m.rows[0][1].count == 7);
    CHECK(m.vocab.genes[0] == "g0");
}

TEST_CASE("load_matrix: empty file is a parse error") {
    std::string path = write_temp("empty.mtx", "");
    CHECK_THROWS_AS(expr::load_matrix(path, expr::MatrixFormat::kMatrixMarket),
                    ValidationError);
}

TEST_CASE("load_matrix: fractional count in dense CSV names the cell") {
    std::string path = write_temp("frac.csv",
                                  "cell,GATA1,CD19\n"
                                  "c0,1,0\n"
                                  "c1,2.5,3\n");
    try {
        expr::load_matrix(path, expr::MatrixFormat::kDenseCsv);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2.5") != std::string::npos);
        CHECK(msg.find("GATA1") != std::string::npos);
    }
}

TEST_CASE("load_matrix: negative count rejected") {
    std::string path = write_temp("neg.mtx",
                                  "%%MatrixMarket matrix coordinate integer general\n"
                                  "1 2 1\n"
                                  "1 1 -3\n");
    CHECK_THROWS_AS(expr::load_matrix(path, expr::MatrixFormat::kMatrixMarket),
                    ValidationError);
}

TEST_CASE("native format round trip is exact") {
    num::Rng rng(4);
    std::vector<std::vector<std::uint32_t>> dense(7, std::vector<std::uint32_t>(11, 0));
    for (auto& row : dense)
        for (auto& v : row)
            if (rng.uniform() < 0.4) v = static_cast<std::uint32_t>(1 + rng.uniform_index(40));
    ExpressionMatrix m = make_matrix(7, 11, dense);
    std::string path = "/tmp/cf_expr_roundtrip.cfx";
    expr::save_matrix_native(m, path);
    ExpressionMatrix back = expr::load_matrix(path, expr::MatrixFormat::kNative);
    CHECK(back.n_cells == m.n_cells);
    CHECK(back.n_genes == m.n_genes);
    CHECK(back.vocab.genes == m.vocab.genes);
    for (std::size_t i = 0; i < m.n_cells; ++i) {
        REQUIRE(back.rows[i].size() == m.rows[i].size());
        for (std::size_t p = 0; p < m.rows[i].size(); ++p) {
            CHECK(back.rows[i][p].gene == m.rows[i][p].gene);
            CHECK(back.rows[i][p].count == m.rows[i][p].count);
        }
    }
}

TEST_CASE("qc_filter: cell below the unique-gene floor is removed") {
    // 3 cells x 5 genes; thresholds: 2 unique genes per cell, 1 cell per gene
    ExpressionMatrix m = make_matrix(3, 5,
                                     {{1, 1, 1, 0, 0},
                                      {0, 0, 0, 4, 0},  // single unique gene
                                      {2, 0, 1, 1, 1}});
    expr::QcThresholds t;
    t.min_genes_per_cell = 2;
    t.min_cells_per_gene = 1;
    auto [out, report] = expr::qc_filter(m, t);
    CHECK(out.n_cells == 2);
    CHECK(report.cells_removed_low_genes == 1);
    CHECK(report.kept_cells == std::vector<std::size_t>{0, 2});
}

TEST_CASE("qc_filter: gene expressed in too few cells is removed") {
    ExpressionMatrix m = make_matrix(3, 3,
                                     {{1, 1, 0},
                                      {1, 1, 0},
                                      {1, 1, 1}});
    expr::QcThresholds t;
    t.min_genes_per_cell = 1;
    t.min_cells_per_gene = 2;
    auto [out, report] = expr::qc_filter(m, t);
    CHECK(out.n_genes == 2);
    CHECK(report.genes_removed == 1);
    CHECK(report.kept_genes == std::vector<std::size_t>{0, 1});
}

TEST_CASE("qc_filter: clean matrix returned unchanged with a zero report") {
    ExpressionMatrix m = make_matrix(3, 2, {{1, 2}, {3, 1}, {2, 2}});
    expr::QcThresholds t;
    t.min_genes_per_cell = 1;
    t.min_cells_per_gene = 1;
    auto [out, report] = expr::qc_filter(m, t);
    CHECK(out.n_cells == 3);
    CHECK(out.n_genes == 2);
    CHECK(report.cells_removed_low_genes == 0);
    CHECK(report.cells_removed_aberrant == 0);
    CHECK(report.genes_removed == 0);
}

TEST_CASE("qc_filter: aberrant cells (mito fraction, total cap)") {
    ExpressionMatrix m;
    m.n_cells = 3;
    m.n_genes = 3;
    m.vocab = GeneVocabulary::from_genes({"MT-CO1", "ACTB", "GAPDH"});
    m.rows = {{{0, 8}, {1, 1}, {2, 1}},   // mito fraction 0.8
              {{0, 1}, {1, 5}, {2, 5}},   // fine
              {{1, 500}, {2, 500}}};      // huge total
    m.validate();
    expr::QcThresholds t;
    t.min_genes_per_cell = 1;
    t.min_cells_per_gene = 1;
    t.mito_prefixes = {"MT-"};
    t.max_mito_fraction = 0.5;
    t.max_total_counts = 100.0;
    auto [out, report] = expr::qc_filter(m, t);
    CHECK(out.n_cells == 1);
    CHECK(report.cells_removed_aberrant == 2);
}

TEST_CASE("qc_filter: removing every cell is an error") {
    ExpressionMatrix m = make_matrix(2, 3, {{1, 0, 0}, {0, 1, 0}});
    expr::QcThresholds t;
    t.min_genes_per_cell = 2;
    t.min_cells_per_gene = 1;
    CHECK_THROWS_AS(expr::qc_filter(m, t), ValidationError);
}

TEST_CASE("qc_filter is idempotent (property over random matrices)") {
    num::Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t cells = 8 + rng.uniform_index(12), genes = 6 + rng.uniform_index(10);
        std::vector<std::vector<std::uint32_t>> dense(cells,
                                                      std::vector<std::uint32_t>(genes, 0));
        for (auto& row : dense)
            for (auto& v : row)
                if (rng.uniform() < 0.45)
                    v = static_cast<std::uint32_t>(1 + rng.uniform_index(9));
        ExpressionMatrix m = make_matrix(cells, genes, dense);
        expr::QcThresholds t;
        t.min_genes_per_cell = 2 + rng.uniform_index(3);
        t.min_cells_per_gene = 2 + rng.uniform_index(3);
        try {
            auto [once, r1] = expr::qc_filter(m, t);
            auto [twice, r2] = expr::qc_filter(once, t);
            CHECK(twice.n_cells == once.n_cells);
            CHECK(twice.n_genes == once.n_genes);
            CHECK(r2.cells_removed_low_genes == 0);
            CHECK(r2.cells_removed_aberrant == 0);
            CHECK(r2.genes_removed == 0);
            // both postconditions hold simultaneously on the output
            for (std::size_t i = 0; i < once.n_cells; ++i)
                CHECK(once.unique_genes(i) >= t.min_genes_per_cell);
            std::vector<std::size_t> per_gene(once.n_genes, 0);
            for (const auto& row : once.rows)
                for (const SparseEntry& e : row) ++per_gene[e.gene];
            for (std::size_t j = 0; j < once.n_genes; ++j)
                CHECK(per_gene[j] >= t.min_cells_per_gene);
        } catch (const ValidationError&) {
            // all cells removed: acceptable for a random draw
        }
    }
}

TEST_CASE("normalize_log1p: direct arithmetic example") {
    ExpressionMatrix m = make_matrix(1, 3, {{2, 3, 5}});
    std::vector<double> out = expr::normalize_log1p(m, 10000.0);
    CHECK(out[0] == doctest::Approx(std::log(2001.0)).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(std::log(3001.0)).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(std::log(5001.0)).epsilon(1e-12));
}

TEST_CASE("normalize_log1p: identity scaling when the row already sums to target") {
    ExpressionMatrix m = make_matrix(1, 2, {{10, 0}});
    std::vector<double> out = expr::normalize_log1p(m, 10.0);
    CHECK(out[0] == doctest::Approx(std::log(11.0)).epsilon(1e-12));
    CHECK(out[1] == 0.0);
}

TEST_CASE("normalize_log1p: row sums of expm1 equal target (derived)") {
    num::Rng rng(6);
    std::vector<std::vector<std::uint32_t>> dense(5, std::vector<std::uint32_t>(8, 0));
    for (auto& row : dense) {
        for (auto& v : row)
            if (rng.uniform() < 0.7) v = static_cast<std::uint32_t>(1 + rng.uniform_index(50));
        if (std::all_of(row.begin(), row.end(), [](std::uint32_t v) { return v == 0; }))
            row[0] = 1;
    }
    ExpressionMatrix m = make_matrix(5, 8, dense);
    std::vector<double> out = expr::normalize_log1p(m, 10000.0);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 8; ++j) sum += std::expm1(out[i * 8 + j]);
        CHECK(sum == doctest::Approx(10000.0).epsilon(1e-9));
    }
}

TEST_CASE("normalize_log1p: ratios of expm1 match input count ratios") {
    ExpressionMatrix m = make_matrix(2, 3, {{4, 8, 1}, {3, 0, 9}});
    std::vector<double> out = expr::normalize_log1p(m, 1e4);
    double a = std::expm1(out[0]), b = std::expm1(out[1]);
    CHECK(a / b == doctest::Approx(0.5).epsilon(1e-9));
    double c = std::expm1(out[3]), d = std::expm1(out[5]);
    CHECK(c / d == doctest::Approx(3.0 / 9.0).epsilon(1e-9));
}

TEST_CASE("normalize_log1p: all-zero cell names the index") {
    ExpressionMatrix m;
    m.n_cells = 2;
    m.n_genes = 2;
    m.vocab = GeneVocabulary::from_genes({"a", "b"});
    m.rows = {{{0, 1}}, {}};
    try {
        expr::normalize_log1p(m, 1e4);
        FAIL("expected error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("select_hvg: dominant-variance gene wins") {
    // 40 genes so the 20 mean-bins hold 2 genes each; every gene is a flat
    // 10 except gene 7, which swings hard. All flat pairs tie within their
    // bin (z = 0), so gene 7's z = +1 is the unique maximum.
    std::size_t cells = 4, genes = 40;
    std::vector<std::vector<std::uint32_t>> dense(cells,
                                                  std::vector<std::uint32_t>(genes, 10));
    dense[0][7] = 1;
    dense[1][7] = 19;
    dense[2][7] = 1;
    dense[3][7] = 19;
    ExpressionMatrix m = make_matrix(cells, genes, dense);
    std::vector<std::size_t> top = expr::select_hvg(m, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0] == 7);
}

TEST_CASE("select_hvg: n_top equal to gene count returns everything ranked") {
    num::Rng rng(14);
    std::vector<std::vector<std::uint32_t>> dense(10, std::vector<std::uint32_t>(6, 0));
    for (auto& row : dense) {
        for (auto& v : row) v = static_cast<std::uint32_t>(rng.uniform_index(30));
        if (std::all_of(row.begin(), row.end(), [](std::uint32_t v) { return v == 0; }))
            row[0] = 1;
    }
    ExpressionMatrix m = make_matrix(10, 6, dense);
    std::vector<std::size_t> all = expr::select_hvg(m, 6);
    CHECK(all.size() == 6);
    std::set<std::size_t> uniq(all.begin(), all.end());
    CHECK(uniq.size() == 6);
    CHECK_THROWS_AS(expr::select_hvg(m, 7), ValidationError);
}

TEST_CASE("select_hvg: top-5 of 50 genes matches a brute-force rescore (derived)") {
    num::Rng rng(8);
    std::size_t cells = 40, genes = 50;
    std::vector<std::vector<std::uint32_t>> dense(cells, std::vector<std::uint32_t>(genes, 0));
    for (auto& row : dense) {
        for (std::size_t j = 0; j < genes; ++j)
            if (rng.uniform() < 0.6)
                row[j] = static_cast<std::uint32_t>(1 + rng.uniform_index(20 + 3 * j));
        if (std::all_of(row.begin(), row.end(), [](std::uint32_t v) { return v == 0; }))
            row[0] = 1;
    }
    ExpressionMatrix m = make_matrix(cells, genes, dense);

    // independent reimplementation of the binned dispersion score
    std::vector<double> x = expr::normalize_log1p(m, 1e4);
    std::vector<double> mean(genes, 0.0), disp(genes, 0.0);
    for (std::size_t j = 0; j < genes; ++j) {
        for (std::size_t i = 0; i < cells; ++i) mean[j] += x[i * genes + j];
        mean[j] /= cells;
        double var = 0.0;
        for (std::size_t i = 0; i < cells; ++i) {
            double d = x[i * genes + j] - mean[j];
            var += d * d;
        }
        var /= cells;
        disp[j] = mean[j] > 0 ? var / mean[j] : 0.0;
    }
    std::vector<std::size_t> order(genes);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return mean[a] != mean[b] ? mean[a] < mean[b] : a < b;
    });
    std::vector<double> z(genes, 0.0);
    std::size_t bins = 20, base = genes / bins, extra = genes % bins, pos = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        std::size_t len = base + (b < extra ? 1 : 0);
        double bm = 0, bv = 0;
        for (std::size_t q = 0; q < len; ++q) bm += disp[order[pos + q]];
        bm /= len;
        for (std::size_t q = 0; q < len; ++q) {
            double d = disp[order[pos + q]] - bm;
            bv += d * d;
        }
        double bs = std::sqrt(bv / len);
        for (std::size_t q = 0; q < len; ++q) {
            std::size_t j = order[pos + q];
            z[j] = bs > 0 ? (disp[j] - bm) / bs : 0.0;
        }
        pos += len;
    }
    std::vector<std::size_t> brute(genes);
    std::iota(brute.begin(), brute.end(), 0);
    std::sort(brute.begin(), brute.end(), [&](std::size_t a, std::size_t b) {
        return z[a] != z[b] ? z[a] > z[b] : a < b;
    });
    brute.resize(5);

    std::vector<std::size_t> got = expr::select_hvg(m, 5);
    CHECK(std::set<std::size_t>(got.begin(), got.end()) ==
          std::set<std::size_t>(brute.begin(), brute.end()));
    CHECK(got == brute);
}

TEST_CASE("build_vocabulary: union, lexicographic order") {
    std::vector<std::set<std::string>> sets = {{"A", "B"}, {"B", "C"}};
    expr::GeneVocabulary v = expr::build_vocabulary(sets);
    CHECK(v.genes == std::vector<std::string>{"A", "B", "C"});

    expr::GeneVocabulary single = expr::build_vocabulary({{"zeta", "alpha"}});
    CHECK(single.genes == std::vector<std::string>{"alpha", "zeta"});
}

TEST_CASE("build_vocabulary: size equals brute-force union (derived)") {
    num::Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<std::set<std::string>> sets(3);
        std::set<std::string> brute;
        for (auto& s : sets)
            for (int i = 0; i < 20; ++i) {
                std::string g = "gene" + std::to_string(rng.uniform_index(30));
                s.insert(g);
                brute.insert(g);
            }
        CHECK(expr::build_vocabulary(sets).size() == brute.size());
    }
}

TEST_CASE("apply_ortholog_map: empty mapping leaves matrix unchanged") {
    ExpressionMatrix m = make_matrix(2, 3, {{1, 2, 0}, {0, 1, 3}});
    auto res = expr::apply_ortholog_map(m, {});
    CHECK(res.matrix.vocab.genes == m.vocab.genes);
    CHECK(res.warnings.empty());
    CHECK(res.matrix.nnz() == m.nnz());
}

TEST_CASE("apply_ortholog_map: collision merges counts and warns") {
    ExpressionMatrix m = make_matrix(1, 3, {{2, 3, 4}});
    auto res = expr::apply_ortholog_map(m, {{"g1", "g0"}});
    CHECK(res.matrix.n_genes == 2);
    CHECK(res.warnings.size() == 1);
    CHECK(res.matrix.rows[0][0].count == 5);  // 2 + 3 merged into g0
    CHECK(res.matrix.rows[0][1].count == 4);
}

TEST_CASE("apply_ortholog_map: pure rename swaps the identifier") {
    ExpressionMatrix m = make_matrix(1, 2, {{7, 1}});
    auto res = expr::apply_ortholog_map(m, {{"g0", "HUMAN0"}});
    CHECK(res.matrix.vocab.genes == std::vector<std::string>{"HUMAN0", "g1"});
    CHECK(res.matrix.vocab.contains("HUMAN0"));
    CHECK(!res.matrix.vocab.contains("g0"));
    CHECK(res.warnings.empty());
}

TEST_CASE("split_dataset: 10 cells at 8:1:1") {
    auto d = test::make_separable_dataset(2, 10, 6, 1);
    d.split.clear();
    d = expr::split_dataset(std::move(d), 0.8, 0.1, 0.1, 42);
    CHECK(d.cells_in_split(expr::Split::kTrain).size() == 8);
    CHECK(d.cells_in_split(expr::Split::kValid).size() == 1);
    CHECK(d.cells_in_split(expr::Split::kTest).size() == 1);
}

TEST_CASE("split_dataset: zero ratio rejected") {
    auto d = test::make_separable_dataset(2, 10, 6, 1);
    d.split.clear();
    CHECK_THROWS_AS(expr::split_dataset(std::move(d), 1.0, 0.0, 0.0, 1), ValidationError);
}

TEST_CASE("split_dataset: deterministic and a partition") {
    auto t1 = expr::make_split(103, 0.8, 0.1, 0.1, 7);
    auto t2 = expr::make_split(103, 0.8, 0.1, 0.1, 7);
    CHECK(t1 == t2);
    std::size_t n_train = 0, n_valid = 0, n_test = 0;
    for (expr::Split s : t1) {
        if (s == expr::Split::kTrain) ++n_train;
        if (s == expr::Split::kValid) ++n_valid;
        if (s == expr::Split::kTest) ++n_test;
    }
    CHECK(n_train + n_valid + n_test == 103);  // every cell in exactly one split
    CHECK(n_valid == 10);
    CHECK(n_test == 10);
    CHECK(n_train == 83);  // floor remainder goes to train
    CHECK_THROWS_AS(expr::make_split(2, 0.8, 0.1, 0.1, 1), ValidationError);
}

TEST_CASE("annotations CSV round trip with split and extra columns") {
    expr::CellAnnotations a;
    a.cell_ids = {"c0", "c1", "c2"};
    a.labels = {"alpha", "beta", "alpha"};
    a.species = {"human", "human", "mouse"};
    a.tissues = {"blood", "blood", "skin"};
    a.extra["batch"] = {"b1", "b2", "b1"};
    std::vector<expr::Split> split = {expr::Split::kTrain, expr::Split::kValid,
                                      expr::Split::kTest};
    std::string path = "/tmp/cf_expr_annots.csv";
    expr::save_annotations(a, split, path);
    std::vector<expr::Split> back_split;
    expr::CellAnnotations back = expr::load_annotations(path, &back_split);
    CHECK(back.labels == a.labels);
    CHECK(back.species == a.species);
    CHECK(back.tissues == a.tissues);
    CHECK(back.extra.at("batch") == a.extra.at("batch"));
    CHECK(back_split == split);
}

TEST_CASE("reindex onto a larger vocabulary zero-fills missing genes") {
    ExpressionMatrix m = make_matrix(2, 2, {{3, 1}, {0, 2}});
    expr::GeneVocabulary target = expr::GeneVocabulary::from_genes({"g1", "gX", "g0"});
    ExpressionMatrix out = expr::reindex(m, target);
    CHECK(out.n_genes == 3);
    CHECK(out.dense_row(0) == std::vector<double>{1, 0, 3});
    CHECK(out.dense_row(1) == std::vector<double>{2, 0, 0});
}
