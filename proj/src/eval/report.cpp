#include "cellforge/eval/report.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "cellforge/eval/pca.hpp"
#include "cellforge/expr/transform.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::eval {

using json = nlohmann::json;

GenerativeReport evaluate_generative(const expr::Dataset& real, const expr::Dataset& gen,
                                     const EvalOptions& opts) {
    real.validate();
    gen.validate();
    if (real.matrix.n_genes != gen.matrix.n_genes ||
        real.matrix.vocab.content_hash() != gen.matrix.vocab.content_hash())
        throw ValidationError("evaluate_generative: gene vocabularies differ");

    std::size_t n_real = real.matrix.n_cells, n_gen = gen.matrix.n_cells;
    std::vector<double> real_norm = expr::normalize_log1p(real.matrix, opts.target_sum);
    std::vector<double> gen_norm = expr::normalize_log1p(gen.matrix, opts.target_sum);

    std::size_t fit_k = std::min({opts.fit_components, n_real - 1, real.matrix.n_genes});
    if (fit_k == 0) throw ValidationError("evaluate_generative: too few cells for PCA");
    PcaModel pca = pca_fit(real_norm, n_real, real.matrix.n_genes, fit_k);
    std::size_t embed_dim = std::min(opts.embed_dim, fit_k);
    PcaModel embed = pca.truncated(embed_dim);

    Embedding re;
    re.n_points = n_real;
    re.dim = embed_dim;
    re.coords = pca_transform(embed, real_norm, n_real);
    re.labels = real.annotations.labels;
    Embedding ge;
    ge.n_points = n_gen;
    ge.dim = embed_dim;
    ge.coords = pca_transform(embed, gen_norm, n_gen);
    ge.labels = gen.annotations.labels;

    GenerativeReport rep;
    rep.fit_components = fit_k;
    rep.embed_dim = embed_dim;
    rep.omega = median_bandwidth(re, opts.bandwidth_neighbors);
    rep.mmd = mmd(ge, re, rep.omega);
    for (std::size_t k : opts.k_sweep) {
        rep.sknn_real[k] = sknn(re, k);
        rep.sknn_gen[k] = sknn(ge, k);
        rep.delta[k] = std::abs(rep.sknn_gen[k] - rep.sknn_real[k]);
        rep.pknn[k] = pknn(re, ge, k);
    }
    return rep;
}

namespace {

double map_mean(const std::map<std::size_t, double>& m) {
    double acc = 0.0;
    for (const auto& [k, v] : m) acc += v;
    return m.empty() ? 0.0 : acc / static_cast<double>(m.size());
}

void emit_per_k(json& j, const std::string& prefix, const std::map<std::size_t, double>& m) {
    for (const auto& [k, v] : m) j[prefix + ".K" + std::to_string(k)] = v;
    j[prefix + ".avg"] = map_mean(m);
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;  // nlohmann objects sort keys; output bytes are deterministic
    if (generative) {
        const GenerativeReport& g = *generative;
        j["mmd"] = g.mmd;
        j["mmd.omega"] = g.omega;
        j["embedding.fit_components"] = g.fit_components;
        j["embedding.dim"] = g.embed_dim;
        emit_per_k(j, "sknn", g.sknn_gen);
        emit_per_k(j, "sknn_real", g.sknn_real);
        emit_per_k(j, "delta_sknn", g.delta);
        emit_per_k(j, "pknn", g.pknn);
    }
    if (classification) {
        const ClassificationMetrics& c = *classification;
        j["f1.weighted"] = c.weighted_f1;
        j["f1.macro"] = c.macro_f1;
        j["accuracy.true"] = c.true_accuracy;
        j["unanswered.count"] = c.unanswered;
        j["confusion.classes"] = c.classes;
        j["confusion.matrix"] = c.confusion;
    }
    return j.dump(2) + "\n";
}

void EvalReport::save_json(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path);
    out << to_json();
    if (!out) throw IoError("write failed: " + path);
}

void EvalReport::save_csv(const std::string& path) const {
    json j = json::parse(to_json());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + path);
    out << "metric,value\n";
    out.precision(17);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number()) continue;
        out << it.key() << "," << it.value().dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cellforge::eval
