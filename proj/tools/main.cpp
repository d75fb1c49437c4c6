// cellforge: scRNA-seq preprocessing, conditional pseudo-cell generation,
// classification, marker extraction and generative-model evaluation.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellforge/clf/classifier.hpp"
#include "cellforge/clf/markers.hpp"
#include "cellforge/clf/saliency.hpp"
#include "cellforge/cvae/model.hpp"
#include "cellforge/eval/report.hpp"
#include "cellforge/expr/io.hpp"
#include "cellforge/expr/transform.hpp"
#include "cellforge/tmpl/pipeline.hpp"
#include "cellforge/util/errors.hpp"
#include "manifest.hpp"

namespace cf = cellforge;
using json = nlohmann::json;

namespace {

cf::expr::ExpressionMatrix load_matrix_auto(const std::string& path, const std::string& format) {
    cf::expr::MatrixFormat f = format == "auto" ? cf::expr::format_from_path(path)
                                                : cf::expr::format_from_name(format);
    return cf::expr::load_matrix(path, f);
}

cf::expr::Dataset load_dataset(const std::string& matrix_path, const std::string& format,
                               const std::string& annotations_path) {
    cf::expr::Dataset d;
    d.matrix = load_matrix_auto(matrix_path, format);
    if (!annotations_path.empty()) {
        std::vector<cf::expr::Split> split;
        d.annotations = cf::expr::load_annotations(annotations_path, &split);
        d.split = std::move(split);
    } else {
        d.annotations.labels.assign(d.matrix.n_cells, "");
        d.annotations.species.assign(d.matrix.n_cells, "");
        d.annotations.tissues.assign(d.matrix.n_cells, "");
    }
    d.validate();
    return d;
}

cf::expr::Dataset restrict_split(const cf::expr::Dataset& d, const std::string& which) {
    if (which == "all" || d.split.empty()) return d;
    return d.subset(d.cells_in_split(cf::expr::split_from_name(which)));
}

std::vector<double> parse_ratios(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.size() != 3)
        throw cf::ValidationError("--ratios needs three comma-separated values");
    return out;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    if (out.empty()) throw cf::ValidationError("--k-list must not be empty");
    return out;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    if (out.empty()) throw cf::ValidationError("hidden layer list must not be empty");
    return out;
}

}  // namespace

static int run_all(int argc, char** argv);

int main(int argc, char** argv) {
    try {
        return run_all(argc, argv);
    } catch (const CLI::ParseError&) {
        return 1;  // CLI11 already printed the message via exit() path below
    } catch (const cf::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const cf::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const cf::NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

static int run_all(int argc, char** argv) {
    CLI::App app{"cellforge: single-cell expression toolkit"};
    app.require_subcommand(1);

    // ---------------------------------------------------------------- ingest
    auto* ingest = app.add_subcommand("ingest", "load, QC, select genes and split a dataset");
    struct {
        std::string input, format = "auto", annotations, output;
        std::string ortholog_map, vocab_file;
        std::size_t min_genes = 200, min_cells = 8;
        std::vector<std::string> mito_prefixes;
        double max_mito_fraction = 0.2;
        double max_total_counts = 0.0;
        double total_percentile = 99.5;
        std::size_t hvg = 3600;
        std::size_t min_label_cells = 0;
        std::string ratios = "0.8,0.1,0.1";
        bool no_split = false;
        std::uint64_t seed = 0;
    } ing;
    ingest->add_option("--input", ing.input, "count matrix (.mtx/.csv/.cfx)")->required();
    ingest->add_option("--format", ing.format, "matrix-market|dense-csv|native|auto");
    ingest->add_option("--annotations", ing.annotations, "annotations CSV");
    ingest->add_option("--output", ing.output, "output prefix")->required();
    ingest->add_option("--min-genes", ing.min_genes, "min unique genes per cell (default 200)");
    ingest->add_option("--min-cells", ing.min_cells, "min cells per gene (default 8)");
    ingest->add_option("--mito-prefix", ing.mito_prefixes, "mitochondrial gene prefixes");
    ingest->add_option("--max-mito-fraction", ing.max_mito_fraction,
                       "max mitochondrial count fraction (default 0.2)");
    ingest->add_option("--max-total-counts", ing.max_total_counts,
                       "absolute total-count cap (0 = use --total-percentile)");
    ingest->add_option("--total-percentile", ing.total_percentile,
                       "percentile cap for total counts (default 99.5)");
    ingest->add_option("--ortholog-map", ing.ortholog_map,
                       "two-column TSV/CSV mapping source ids to target ids");
    ingest->add_option("--hvg", ing.hvg, "highly variable genes to keep, 0 = all (default 3600)");
    ingest->add_option("--vocab", ing.vocab_file, "re-project onto this vocabulary file");
    ingest->add_option("--min-label-cells", ing.min_label_cells,
                       "drop cells of labels rarer than this (0 = off)");
    ingest->add_option("--ratios", ing.ratios, "train,valid,test ratios (default 0.8,0.1,0.1)");
    ingest->add_flag("--no-split", ing.no_split, "skip split assignment");
    auto* ing_seed = ingest->add_option("--seed", ing.seed, "shuffle seed");

    // ------------------------------------------------------------- train-cvae
    auto* tcv = app.add_subcommand("train-cvae", "train the pseudo-cell generator");
    struct {
        std::string input, format = "auto", annotations, output;
        std::size_t epochs = 160, batch = 32;
        double lr = 1e-3, alpha = 1.0, target_sum = 1e4;
        bool no_warmup = false;
        std::size_t d_z = 256, d_c = 256, emb_dim = 32;
        std::string enc_hidden = "128", dec_hidden = "128";
        std::uint64_t seed = 0;
    } tc;
    tcv->add_option("--input", tc.input)->required();
    tcv->add_option("--format", tc.format);
    tcv->add_option("--annotations", tc.annotations)->required();
    tcv->add_option("--output", tc.output, "checkpoint path (.cfp)")->required();
    tcv->add_option("--epochs", tc.epochs, "training epochs (default 160)");
    tcv->add_option("--lr", tc.lr, "learning rate (default 1e-3)");
    tcv->add_option("--batch", tc.batch, "batch size (default 32)");
    tcv->add_option("--alpha", tc.alpha, "KL weight (default 1.0)");
    tcv->add_flag("--no-alpha-warmup", tc.no_warmup, "disable the linear KL warm-up");
    tcv->add_option("--d-z", tc.d_z, "latent dimension (default 256)");
    tcv->add_option("--d-c", tc.d_c, "condition dimension (default 256)");
    tcv->add_option("--emb-dim", tc.emb_dim, "per-attribute embedding width");
    tcv->add_option("--enc-hidden", tc.enc_hidden, "encoder hidden widths, comma-separated");
    tcv->add_option("--dec-hidden", tc.dec_hidden, "decoder hidden widths, comma-separated");
    tcv->add_option("--target-sum", tc.target_sum, "normalization target (default 10000)");
    tcv->add_option("--seed", tc.seed, "training seed")->required();

    // --------------------------------------------------------------- generate
    auto* gen = app.add_subcommand("generate", "sample pseudo-cells for a label list");
    struct {
        std::string model, labels, output;
        std::uint64_t seed = 0;
    } ge;
    gen->add_option("--model", ge.model, "cvae checkpoint (.cfp)")->required();
    gen->add_option("--labels", ge.labels, "CSV with label,species,tissue rows")->required();
    gen->add_option("--output", ge.output, "output prefix")->required();
    gen->add_option("--seed", ge.seed, "sampling seed")->required();

    // --------------------------------------------------------------- train-clf
    auto* tclf = app.add_subcommand("train-clf", "train the annotation classifier");
    struct {
        std::string input, format = "auto", annotations, output;
        std::size_t epochs = 100, batch = 32;
        double lr = 1e-3, target_sum = 1e4;
        std::string hidden = "64";
        std::uint64_t seed = 0;
    } tl;
    tclf->add_option("--input", tl.input)->required();
    tclf->add_option("--format", tl.format);
    tclf->add_option("--annotations", tl.annotations)->required();
    tclf->add_option("--output", tl.output, "checkpoint path (.cfp)")->required();
    tclf->add_option("--epochs", tl.epochs, "training epochs (default 100)");
    tclf->add_option("--lr", tl.lr, "learning rate (default 1e-3)");
    tclf->add_option("--batch", tl.batch, "batch size (default 32)");
    tclf->add_option("--hidden", tl.hidden, "hidden widths, comma-separated");
    tclf->add_option("--target-sum", tl.target_sum, "normalization target (default 10000)");
    tclf->add_option("--seed", tl.seed, "training seed")->required();

    // ---------------------------------------------------------------- evaluate
    auto* ev = app.add_subcommand("evaluate", "score generated cells and/or predictions");
    struct {
        std::string real, real_format = "auto", real_annotations;
        std::string generated, gen_format = "auto", gen_annotations;
        std::string predictions;
        std::string output, csv;
        std::string k_list = "5,10,25,50";
        std::size_t fit_components = 50, embed_dim = 2;
        double target_sum = 1e4;
        std::string split = "all";
    } ed;
    ev->add_option("--real", ed.real, "real count matrix")->required();
    ev->add_option("--real-format", ed.real_format);
    ev->add_option("--real-annotations", ed.real_annotations)->required();
    ev->add_option("--generated", ed.generated, "generated count matrix");
    ev->add_option("--generated-format", ed.gen_format);
    ev->add_option("--generated-annotations", ed.gen_annotations);
    ev->add_option("--predictions", ed.predictions,
                   "CSV with a 'prediction' column ('unanswered' marks no answer)");
    ev->add_option("--output", ed.output, "report JSON path")->required();
    ev->add_option("--csv", ed.csv, "also write a flat CSV table");
    ev->add_option("--k-list", ed.k_list, "K sweep (default 5,10,25,50)");
    ev->add_option("--fit-components", ed.fit_components, "PCA components fit (default 50)");
    ev->add_option("--embed-dim", ed.embed_dim, "embedding dimension for metrics (default 2)");
    ev->add_option("--target-sum", ed.target_sum, "normalization target (default 10000)");
    ev->add_option("--split", ed.split, "real-cell split to evaluate against (default all)");

    // ----------------------------------------------------------------- markers
    auto* mk = app.add_subcommand("markers", "Welch-test marker ranking per class");
    struct {
        std::string input, format = "auto", annotations, output;
        std::string class_name;
        std::size_t top_k = 3;
        double target_sum = 1e4;
        std::string split = "all";
    } mo;
    mk->add_option("--input", mo.input)->required();
    mk->add_option("--format", mo.format);
    mk->add_option("--annotations", mo.annotations)->required();
    mk->add_option("--output", mo.output, "TSV path")->required();
    mk->add_option("--class", mo.class_name, "single class (default: every class)");
    mk->add_option("--top-k", mo.top_k, "genes per class (default 3, 0 = all)");
    mk->add_option("--target-sum", mo.target_sum, "normalization target (default 10000)");
    mk->add_option("--split", mo.split, "restrict to a split (default all)");

    // ---------------------------------------------------------------- saliency
    auto* sal = app.add_subcommand("saliency", "gradient-saliency key-gene extraction");
    struct {
        std::string model, input, format = "auto", annotations, output, gene_set;
        std::size_t top_n = 10;
        std::string split = "all";
    } so;
    sal->add_option("--model", so.model, "classifier checkpoint (.cfp)")->required();
    sal->add_option("--input", so.input)->required();
    sal->add_option("--format", so.format);
    sal->add_option("--annotations", so.annotations)->required();
    sal->add_option("--output", so.output, "TSV path")->required();
    sal->add_option("--gene-set", so.gene_set,
                    "genes of interest, one per line (default: every gene)");
    sal->add_option("--top-n", so.top_n, "genes per class (default 10)");
    sal->add_option("--split", so.split, "restrict to a split (default all)");

    // ---------------------------------------------------------------- templates
    auto* tp = app.add_subcommand("templates", "build an instruction-template corpus");
    struct {
        std::string source = "canned", candidates, output, pools;
        std::string endpoint, auth_env = "CELLFORGE_TEMPLATE_TOKEN", request_log;
        int timeout_ms = 10000;
        std::string task = "CPCG";
        std::size_t count = 100, max_rewrites = 3, max_words = 70;
        double threshold = 0.75;
        std::string ratios = "0.8,0.1,0.1";
        bool no_split = false;
        std::uint64_t seed = 0;
    } to;
    tp->add_option("--source", to.source, "canned|http (default canned)");
    tp->add_option("--candidates", to.candidates, "canned candidate corpus (JSONL)");
    tp->add_option("--endpoint", to.endpoint, "HTTP template service base URL");
    tp->add_option("--auth-env", to.auth_env,
                   "env var holding the service token (default CELLFORGE_TEMPLATE_TOKEN)");
    tp->add_option("--timeout-ms", to.timeout_ms, "HTTP timeout (default 10000)");
    tp->add_option("--request-log", to.request_log, "JSONL request/response log");
    tp->add_option("--task", to.task, "CTA|DSP|CPCG")->required();
    tp->add_option("--count", to.count, "target accepted templates")->required();
    tp->add_option("--output", to.output, "accepted templates (JSONL)")->required();
    tp->add_option("--pools", to.pools, "trait pool directory")->required();
    tp->add_option("--threshold", to.threshold, "ROUGE-L dedup threshold (default 0.75)");
    tp->add_option("--max-rewrites", to.max_rewrites, "rewrites before discard (default 3)");
    tp->add_option("--max-words", to.max_words, "word limit for templates (default 70)");
    tp->add_option("--ratios", to.ratios, "split ratios (default 0.8,0.1,0.1)");
    tp->add_flag("--no-split", to.no_split, "skip split assignment");
    tp->add_option("--seed", to.seed, "pipeline seed")->required();

    // -------------------------------------------------------------------- vocab
    auto* vb = app.add_subcommand("vocab", "merge per-dataset HVG sets into a vocabulary");
    struct {
        std::vector<std::string> inputs;
        std::string format = "auto";
        std::size_t hvg = 3600;
        std::string output;
    } vo;
    vb->add_option("--inputs", vo.inputs, "count matrices")->required();
    vb->add_option("--format", vo.format);
    vb->add_option("--hvg", vo.hvg, "HVGs per dataset (default 3600, 0 = all genes)");
    vb->add_option("--output", vo.output, "vocabulary text file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    // ================================================================== ingest
    if (*ingest) {
        cf::cli::RunManifest man("ingest");
        cf::cli::OutputGuard guard;
        man.input(ing.input);
        if (!ing.annotations.empty()) man.input(ing.annotations);
        if (!ing.ortholog_map.empty()) man.input(ing.ortholog_map);
        if (!ing.vocab_file.empty()) man.input(ing.vocab_file);
        man.flag("input", ing.input);
        man.flag("format", ing.format);
        man.flag("min-genes", static_cast<long long>(ing.min_genes));
        man.flag("min-cells", static_cast<long long>(ing.min_cells));
        man.flag("max-mito-fraction", ing.max_mito_fraction);
        man.flag("max-total-counts", ing.max_total_counts);
        man.flag("total-percentile", ing.total_percentile);
        man.flag("hvg", static_cast<long long>(ing.hvg));
        man.flag("ratios", ing.ratios);
        man.seed(ing.seed);

        cf::expr::Dataset d = load_dataset(ing.input, ing.format, ing.annotations);
        if (!ing.ortholog_map.empty()) {
            std::map<std::string, std::string> mapping;
            std::ifstream in(ing.ortholog_map);
            if (!in) throw cf::IoError("cannot open ortholog map: " + ing.ortholog_map);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::replace(line.begin(), line.end(), '\t', ',');
                auto comma = line.find(',');
                if (comma == std::string::npos)
                    throw cf::ValidationError("ortholog map rows need two columns");
                mapping[line.substr(0, comma)] = line.substr(comma + 1);
            }
            auto mapped = cf::expr::apply_ortholog_map(d.matrix, mapping);
            for (const std::string& w : mapped.warnings) std::cerr << "warning: " << w << "\n";
            d.matrix = std::move(mapped.matrix);
        }

        cf::expr::QcThresholds th;
        th.min_genes_per_cell = ing.min_genes;
        th.min_cells_per_gene = ing.min_cells;
        th.mito_prefixes = ing.mito_prefixes;
        th.max_mito_fraction = ing.max_mito_fraction;
        th.max_total_counts = ing.max_total_counts > 0.0
                                  ? ing.max_total_counts
                                  : (ing.total_percentile >= 100.0
                                         ? 0.0
                                         : cf::expr::total_count_percentile(
                                               d.matrix, ing.total_percentile));
        auto [filtered, report] = cf::expr::qc_filter(d.matrix, th);
        cf::expr::Dataset out;
        out.matrix = std::move(filtered);
        out.annotations = d.annotations.size() ? d.annotations.subset(report.kept_cells)
                                               : cf::expr::CellAnnotations{};
        if (out.annotations.size() == 0) {
            out.annotations.labels.assign(out.matrix.n_cells, "");
            out.annotations.species.assign(out.matrix.n_cells, "");
            out.annotations.tissues.assign(out.matrix.n_cells, "");
        }

        if (ing.min_label_cells > 0) out = cf::expr::filter_rare_labels(out, ing.min_label_cells);
        if (ing.hvg > 0 && ing.hvg < out.matrix.n_genes) {
            std::vector<std::size_t> idx = cf::expr::select_hvg(out.matrix, ing.hvg);
            std::sort(idx.begin(), idx.end());
            out.matrix = cf::expr::restrict_genes(out.matrix, idx);
        }
        if (!ing.vocab_file.empty()) {
            std::ifstream in(ing.vocab_file);
            if (!in) throw cf::IoError("cannot open vocabulary file: " + ing.vocab_file);
            std::vector<std::string> names;
            std::string line;
            while (std::getline(in, line)) {
                while (!line.empty() && (line.back() == '\r')) line.pop_back();
                if (!line.empty()) names.push_back(line);
            }
            out.matrix = cf::expr::reindex(out.matrix,
                                           cf::expr::GeneVocabulary::from_genes(names));
        }
        if (!ing.no_split) {
            if (!ing_seed->count())
                throw cf::ValidationError("--seed is required unless --no-split is given");
            auto r = parse_ratios(ing.ratios);
            out = cf::expr::split_dataset(std::move(out), r[0], r[1], r[2], ing.seed);
        }

        std::string mpath = ing.output + ".cfx";
        std::string apath = ing.output + ".annotations.csv";
        std::string qpath = ing.output + ".qc.json";
        guard.track(mpath);
        guard.track(apath);
        guard.track(qpath);
        cf::expr::save_matrix_native(out.matrix, mpath);
        cf::expr::save_annotations(out.annotations, out.split, apath);
        json q;
        q["cells_removed_low_genes"] = report.cells_removed_low_genes;
        q["cells_removed_aberrant"] = report.cells_removed_aberrant;
        q["genes_removed"] = report.genes_removed;
        q["thresholds"]["min_genes_per_cell"] = th.min_genes_per_cell;
        q["thresholds"]["min_cells_per_gene"] = th.min_cells_per_gene;
        q["thresholds"]["max_mito_fraction"] = th.max_mito_fraction;
        q["thresholds"]["max_total_counts"] = th.max_total_counts;
        q["cells_kept"] = out.matrix.n_cells;
        q["genes_kept"] = out.matrix.n_genes;
        std::ofstream qout(qpath, std::ios::trunc);
        if (!qout) throw cf::IoError("cannot write QC report: " + qpath);
        qout << q.dump(2) << "\n";
        qout.close();
        man.write(ing.output + ".manifest.json");
        guard.commit();
        std::cerr << "ingest: kept " << out.matrix.n_cells << " cells x "
                  << out.matrix.n_genes << " genes\n";
        return 0;
    }

    // =============================================================== train-cvae
    if (*tcv) {
        cf::cli::RunManifest man("train-cvae");
        cf::cli::OutputGuard guard;
        man.input(tc.input);
        man.input(tc.annotations);
        man.flag("epochs", static_cast<long long>(tc.epochs));
        man.flag("lr", tc.lr);
        man.flag("batch", static_cast<long long>(tc.batch));
        man.flag("alpha", tc.alpha);
        man.flag("d-z", static_cast<long long>(tc.d_z));
        man.flag("d-c", static_cast<long long>(tc.d_c));
        man.flag("target-sum", tc.target_sum);
        man.seed(tc.seed);

        cf::expr::Dataset d = load_dataset(tc.input, tc.format, tc.annotations);
        cf::cvae::CvaeConfig cfg;
        cfg.d_z = tc.d_z;
        cfg.d_c = tc.d_c;
        cfg.emb_dim = tc.emb_dim;
        cfg.enc_hidden = parse_widths(tc.enc_hidden);
        cfg.dec_hidden = parse_widths(tc.dec_hidden);
        cfg.alpha = tc.alpha;
        cfg.alpha_warmup = !tc.no_warmup;
        cfg.lr = tc.lr;
        cfg.epochs = tc.epochs;
        cfg.batch = tc.batch;
        cfg.seed = tc.seed;
        cfg.target_sum = tc.target_sum;

        cf::cvae::TrainResult hist;
        cf::cvae::CvaeModel model = cf::cvae::train_cvae(d, cfg, &hist);
        guard.track(tc.output);
        guard.track(tc.output + ".json");
        guard.track(tc.output + ".history.json");
        model.save(tc.output);
        json h;
        h["train_loss"] = hist.train_loss;
        h["valid_loss"] = hist.valid_loss;
        h["best_epoch"] = hist.best_epoch;
        h["diverged"] = hist.diverged;
        std::ofstream hout(tc.output + ".history.json", std::ios::trunc);
        hout << h.dump(2) << "\n";
        hout.close();
        man.write(tc.output + ".manifest.json");
        guard.commit();
        if (hist.diverged) {
            std::cerr << "training diverged; wrote the last good checkpoint\n";
            return 3;
        }
        return 0;
    }

    // ================================================================= generate
    if (*gen) {
        cf::cli::RunManifest man("generate");
        cf::cli::OutputGuard guard;
        man.input(ge.model);
        man.input(ge.labels);
        man.seed(ge.seed);

        cf::cvae::CvaeModel model = cf::cvae::CvaeModel::load(ge.model);
        std::vector<cf::expr::Split> ignore;
        cf::expr::CellAnnotations labels = cf::expr::load_annotations(ge.labels, &ignore);
        std::vector<cf::cvae::ConditionTuple> tuples;
        for (std::size_t i = 0; i < labels.size(); ++i)
            tuples.push_back({labels.labels[i], labels.species[i], labels.tissues[i]});
        cf::expr::Dataset out = cf::cvae::generate(model, tuples, ge.seed);
        std::string mpath = ge.output + ".cfx";
        std::string apath = ge.output + ".annotations.csv";
        guard.track(mpath);
        guard.track(apath);
        cf::expr::save_matrix_native(out.matrix, mpath);
        cf::expr::save_annotations(out.annotations, {}, apath);
        man.write(ge.output + ".manifest.json");
        guard.commit();
        std::cerr << "generate: wrote " << out.matrix.n_cells << " cells\n";
        return 0;
    }

    // ================================================================ train-clf
    if (*tclf) {
        cf::cli::RunManifest man("train-clf");
        cf::cli::OutputGuard guard;
        man.input(tl.input);
        man.input(tl.annotations);
        man.flag("epochs", static_cast<long long>(tl.epochs));
        man.flag("lr", tl.lr);
        man.flag("batch", static_cast<long long>(tl.batch));
        man.seed(tl.seed);

        cf::expr::Dataset d = load_dataset(tl.input, tl.format, tl.annotations);
        cf::clf::ClassifierConfig cfg;
        cfg.hidden = parse_widths(tl.hidden);
        cfg.lr = tl.lr;
        cfg.epochs = tl.epochs;
        cfg.batch = tl.batch;
        cfg.seed = tl.seed;
        cfg.target_sum = tl.target_sum;
        cf::clf::ClassifierTrainResult hist;
        cf::clf::Classifier clf = cf::clf::train_classifier(d, cfg, &hist);
        guard.track(tl.output);
        guard.track(tl.output + ".json");
        clf.save(tl.output);
        man.write(tl.output + ".manifest.json");
        guard.commit();
        return 0;
    }

    // ================================================================= evaluate
    if (*ev) {
        cf::cli::RunManifest man("evaluate");
        cf::cli::OutputGuard guard;
        man.input(ed.real);
        man.input(ed.real_annotations);
        man.flag("k-list", ed.k_list);
        man.flag("fit-components", static_cast<long long>(ed.fit_components));
        man.flag("embed-dim", static_cast<long long>(ed.embed_dim));
        man.flag("target-sum", ed.target_sum);
        man.flag("split", ed.split);

        cf::expr::Dataset real = load_dataset(ed.real, ed.real_format, ed.real_annotations);
        real = restrict_split(real, ed.split);
        cf::eval::EvalReport report;

        if (!ed.generated.empty()) {
            if (ed.gen_annotations.empty())
                throw cf::ValidationError("--generated needs --generated-annotations");
            man.input(ed.generated);
            man.input(ed.gen_annotations);
            cf::expr::Dataset gen =
                load_dataset(ed.generated, ed.gen_format, ed.gen_annotations);
            cf::eval::EvalOptions opts;
            opts.k_sweep = parse_k_list(ed.k_list);
            opts.fit_components = ed.fit_components;
            opts.embed_dim = ed.embed_dim;
            opts.target_sum = ed.target_sum;
            report.generative = cf::eval::evaluate_generative(real, gen, opts);
        }
        if (!ed.predictions.empty()) {
            man.input(ed.predictions);
            std::ifstream in(ed.predictions);
            if (!in) throw cf::IoError("cannot open predictions: " + ed.predictions);
            std::string line;
            if (!std::getline(in, line))
                throw cf::ValidationError("empty predictions file: " + ed.predictions);
            std::vector<std::string> header;
            {
                std::stringstream ss(line);
                std::string tok;
                while (std::getline(ss, tok, ',')) header.push_back(tok);
            }
            int pcol = -1;
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == "prediction") pcol = static_cast<int>(i);
            if (pcol < 0)
                throw cf::ValidationError("predictions file needs a 'prediction' column");
            std::vector<std::string> preds;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::stringstream ss(line);
                std::string tok;
                std::vector<std::string> f;
                while (std::getline(ss, tok, ',')) f.push_back(tok);
                preds.push_back(f.at(static_cast<std::size_t>(pcol)));
            }
            if (preds.size() != real.matrix.n_cells)
                throw cf::ValidationError("prediction count " + std::to_string(preds.size()) +
                                          " does not match cells " +
                                          std::to_string(real.matrix.n_cells));
            report.classification =
                cf::eval::classification_metrics(preds, real.annotations.labels);
        }
        if (!report.generative && !report.classification)
            throw cf::ValidationError("evaluate: give --generated and/or --predictions");
        guard.track(ed.output);
        report.save_json(ed.output);
        if (!ed.csv.empty()) {
            guard.track(ed.csv);
            report.save_csv(ed.csv);
        }
        man.write(ed.output + ".manifest.json");
        guard.commit();
        return 0;
    }

    // ================================================================== markers
    if (*mk) {
        cf::cli::RunManifest man("markers");
        cf::cli::OutputGuard guard;
        man.input(mo.input);
        man.input(mo.annotations);
        man.flag("top-k", static_cast<long long>(mo.top_k));
        man.flag("split", mo.split);

        cf::expr::Dataset d = load_dataset(mo.input, mo.format, mo.annotations);
        d = restrict_split(d, mo.split);
        std::vector<std::string> classes;
        if (!mo.class_name.empty()) {
            classes.push_back(mo.class_name);
        } else {
            std::set<std::string> s(d.annotations.labels.begin(), d.annotations.labels.end());
            classes.assign(s.begin(), s.end());
        }
        std::vector<cf::clf::MarkerTable> tables;
        for (const std::string& c : classes)
            tables.push_back(cf::clf::rank_markers(d, c, mo.top_k, mo.target_sum));
        guard.track(mo.output);
        cf::clf::save_marker_tsv(tables, d.matrix.vocab, mo.output);
        man.write(mo.output + ".manifest.json");
        guard.commit();
        return 0;
    }

    // ================================================================= saliency
    if (*sal) {
        cf::cli::RunManifest man("saliency");
        cf::cli::OutputGuard guard;
        man.input(so.model);
        man.input(so.input);
        man.input(so.annotations);
        man.flag("top-n", static_cast<long long>(so.top_n));
        man.flag("split", so.split);

        cf::clf::Classifier clf = cf::clf::Classifier::load(so.model);
        cf::expr::Dataset d = load_dataset(so.input, so.format, so.annotations);
        d = restrict_split(d, so.split);
        std::optional<std::set<std::size_t>> gene_set;
        if (!so.gene_set.empty()) {
            man.input(so.gene_set);
            std::ifstream in(so.gene_set);
            if (!in) throw cf::IoError("cannot open gene set: " + so.gene_set);
            std::set<std::size_t> idx;
            std::string line;
            while (std::getline(in, line)) {
                while (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) continue;
                auto it = d.matrix.vocab.index.find(line);
                if (it != d.matrix.vocab.index.end()) idx.insert(it->second);
            }
            gene_set = std::move(idx);
        }
        cf::clf::SaliencyResult res = cf::clf::saliency_pipeline(clf, d, gene_set, so.top_n);
        for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
        guard.track(so.output);
        cf::clf::save_saliency_tsv(res, d.matrix.vocab, so.output);
        man.write(so.output + ".manifest.json");
        guard.commit();
        return 0;
    }

    // ================================================================ templates
    if (*tp) {
        cf::cli::RunManifest man("templates");
        cf::cli::OutputGuard guard;
        man.flag("source", to.source);
        man.flag("task", to.task);
        man.flag("count", static_cast<long long>(to.count));
        man.flag("threshold", to.threshold);
        man.flag("max-rewrites", static_cast<long long>(to.max_rewrites));
        man.flag("max-words", static_cast<long long>(to.max_words));
        man.seed(to.seed);

        cf::tmpl::TraitPools pools = cf::tmpl::TraitPools::load_dir(to.pools);
        std::unique_ptr<cf::tmpl::TemplateSource> source;
        if (to.source == "canned") {
            if (to.candidates.empty())
                throw cf::ValidationError("--source canned needs --candidates");
            man.input(to.candidates);
            source = std::make_unique<cf::tmpl::CannedSource>(
                cf::tmpl::CannedSource::from_jsonl(to.candidates));
        } else if (to.source == "http") {
            if (to.endpoint.empty())
                throw cf::ValidationError("--source http needs --endpoint");
            cf::tmpl::HttpSourceConfig hcfg;
            hcfg.endpoint = to.endpoint;
            hcfg.auth_env = to.auth_env;
            hcfg.timeout_ms = to.timeout_ms;
            hcfg.request_log = to.request_log;
            source = std::make_unique<cf::tmpl::HttpSource>(hcfg);
        } else {
            throw cf::ValidationError("unknown template source: " + to.source);
        }

        cf::tmpl::DedupStats stats;
        std::vector<cf::tmpl::TemplateRecord> records = cf::tmpl::dedup_pipeline(
            *source, cf::tmpl::task_from_name(to.task), to.count, to.threshold,
            to.max_rewrites, pools, to.seed, &stats, to.max_words);
        if (stats.exhausted)
            std::cerr << "warning: source exhausted at " << records.size() << "/" << to.count
                      << " templates\n";
        if (!to.no_split && records.size() >= 3) {
            auto r = parse_ratios(to.ratios);
            records = cf::tmpl::split_templates(std::move(records), r[0], r[1], r[2], to.seed);
        }
        guard.track(to.output);
        cf::tmpl::save_records_jsonl(records, to.output);
        man.write(to.output + ".manifest.json");
        guard.commit();
        std::cerr << "templates: accepted " << records.size() << " (rewrites " << stats.rewrites
                  << ", similarity discards " << stats.discarded_similarity << ")\n";
        return 0;
    }

    // ==================================================================== vocab
    if (*vb) {
        cf::cli::RunManifest man("vocab");
        cf::cli::OutputGuard guard;
        std::vector<std::set<std::string>> sets;
        for (const std::string& path : vo.inputs) {
            man.input(path);
            cf::expr::ExpressionMatrix m = load_matrix_auto(path, vo.format);
            std::set<std::string> s;
            if (vo.hvg > 0 && vo.hvg < m.n_genes) {
                for (std::size_t j : cf::expr::select_hvg(m, vo.hvg))
                    s.insert(m.vocab.genes[j]);
            } else {
                s.insert(m.vocab.genes.begin(), m.vocab.genes.end());
            }
            sets.push_back(std::move(s));
        }
        cf::expr::GeneVocabulary v = cf::expr::build_vocabulary(sets);
        guard.track(vo.output);
        std::ofstream out(vo.output, std::ios::trunc);
        if (!out) throw cf::IoError("cannot write vocabulary: " + vo.output);
        for (const std::string& g : v.genes) out << g << "\n";
        out.close();
        man.write(vo.output + ".manifest.json");
        guard.commit();
        std::cerr << "vocab: " << v.size() << " genes\n";
        return 0;
    }

    return 0;
}
