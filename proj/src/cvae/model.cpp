#include "cellforge/cvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cellforge/expr/transform.hpp"
#include "cellforge/num/adam.hpp"
#include "cellforge/num/checkpoint.hpp"
#include "cellforge/num/graph.hpp"
#include "cellforge/util/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cellforge::cvae {

using json = nlohmann::json;
using num::Graph;
using num::MlpSpec;
using num::Tensor;
using num::Var;

ConditionVocab ConditionVocab::from_annotations(const expr::CellAnnotations& a) {
    auto collect = [](const std::vector<std::string>& col) {
        std::set<std::string> s(col.begin(), col.end());
        std::vector<std::string> out(s.begin(), s.end());
        if (out.empty()) out.push_back("");
        return out;
    };
    ConditionVocab v;
    v.cell_types = collect(a.labels);
    v.species = collect(a.species);
    v.tissues = collect(a.tissues);
    return v;
}

std::size_t ConditionVocab::index_of(const std::vector<std::string>& pool,
                                     const std::string& value, const char* kind) const {
    auto it = std::lower_bound(pool.begin(), pool.end(), value);
    if (it == pool.end() || *it != value)
        throw ValidationError(std::string("unknown ") + kind + ": '" + value + "'");
    return static_cast<std::size_t>(it - pool.begin());
}

std::pair<double, double> estimate_library_prior(const expr::Dataset& train) {
    std::vector<std::size_t> cells;
    if (train.split.empty()) {
        cells.resize(train.matrix.n_cells);
        std::iota(cells.begin(), cells.end(), 0);
    } else {
        cells = train.cells_in_split(expr::Split::kTrain);
    }
    if (cells.empty()) throw ValidationError("estimate_library_prior: empty training split");
    double mean = 0.0;
    std::vector<double> logs;
    logs.reserve(cells.size());
    for (std::size_t i : cells) {
        double total = train.matrix.total_count(i);
        if (total <= 0.0)
            throw ValidationError("estimate_library_prior: cell " + std::to_string(i) +
                                  " has zero total count");
        logs.push_back(std::log(total));
        mean += logs.back();
    }
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (double l : logs) var += (l - mean) * (l - mean);
    var /= static_cast<double>(logs.size());  // population variance, matching E[(x-mu)^2]
    return {mean, var};
}

namespace {

std::vector<std::size_t> hidden_chain(std::size_t in, const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> w;
    w.push_back(in);
    for (std::size_t h : hidden) w.push_back(h);
    return w;
}

double softplus_scalar(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

CvaeModel::CvaeModel(expr::GeneVocabulary vocab, ConditionVocab cond, CvaeConfig cfg,
                     double prior_lmu, double prior_lvar)
    : vocab_(std::move(vocab)),
      cond_(std::move(cond)),
      cfg_(cfg),
      prior_lmu_(prior_lmu),
      prior_lvar_(prior_lvar) {
    if (cfg_.enc_hidden.empty() || cfg_.dec_hidden.empty())
        throw ValidationError("CvaeModel: hidden layer lists must be non-empty");
    if (!(prior_lvar_ >= 0.0)) throw ValidationError("CvaeModel: library variance must be >= 0");
    std::size_t g = vocab_.size();
    std::size_t in = g + cfg_.d_c;
    using num::Activation;
    cond_proj_ = MlpSpec::dense({3 * cfg_.emb_dim, cfg_.d_c}, Activation::kIdentity,
                                Activation::kIdentity);
    enc_z_trunk_ = MlpSpec::dense(hidden_chain(in, cfg_.enc_hidden), Activation::kRelu,
                                  Activation::kRelu);
    enc_z_mu_ = MlpSpec::dense({cfg_.enc_hidden.back(), cfg_.d_z}, Activation::kIdentity,
                               Activation::kIdentity);
    enc_z_sigma_ = enc_z_mu_;
    enc_l_trunk_ = enc_z_trunk_;
    enc_l_mu_ = MlpSpec::dense({cfg_.enc_hidden.back(), 1}, Activation::kIdentity,
                               Activation::kIdentity);
    enc_l_sigma_ = enc_l_mu_;
    dec_f1_ = MlpSpec::dense(hidden_chain(1 + cfg_.d_c, cfg_.dec_hidden), Activation::kRelu,
                             Activation::kRelu);
    dec_f1_.widths.push_back(1);
    dec_f1_.activations.push_back(Activation::kIdentity);
    dec_f1_.residual_from.push_back(-1);
    dec_trunk_ = MlpSpec::dense(hidden_chain(cfg_.d_z + cfg_.d_c, cfg_.dec_hidden),
                                Activation::kRelu, Activation::kRelu);
    dec_rho_ = MlpSpec::dense({cfg_.dec_hidden.back(), g}, Activation::kIdentity,
                              Activation::kIdentity);
    dec_tau_ = dec_rho_;

    num::Rng rng(num::splitmix64(cfg_.seed ^ 0x6cf5a3b1));
    auto emb_table = [&](std::size_t n) {
        Tensor t = Tensor::zeros({n, cfg_.emb_dim});
        double scale = std::sqrt(2.0 / static_cast<double>(n + cfg_.emb_dim));
        for (double& v : t.data) v = rng.normal() * scale;
        return t;
    };
    store_.add("cond.ct", emb_table(cond_.cell_types.size()));
    store_.add("cond.sp", emb_table(cond_.species.size()));
    store_.add("cond.ti", emb_table(cond_.tissues.size()));
    num::init_mlp(store_, cond_proj_, "cond.proj", rng);
    num::init_mlp(store_, enc_z_trunk_, "enc_z.trunk", rng);
    num::init_mlp(store_, enc_z_mu_, "enc_z.mu", rng);
    num::init_mlp(store_, enc_z_sigma_, "enc_z.sigma", rng);
    num::init_mlp(store_, enc_l_trunk_, "enc_l.trunk", rng);
    num::init_mlp(store_, enc_l_mu_, "enc_l.mu", rng);
    num::init_mlp(store_, enc_l_sigma_, "enc_l.sigma", rng);
    num::init_mlp(store_, dec_f1_, "dec.f1", rng);
    num::init_mlp(store_, dec_trunk_, "dec.trunk", rng);
    num::init_mlp(store_, dec_rho_, "dec.rho", rng);
    num::init_mlp(store_, dec_tau_, "dec.tau", rng);
    store_.add("g", Tensor::full({1, g}, 1.0));
}

std::vector<double> CvaeModel::condition_vector(const ConditionTuple& cond) const {
    if (cond.is_null()) return std::vector<double>(cfg_.d_c, 0.0);
    std::size_t ict = cond_.index_of(cond_.cell_types, cond.cell_type, "cell type");
    std::size_t isp = cond_.index_of(cond_.species, cond.species, "species");
    std::size_t iti = cond_.index_of(cond_.tissues, cond.tissue, "tissue");
    std::size_t e = cfg_.emb_dim;
    Tensor cat = Tensor::zeros({1, 3 * e});
    const Tensor& ct = store_.value("cond.ct");
    const Tensor& sp = store_.value("cond.sp");
    const Tensor& ti = store_.value("cond.ti");
    for (std::size_t j = 0; j < e; ++j) {
        cat.data[j] = ct.data[ict * e + j];
        cat.data[e + j] = sp.data[isp * e + j];
        cat.data[2 * e + j] = ti.data[iti * e + j];
    }
    Tensor c = num::mlp_apply(cond_proj_, store_, "cond.proj", cat);
    return c.data;
}

Posterior CvaeModel::encode(const std::vector<double>& s_norm,
                            const ConditionTuple& cond) const {
    if (s_norm.size() != vocab_.size())
        throw ValidationError("encode: expression vector length " +
                              std::to_string(s_norm.size()) + " does not match vocabulary (" +
                              std::to_string(vocab_.size()) + ")");
    std::vector<double> c = condition_vector(cond);
    std::vector<double> x = s_norm;
    x.insert(x.end(), c.begin(), c.end());
    Tensor xin = Tensor::row(std::move(x));
    Tensor hz = num::mlp_apply(enc_z_trunk_, store_, "enc_z.trunk", xin);
    Tensor hl = num::mlp_apply(enc_l_trunk_, store_, "enc_l.trunk", xin);
    Posterior post;
    post.mu_z = num::mlp_apply(enc_z_mu_, store_, "enc_z.mu", hz).data;
    Tensor sz = num::mlp_apply(enc_z_sigma_, store_, "enc_z.sigma", hz);
    post.sigma_z.resize(sz.size());
    for (std::size_t i = 0; i < sz.size(); ++i) post.sigma_z[i] = softplus_scalar(sz.data[i]);
    post.mu_l = num::mlp_apply(enc_l_mu_, store_, "enc_l.mu", hl).data[0];
    post.sigma_l = softplus_scalar(num::mlp_apply(enc_l_sigma_, store_, "enc_l.sigma", hl).data[0]);
    return post;
}

LatentSample CvaeModel::reparameterize(const Posterior& post,
                                       const std::vector<double>& noise) const {
    if (noise.size() != post.mu_z.size() + 1)
        throw ValidationError("reparameterize: noise must have d_z + 1 entries");
    LatentSample s;
    s.z.resize(post.mu_z.size());
    for (std::size_t i = 0; i < s.z.size(); ++i)
        s.z[i] = post.mu_z[i] + post.sigma_z[i] * noise[i];
    s.ell = std::exp(post.mu_l + post.sigma_l * noise.back());
    return s;
}

DecodeResult CvaeModel::decode(const LatentSample& latent, const ConditionTuple& cond) const {
    if (latent.z.size() != cfg_.d_z)
        throw ValidationError("decode: latent dimension does not match d_z");
    if (!(latent.ell > 0.0)) throw ValidationError("decode: library size must be positive");
    std::vector<double> c = condition_vector(cond);
    std::size_t g = vocab_.size();

    std::vector<double> f1in;
    f1in.push_back(std::log(latent.ell));
    f1in.insert(f1in.end(), c.begin(), c.end());
    double f1raw = num::mlp_apply(dec_f1_, store_, "dec.f1", Tensor::row(f1in)).data[0];
    double log_lprime = std::log(latent.ell) + f1raw;

    std::vector<double> din = latent.z;
    din.insert(din.end(), c.begin(), c.end());
    Tensor h = num::mlp_apply(dec_trunk_, store_, "dec.trunk", Tensor::row(din));
    Tensor rho_logits = num::mlp_apply(dec_rho_, store_, "dec.rho", h);
    Tensor tau_logits = num::mlp_apply(dec_tau_, store_, "dec.tau", h);

    DecodeResult out;
    out.lprime = std::exp(log_lprime);
    out.rho.resize(g);
    double mx = rho_logits.data[0];
    for (double v : rho_logits.data) mx = std::max(mx, v);
    double acc = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        out.rho[i] = std::exp(rho_logits.data[i] - mx);
        acc += out.rho[i];
    }
    for (double& v : out.rho) v /= acc;

    const Tensor& gvec = store_.value("g");
    out.zinb.mu.resize(g);
    out.zinb.theta.resize(g);
    out.zinb.pi.resize(g);
    for (std::size_t i = 0; i < g; ++i) {
        out.zinb.mu[i] = out.lprime * out.rho[i];
        out.zinb.theta[i] = softplus_scalar(gvec.data[i]);
        out.zinb.pi[i] = sigmoid_scalar(tau_logits.data[i]);
    }
    return out;
}

Var CvaeModel::traced_condition(Graph& g, const std::vector<ConditionTuple>& conds) const {
    std::size_t b = conds.size();
    std::vector<std::size_t> ict(b, 0), isp(b, 0), iti(b, 0);
    Tensor mask = Tensor::zeros({b, 1});
    for (std::size_t i = 0; i < b; ++i) {
        if (conds[i].is_null()) continue;
        ict[i] = cond_.index_of(cond_.cell_types, conds[i].cell_type, "cell type");
        isp[i] = cond_.index_of(cond_.species, conds[i].species, "species");
        iti[i] = cond_.index_of(cond_.tissues, conds[i].tissue, "tissue");
        mask.data[i] = 1.0;
    }
    Var ct = g.gather_rows(g.param(store_, "cond.ct"), ict);
    Var sp = g.gather_rows(g.param(store_, "cond.sp"), isp);
    Var ti = g.gather_rows(g.param(store_, "cond.ti"), iti);
    Var cat = g.concat_cols(g.concat_cols(ct, sp), ti);
    Var proj = num::mlp_forward(g, cond_proj_, store_, "cond.proj", cat);
    // Null conditions become exactly zero vectors.
    return g.mul_colvec(proj, g.constant(std::move(mask)));
}

CvaeModel::TracedElbo CvaeModel::elbo_graph(Graph& g, const Tensor& counts,
                                            const Tensor& s_norm,
                                            const std::vector<ConditionTuple>& conds,
                                            const Tensor& noise_z, const Tensor& noise_l,
                                            double alpha) const {
    std::size_t b = conds.size();
    std::size_t gn = vocab_.size();
    if (counts.rows() != b || counts.cols() != gn || s_norm.rows() != b || s_norm.cols() != gn)
        throw ValidationError("elbo_graph: batch tensors do not match (batch, genes)");
    if (noise_z.rows() != b || noise_z.cols() != cfg_.d_z || noise_l.size() != b)
        throw ValidationError("elbo_graph: noise shapes do not match");
    for (double y : counts.data)
        if (y < 0.0 || std::floor(y) != y)
            throw ValidationError("elbo_graph: counts must be non-negative integers");

    Var c = traced_condition(g, conds);
    Var x = g.concat_cols(g.constant(s_norm), c);

    Var hz = num::mlp_forward(g, enc_z_trunk_, store_, "enc_z.trunk", x);
    Var mu_z = num::mlp_forward(g, enc_z_mu_, store_, "enc_z.mu", hz);
    Var sigma_z = g.softplus(num::mlp_forward(g, enc_z_sigma_, store_, "enc_z.sigma", hz));
    Var hl = num::mlp_forward(g, enc_l_trunk_, store_, "enc_l.trunk", x);
    Var mu_l = num::mlp_forward(g, enc_l_mu_, store_, "enc_l.mu", hl);
    Var sigma_l = g.softplus(num::mlp_forward(g, enc_l_sigma_, store_, "enc_l.sigma", hl));

    Var z = g.add(mu_z, g.mul(sigma_z, g.constant(noise_z)));
    Tensor nl = noise_l;
    nl.shape = {b, 1};
    Var logl = g.add(mu_l, g.mul(sigma_l, g.constant(std::move(nl))));

    Var f1in = g.concat_cols(logl, c);
    Var f1raw = num::mlp_forward(g, dec_f1_, store_, "dec.f1", f1in);
    Var log_lprime = g.add(logl, f1raw);

    Var din = g.concat_cols(z, c);
    Var h = num::mlp_forward(g, dec_trunk_, store_, "dec.trunk", din);
    Var log_rho = g.log_softmax_rows(num::mlp_forward(g, dec_rho_, store_, "dec.rho", h));
    Var tau_logits = num::mlp_forward(g, dec_tau_, store_, "dec.tau", h);

    Var theta_row = g.softplus(g.param(store_, "g"));
    Var theta = g.broadcast_rows(theta_row, b);
    Var log_theta = g.log(theta);
    Var log_mu = g.add_colvec(log_rho, log_lprime);
    Var log_theta_mu = g.logaddexp(log_theta, log_mu);
    Var log_pi = g.neg(g.softplus(g.neg(tau_logits)));
    Var log_1mpi = g.neg(g.softplus(tau_logits));
    Var lnb0 = g.mul(theta, g.sub(log_theta, log_theta_mu));

    Tensor mask0 = Tensor::zeros({b, gn});
    Tensor maskp = Tensor::zeros({b, gn});
    Tensor lgamma_y1 = Tensor::zeros({b, gn});
    for (std::size_t i = 0; i < counts.size(); ++i) {
        mask0.data[i] = counts.data[i] == 0.0 ? 1.0 : 0.0;
        maskp.data[i] = 1.0 - mask0.data[i];
        lgamma_y1.data[i] = std::lgamma(counts.data[i] + 1.0);
    }
    Var y = g.constant(counts);

    Var case0 = g.logaddexp(log_pi, g.add(log_1mpi, lnb0));
    Var casep = g.add(log_1mpi, g.lgamma(g.add(y, theta)));
    casep = g.sub(casep, g.lgamma(theta));
    casep = g.sub(casep, g.constant(std::move(lgamma_y1)));
    casep = g.add(casep, lnb0);
    casep = g.add(casep, g.mul(y, g.sub(log_mu, log_theta_mu)));

    Var ll = g.sum_all(g.add(g.mul(g.constant(std::move(mask0)), case0),
                             g.mul(g.constant(std::move(maskp)), casep)));

    // KL(q(z) || N(0, I)) summed over batch and dims.
    Var kz = g.mul_scalar(g.add(g.mul(mu_z, mu_z), g.mul(sigma_z, sigma_z)), 0.5);
    kz = g.add_scalar(kz, -0.5);
    kz = g.sub(kz, g.log(sigma_z));
    Var kl_z = g.sum_all(kz);

    // KL(q(l) || Lognormal(prior)) via the underlying Gaussians.
    double vp = prior_lvar_;
    if (!(vp > 0.0)) vp = 1e-12;  // constant-library corner; prior collapses
    Var sl2 = g.mul(sigma_l, sigma_l);
    Var kl_part = g.add_scalar(g.mul_scalar(sl2, 0.5 / vp), 0.5 * std::log(vp) - 0.5);
    kl_part = g.sub(kl_part, g.log(sigma_l));
    Var dm = g.add_scalar(mu_l, -prior_lmu_);
    kl_part = g.add(kl_part, g.mul_scalar(g.mul(dm, dm), 0.5 / vp));
    Var kl_l = g.sum_all(kl_part);

    double inv_b = 1.0 / static_cast<double>(b);
    Var loss = g.mul_scalar(
        g.add(g.neg(ll), g.mul_scalar(g.add(kl_z, kl_l), alpha)), inv_b);

    TracedElbo out;
    out.loss = loss;
    out.recon_nll = g.mul_scalar(g.neg(ll), inv_b);
    out.kl_z = g.mul_scalar(kl_z, inv_b);
    out.kl_l = g.mul_scalar(kl_l, inv_b);
    return out;
}

ElboTerms CvaeModel::elbo_loss(const std::vector<double>& counts,
                               const std::vector<double>& s_norm, const ConditionTuple& cond,
                               double alpha, const std::vector<double>& noise, bool grads) {
    std::size_t gn = vocab_.size();
    if (counts.size() != gn || s_norm.size() != gn)
        throw ValidationError("elbo_loss: vector lengths do not match vocabulary");
    if (noise.size() != cfg_.d_z + 1)
        throw ValidationError("elbo_loss: noise must have d_z + 1 entries");
    Graph g;
    Tensor yc = Tensor::matrix(1, gn, counts);
    Tensor sn = Tensor::matrix(1, gn, s_norm);
    Tensor nz = Tensor::matrix(1, cfg_.d_z,
                               std::vector<double>(noise.begin(), noise.begin() +
                                                                     static_cast<std::ptrdiff_t>(cfg_.d_z)));
    Tensor nl = Tensor::matrix(1, 1, {noise.back()});
    TracedElbo t = elbo_graph(g, yc, sn, {cond}, nz, nl, alpha);
    ElboTerms terms;
    terms.loss = g.value(t.loss).data[0];
    terms.recon_nll = g.value(t.recon_nll).data[0];
    terms.kl_z = g.value(t.kl_z).data[0];
    terms.kl_l = g.value(t.kl_l).data[0];
    if (!std::isfinite(terms.loss))
        throw NumericError("elbo_loss is not finite (recon=" + std::to_string(terms.recon_nll) +
                           ", kl_z=" + std::to_string(terms.kl_z) +
                           ", kl_l=" + std::to_string(terms.kl_l) + ")");
    if (grads) {
        g.backward(t.loss);
        g.add_param_grads(store_);
    }
    return terms;
}

void CvaeModel::save(const std::string& path) const {
    num::save_params(store_, path);
    json meta;
    meta["format"] = "cellforge-cvae";
    meta["d_z"] = cfg_.d_z;
    meta["d_c"] = cfg_.d_c;
    meta["emb_dim"] = cfg_.emb_dim;
    meta["enc_hidden"] = cfg_.enc_hidden;
    meta["dec_hidden"] = cfg_.dec_hidden;
    meta["alpha"] = cfg_.alpha;
    meta["alpha_warmup"] = cfg_.alpha_warmup;
    meta["lr"] = cfg_.lr;
    meta["epochs"] = trained_epochs;
    meta["seed"] = trained_seed;
    meta["batch"] = cfg_.batch;
    meta["target_sum"] = cfg_.target_sum;
    meta["library_prior_mu"] = prior_lmu_;
    meta["library_prior_var"] = prior_lvar_;
    meta["vocabulary_hash"] = vocab_.content_hash();
    meta["genes"] = vocab_.genes;
    meta["cell_types"] = cond_.cell_types;
    meta["species"] = cond_.species;
    meta["tissues"] = cond_.tissues;
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot write model sidecar: " + path + ".json");
    out << meta.dump(2) << "\n";
}

CvaeModel CvaeModel::load(const std::string& path) {
    std::ifstream in(path + ".json");
    if (!in) throw IoError("cannot open model sidecar: " + path + ".json");
    json meta = json::parse(in, nullptr, true);
    if (meta.value("format", "") != "cellforge-cvae")
        throw ValidationError("not a cvae model sidecar: " + path + ".json");
    CvaeConfig cfg;
    cfg.d_z = meta.at("d_z").get<std::size_t>();
    cfg.d_c = meta.at("d_c").get<std::size_t>();
    cfg.emb_dim = meta.at("emb_dim").get<std::size_t>();
    cfg.enc_hidden = meta.at("enc_hidden").get<std::vector<std::size_t>>();
    cfg.dec_hidden = meta.at("dec_hidden").get<std::vector<std::size_t>>();
    cfg.alpha = meta.at("alpha").get<double>();
    cfg.alpha_warmup = meta.value("alpha_warmup", true);
    cfg.lr = meta.at("lr").get<double>();
    cfg.batch = meta.value("batch", std::size_t{32});
    cfg.target_sum = meta.value("target_sum", 1e4);
    ConditionVocab cond;
    cond.cell_types = meta.at("cell_types").get<std::vector<std::string>>();
    cond.species = meta.at("species").get<std::vector<std::string>>();
    cond.tissues = meta.at("tissues").get<std::vector<std::string>>();
    auto vocab =
        expr::GeneVocabulary::from_genes(meta.at("genes").get<std::vector<std::string>>());
    CvaeModel model(std::move(vocab), std::move(cond), cfg,
                    meta.at("library_prior_mu").get<double>(),
                    meta.at("library_prior_var").get<double>());
    model.trained_seed = meta.value("seed", std::uint64_t{0});
    model.trained_epochs = meta.value("epochs", std::size_t{0});
    num::ParamStore loaded = num::load_params(path);
    for (auto& [name, entry] : model.store_.entries) {
        if (!loaded.has(name)) throw ValidationError("checkpoint missing parameter: " + name);
        const Tensor& v = loaded.value(name);
        if (!v.same_shape(entry.value))
            throw ValidationError("checkpoint shape mismatch for parameter: " + name);
        entry.value = v;
    }
    return model;
}

CvaeModel train_cvae(const expr::Dataset& data, const CvaeConfig& cfg, TrainResult* result) {
    data.validate();
    std::vector<std::size_t> train_idx, valid_idx;
    if (data.split.empty()) {
        train_idx.resize(data.matrix.n_cells);
        std::iota(train_idx.begin(), train_idx.end(), 0);
    } else {
        train_idx = data.cells_in_split(expr::Split::kTrain);
        valid_idx = data.cells_in_split(expr::Split::kValid);
    }
    if (train_idx.empty()) throw ValidationError("train_cvae: empty training split");

    auto [lmu, lvar] = estimate_library_prior(data);
    ConditionVocab cond = ConditionVocab::from_annotations(data.annotations);
    CvaeModel model(data.matrix.vocab, cond, cfg, lmu, lvar);
    model.trained_seed = cfg.seed;
    model.trained_epochs = cfg.epochs;

    std::size_t gn = data.matrix.n_genes;
    std::vector<double> norm = expr::normalize_log1p(data.matrix, cfg.target_sum);
    auto cond_of = [&](std::size_t i) {
        return ConditionTuple{data.annotations.labels[i], data.annotations.species[i],
                              data.annotations.tissues[i]};
    };

    num::Adam opt(cfg.lr);
    num::Rng rng = num::Rng(cfg.seed).derive(1);
    std::size_t steps_per_epoch = (train_idx.size() + cfg.batch - 1) / cfg.batch;
    std::size_t total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
    std::size_t warmup = cfg.alpha_warmup ? std::max<std::size_t>(1, total_steps / 10) : 0;

    auto batch_terms = [&](const std::vector<std::size_t>& cells, double alpha, num::Rng& nrng,
                           bool grads) {
        std::size_t b = cells.size();
        Tensor yc = Tensor::zeros({b, gn});
        Tensor sn = Tensor::zeros({b, gn});
        std::vector<ConditionTuple> conds;
        conds.reserve(b);
        for (std::size_t r = 0; r < b; ++r) {
            std::size_t i = cells[r];
            std::vector<double> dense = data.matrix.dense_row(i);
            std::copy(dense.begin(), dense.end(), yc.data.begin() + static_cast<std::ptrdiff_t>(r * gn));
            std::copy(norm.begin() + static_cast<std::ptrdiff_t>(i * gn),
                      norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * gn),
                      sn.data.begin() + static_cast<std::ptrdiff_t>(r * gn));
            conds.push_back(cond_of(i));
        }
        Tensor nz = Tensor::zeros({b, cfg.d_z});
        for (double& v : nz.data) v = nrng.normal();
        Tensor nl = Tensor::zeros({b, 1});
        for (double& v : nl.data) v = nrng.normal();
        Graph g;
        CvaeModel::TracedElbo t = model.elbo_graph(g, yc, sn, conds, nz, nl, alpha);
        double loss = g.value(t.loss).data[0];
        if (grads && std::isfinite(loss)) {
            g.backward(t.loss);
            model.params().zero_grads();
            g.add_param_grads(model.params());
        }
        return loss;
    };

    TrainResult local;
    TrainResult& res = result ? *result : local;
    res = TrainResult{};
    double best_valid = std::numeric_limits<double>::infinity();
    num::ParamStore best_params = model.params();
    bool have_best = false;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_cells = 0;
        bool aborted = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t end = std::min(order.size(), start + cfg.batch);
            std::vector<std::size_t> cells(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            ++step;
            double alpha = cfg.alpha;
            if (warmup && step < warmup)
                alpha = cfg.alpha * static_cast<double>(step) / static_cast<double>(warmup);
            double loss = batch_terms(cells, alpha, rng, true);
            if (!std::isfinite(loss)) {
                res.diverged = true;
                aborted = true;
                break;
            }
            try {
                opt.step(model.params());
            } catch (const NumericError&) {
                res.diverged = true;
                aborted = true;
                break;
            }
            epoch_loss += loss * static_cast<double>(cells.size());
            epoch_cells += cells.size();
        }
        if (aborted) break;
        res.train_loss.push_back(epoch_loss / static_cast<double>(epoch_cells));

        if (!valid_idx.empty()) {
            num::Rng vrng = num::Rng(cfg.seed).derive(1000 + epoch);
            double vloss = 0.0;
            for (std::size_t start = 0; start < valid_idx.size(); start += cfg.batch) {
                std::size_t end = std::min(valid_idx.size(), start + cfg.batch);
                std::vector<std::size_t> cells(
                    valid_idx.begin() + static_cast<std::ptrdiff_t>(start),
                    valid_idx.begin() + static_cast<std::ptrdiff_t>(end));
                vloss += batch_terms(cells, cfg.alpha, vrng, false) *
                         static_cast<double>(cells.size());
            }
            vloss /= static_cast<double>(valid_idx.size());
            res.valid_loss.push_back(vloss);
            if (vloss < best_valid) {
                best_valid = vloss;
                best_params = model.params();
                res.best_epoch = epoch;
                have_best = true;
            }
        }
    }

    // Validation-selected checkpoint; on divergence fall back to the best
    // finite state seen.
    if (have_best && (!valid_idx.empty() || res.diverged)) model.params() = best_params;
    return model;
}

expr::Dataset generate(const CvaeModel& model, const std::vector<ConditionTuple>& labels,
                       std::uint64_t seed) {
    if (labels.empty()) throw ValidationError("generate: no labels given");
    // Validate every label up front so unknown categories fail with a name.
    for (const ConditionTuple& l : labels) (void)model.condition_vector(l);

    std::size_t gn = model.vocab().size();
    auto [lmu, lvar] = model.library_prior();
    double lsd = std::sqrt(lvar);
    std::size_t n = labels.size();
    std::vector<std::vector<expr::SparseEntry>> rows(n);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        std::size_t i = static_cast<std::size_t>(ii);
        num::Rng rng = num::Rng(seed).derive(i);
        LatentSample latent;
        latent.z.resize(model.config().d_z);
        for (double& v : latent.z) v = rng.normal();
        latent.ell = std::exp(lmu + lsd * rng.normal());
        DecodeResult dec = model.decode(latent, labels[i]);
        std::vector<expr::SparseEntry> row;
        for (std::size_t j = 0; j < gn; ++j) {
            std::uint64_t v = sample_zinb_chain(rng, dec.rho[j], dec.zinb.theta[j],
                                                dec.zinb.pi[j], dec.lprime);
            if (v == 0) continue;
            if (v > UINT32_MAX) throw NumericError("generated count overflows 32 bits");
            row.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(v)});
        }
        rows[i] = std::move(row);
    }

    expr::Dataset out;
    out.matrix.n_cells = n;
    out.matrix.n_genes = gn;
    out.matrix.vocab = model.vocab();
    out.matrix.rows = std::move(rows);
    out.annotations.cell_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.annotations.cell_ids.push_back("gen" + std::to_string(i));
        out.annotations.labels.push_back(labels[i].cell_type);
        out.annotations.species.push_back(labels[i].species);
        out.annotations.tissues.push_back(labels[i].tissue);
    }
    out.validate();
    return out;
}

}  // namespace cellforge::cvae
