#include "cellforge/clf/classifier.hpp"

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
#include "cellforge/util/errors.hpp"

namespace cellforge::clf {

using json = nlohmann::json;
using num::Graph;
using num::Tensor;
using num::Var;

Classifier::Classifier(expr::GeneVocabulary vocab, std::vector<std::string> classes,
                       ClassifierConfig cfg)
    : vocab_(std::move(vocab)), classes_(std::move(classes)), cfg_(cfg) {
    if (classes_.size() < 2) throw ValidationError("classifier needs at least 2 classes");
    std::set<std::string> uniq(classes_.begin(), classes_.end());
    if (uniq.size() != classes_.size())
        throw ValidationError("classifier class names must be unique");
    std::vector<std::size_t> widths;
    widths.push_back(vocab_.size());
    for (std::size_t h : cfg_.hidden) widths.push_back(h);
    widths.push_back(classes_.size());
    spec_ = num::MlpSpec::dense(widths, num::Activation::kRelu, num::Activation::kIdentity);
    num::Rng rng(num::splitmix64(cfg_.seed ^ 0x1f3a5c7e));
    num::init_mlp(store_, spec_, "clf", rng);
}

std::vector<double> Classifier::logits(const std::vector<double>& s_norm) const {
    if (s_norm.size() != vocab_.size())
        throw ValidationError("predict: expression vector length " +
                              std::to_string(s_norm.size()) + " does not match vocabulary (" +
                              std::to_string(vocab_.size()) + ")");
    return num::mlp_apply(spec_, store_, "clf", Tensor::row(s_norm)).data;
}

std::pair<std::string, std::vector<double>> Classifier::predict(
    const std::vector<double>& s_norm) const {
    std::vector<double> l = logits(s_norm);
    double mx = *std::max_element(l.begin(), l.end());
    std::vector<double> probs(l.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        probs[i] = std::exp(l[i] - mx);
        acc += probs[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        probs[i] /= acc;
        if (l[i] > l[best]) best = i;
    }
    return {classes_[best], probs};
}

namespace {

Var cross_entropy(Graph& g, Var logits, const std::vector<std::size_t>& targets,
                  std::size_t n_classes) {
    std::size_t b = targets.size();
    Tensor onehot = Tensor::zeros({b, n_classes});
    for (std::size_t i = 0; i < b; ++i) onehot.data[i * n_classes + targets[i]] = 1.0;
    Var logp = g.log_softmax_rows(logits);
    Var picked = g.mul(logp, g.constant(std::move(onehot)));
    return g.mul_scalar(g.neg(g.sum_all(picked)), 1.0 / static_cast<double>(b));
}

}  // namespace

double Classifier::loss_and_grads(const Tensor& s_norm, const std::vector<std::size_t>& targets) {
    if (s_norm.rows() != targets.size())
        throw ValidationError("loss_and_grads: batch sizes disagree");
    Graph g;
    Var x = g.constant(s_norm);
    Var logits = num::mlp_forward(g, spec_, store_, "clf", x);
    Var loss = cross_entropy(g, logits, targets, classes_.size());
    double value = g.value(loss).data[0];
    if (std::isfinite(value)) {
        g.backward(loss);
        store_.zero_grads();
        g.add_param_grads(store_);
    }
    return value;
}

std::vector<double> Classifier::input_gradient(const std::vector<double>& s_norm,
                                               std::size_t target_class) const {
    if (target_class >= classes_.size())
        throw ValidationError("input_gradient: target class out of range");
    if (s_norm.size() != vocab_.size())
        throw ValidationError("input_gradient: expression vector length mismatch");
    Graph g;
    Var x = g.input(Tensor::row(s_norm));
    Var logits = num::mlp_forward(g, spec_, store_, "clf", x);
    Var loss = cross_entropy(g, logits, {target_class}, classes_.size());
    g.backward(loss);
    return g.grad(x).data;
}

void Classifier::save(const std::string& path) const {
    num::save_params(store_, path);
    json meta;
    meta["format"] = "cellforge-classifier";
    meta["classes"] = classes_;
    meta["genes"] = vocab_.genes;
    meta["hidden"] = cfg_.hidden;
    meta["lr"] = cfg_.lr;
    meta["epochs"] = cfg_.epochs;
    meta["batch"] = cfg_.batch;
    meta["seed"] = cfg_.seed;
    meta["target_sum"] = cfg_.target_sum;
    meta["vocabulary_hash"] = vocab_.content_hash();
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot write classifier sidecar: " + path + ".json");
    out << meta.dump(2) << "\n";
}

Classifier Classifier::load(const std::string& path) {
    std::ifstream in(path + ".json");
    if (!in) throw IoError("cannot open classifier sidecar: " + path + ".json");
    json meta = json::parse(in, nullptr, true);
    if (meta.value("format", "") != "cellforge-classifier")
        throw ValidationError("not a classifier sidecar: " + path + ".json");
    ClassifierConfig cfg;
    cfg.hidden = meta.at("hidden").get<std::vector<std::size_t>>();
    cfg.lr = meta.at("lr").get<double>();
    cfg.epochs = meta.at("epochs").get<std::size_t>();
    cfg.batch = meta.at("batch").get<std::size_t>();
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    cfg.target_sum = meta.value("target_sum", 1e4);
    auto vocab =
        expr::GeneVocabulary::from_genes(meta.at("genes").get<std::vector<std::string>>());
    Classifier clf(std::move(vocab), meta.at("classes").get<std::vector<std::string>>(), cfg);
    num::ParamStore loaded = num::load_params(path);
    for (auto& [name, entry] : clf.store_.entries) {
        if (!loaded.has(name)) throw ValidationError("checkpoint missing parameter: " + name);
        const Tensor& v = loaded.value(name);
        if (!v.same_shape(entry.value))
            throw ValidationError("checkpoint shape mismatch for parameter: " + name);
        entry.value = v;
    }
    return clf;
}

Classifier train_classifier(const expr::Dataset& data, const ClassifierConfig& cfg,
                            ClassifierTrainResult* result) {
    data.validate();
    std::vector<std::size_t> train_idx, valid_idx;
    if (data.split.empty()) {
        train_idx.resize(data.matrix.n_cells);
        std::iota(train_idx.begin(), train_idx.end(), 0);
    } else {
        train_idx = data.cells_in_split(expr::Split::kTrain);
        valid_idx = data.cells_in_split(expr::Split::kValid);
    }
    if (train_idx.empty()) throw ValidationError("train_classifier: empty training split");

    std::set<std::string> label_set;
    for (std::size_t i : train_idx) label_set.insert(data.annotations.labels[i]);
    if (label_set.size() < 2)
        throw ValidationError("train_classifier: need at least 2 classes, got " +
                              std::to_string(label_set.size()));
    std::vector<std::string> classes(label_set.begin(), label_set.end());
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = i;

    Classifier clf(data.matrix.vocab, classes, cfg);
    std::size_t gn = data.matrix.n_genes;
    std::vector<double> norm = expr::normalize_log1p(data.matrix, cfg.target_sum);

    ClassifierTrainResult local;
    ClassifierTrainResult& res = result ? *result : local;
    res = ClassifierTrainResult{};

    num::Adam opt(cfg.lr);
    num::Rng rng = num::Rng(cfg.seed).derive(2);
    double best_acc = -1.0;
    num::ParamStore best_params = clf.params();
    bool have_best = false;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t end = std::min(order.size(), start + cfg.batch);
            std::size_t b = end - start;
            Tensor x = Tensor::zeros({b, gn});
            std::vector<std::size_t> targets(b);
            for (std::size_t r = 0; r < b; ++r) {
                std::size_t i = order[start + r];
                std::copy(norm.begin() + static_cast<std::ptrdiff_t>(i * gn),
                          norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * gn),
                          x.data.begin() + static_cast<std::ptrdiff_t>(r * gn));
                targets[r] = class_index.at(data.annotations.labels[i]);
            }
            double loss = clf.loss_and_grads(x, targets);
            if (!std::isfinite(loss))
                throw NumericError("train_classifier: loss diverged at epoch " +
                                   std::to_string(epoch));
            opt.step(clf.params());
            epoch_loss += loss * static_cast<double>(b);
        }
        res.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

        if (!valid_idx.empty()) {
            std::size_t correct = 0;
            for (std::size_t i : valid_idx) {
                std::vector<double> row(norm.begin() + static_cast<std::ptrdiff_t>(i * gn),
                                        norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * gn));
                auto it = class_index.find(data.annotations.labels[i]);
                if (it == class_index.end()) continue;
                if (clf.predict(row).first == data.annotations.labels[i]) ++correct;
            }
            double acc = static_cast<double>(correct) / static_cast<double>(valid_idx.size());
            res.valid_accuracy.push_back(acc);
            if (acc > best_acc) {
                best_acc = acc;
                best_params = clf.params();
                res.best_epoch = epoch;
                have_best = true;
            }
        }
    }
    if (have_best) clf.params() = best_params;
    return clf;
}

}  // namespace cellforge::clf
