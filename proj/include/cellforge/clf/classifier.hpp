#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cellforge/expr/matrix.hpp"
#include "cellforge/num/mlp.hpp"

namespace cellforge::clf {

struct ClassifierConfig {
    std::vector<std::size_t> hidden = {64};
    double lr = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    double target_sum = 1e4;
};

/// MLP over log1p-normalized expression producing class logits.
class Classifier {
public:
    Classifier(expr::GeneVocabulary vocab, std::vector<std::string> classes,
               ClassifierConfig cfg);

    const std::vector<std::string>& classes() const { return classes_; }
    const expr::GeneVocabulary& vocab() const { return vocab_; }
    const ClassifierConfig& config() const { return cfg_; }
    num::ParamStore& params() { return store_; }
    const num::ParamStore& params() const { return store_; }
    const num::MlpSpec& spec() const { return spec_; }

    std::vector<double> logits(const std::vector<double>& s_norm) const;
    /// (argmax label, softmax probabilities).
    std::pair<std::string, std::vector<double>> predict(const std::vector<double>& s_norm) const;

    /// Mean cross-entropy over a batch, gradients into the store.
    double loss_and_grads(const num::Tensor& s_norm, const std::vector<std::size_t>& targets);

    /// Gradient of the target-class cross-entropy w.r.t. the input vector.
    std::vector<double> input_gradient(const std::vector<double>& s_norm,
                                       std::size_t target_class) const;

    void save(const std::string& path) const;
    static Classifier load(const std::string& path);

private:
    expr::GeneVocabulary vocab_;
    std::vector<std::string> classes_;
    ClassifierConfig cfg_;
    num::MlpSpec spec_;
    num::ParamStore store_;
};

struct ClassifierTrainResult {
    std::vector<double> train_loss;
    std::vector<double> valid_accuracy;
    std::size_t best_epoch = 0;
};

/// Cross-entropy training on the train split, checkpoint selected by
/// validation accuracy when a valid split exists. Needs >= 2 classes.
Classifier train_classifier(const expr::Dataset& data, const ClassifierConfig& cfg,
                            ClassifierTrainResult* result);

}  // namespace cellforge::clf
