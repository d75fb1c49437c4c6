#pragma once

#include <map>
#include <string>
#include <vector>

namespace cellforge::eval {

/// Points in a shared embedding space with per-point labels.
struct Embedding {
    std::size_t n_points = 0;
    std::size_t dim = 0;
    std::vector<double> coords;  // row-major n_points x dim
    std::vector<std::string> labels;

    void validate() const;
};

/// Median over points of the mean Euclidean distance to the `neighbors`
/// nearest points (self excluded; even count -> mean of the central pair).
double median_bandwidth(const Embedding& real, std::size_t neighbors = 25);

/// Biased all-pairs MMD estimator with the summed three-Gaussian kernel,
/// gamma_i = 1 / (2^(i-2) omega^2). Requires |X| == |Y| and omega > 0.
double mmd(const Embedding& x, const Embedding& y, double omega);

/// Mean over points of the fraction of its K nearest neighbors (within the
/// same embedding, self excluded, ties by ascending index) sharing its label.
double sknn(const Embedding& e, std::size_t k);

double delta_sknn(const Embedding& real, const Embedding& gen, std::size_t k);

/// Accuracy of a K-NN classifier: each generated point takes the majority
/// label of its K nearest real points (majority ties broken by smaller
/// summed distance, then ascending label name).
double pknn(const Embedding& real, const Embedding& gen, std::size_t k);

inline const std::vector<std::size_t> kDefaultKSweep = {5, 10, 25, 50};

/// Prediction marked unanswered by this literal label.
inline const std::string kUnanswered = "unanswered";

struct ClassificationMetrics {
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    double true_accuracy = 0.0;  // unanswered counted as incorrect
    std::size_t unanswered = 0;
    std::vector<std::string> classes;          // sorted union over truth and answered preds
    std::vector<std::vector<std::size_t>> confusion;  // truth x pred, answered pairs only
};

/// Weighted/macro F1 over answered pairs, true accuracy over all pairs.
ClassificationMetrics classification_metrics(const std::vector<std::string>& pred,
                                             const std::vector<std::string>& truth);

}  // namespace cellforge::eval
