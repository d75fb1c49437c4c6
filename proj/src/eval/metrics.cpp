#include "cellforge/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cellforge/kernels/kernels.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::eval {

void Embedding::validate() const {
    if (coords.size() != n_points * dim)
        throw ValidationError("Embedding: coordinate buffer size mismatch");
    if (labels.size() != n_points)
        throw ValidationError("Embedding: labels length does not match points");
    for (double v : coords)
        if (!std::isfinite(v)) throw ValidationError("Embedding: non-finite coordinate");
}

double median_bandwidth(const Embedding& real, std::size_t neighbors) {
    real.validate();
    if (real.n_points <= neighbors)
        throw ValidationError("median_bandwidth: need more points than neighbors");
    std::size_t n = real.n_points;
    std::vector<double> d2(n * n);
    kernels::pairwise_sqdist(real.coords.data(), n, real.coords.data(), n, real.dim, d2.data());
    std::vector<std::uint32_t> nn(n * neighbors);
    kernels::knn_indices(d2.data(), n, n, neighbors, /*skip_diag=*/true, nn.data());
    std::vector<double> avg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < neighbors; ++q)
            acc += std::sqrt(d2[i * n + nn[i * neighbors + q]]);
        avg[i] = acc / static_cast<double>(neighbors);
    }
    std::sort(avg.begin(), avg.end());
    if (n % 2 == 1) return avg[n / 2];
    return 0.5 * (avg[n / 2 - 1] + avg[n / 2]);
}

double mmd(const Embedding& x, const Embedding& y, double omega) {
    x.validate();
    y.validate();
    if (x.n_points == 0 || y.n_points == 0) throw ValidationError("mmd: empty sample set");
    if (x.n_points != y.n_points)
        throw ValidationError("mmd: the estimator requires equal sample sizes, got " +
                              std::to_string(x.n_points) + " vs " + std::to_string(y.n_points));
    if (x.dim != y.dim) throw ValidationError("mmd: embedding dimensions disagree");
    if (!(omega > 0.0))
        throw ValidationError("mmd: degenerate bandwidth (omega must be > 0)");
    double gamma[3];
    for (int i = 1; i <= 3; ++i)
        gamma[i - 1] = 1.0 / (std::pow(2.0, i - 2) * omega * omega);
    std::size_t m = x.n_points;
    std::vector<double> d2(m * m);
    kernels::pairwise_sqdist(x.coords.data(), m, x.coords.data(), m, x.dim, d2.data());
    double kxx = kernels::gauss3_mean(d2.data(), m, m, gamma);
    kernels::pairwise_sqdist(x.coords.data(), m, y.coords.data(), m, x.dim, d2.data());
    double kxy = kernels::gauss3_mean(d2.data(), m, m, gamma);
    kernels::pairwise_sqdist(y.coords.data(), m, y.coords.data(), m, y.dim, d2.data());
    double kyy = kernels::gauss3_mean(d2.data(), m, m, gamma);
    double sq = kxx - 2.0 * kxy + kyy;
    if (sq < 0.0) sq = 0.0;  // absorb float noise before the root
    return std::sqrt(sq);
}

double sknn(const Embedding& e, std::size_t k) {
    e.validate();
    if (k == 0) throw ValidationError("sknn: K must be > 0");
    if (k >= e.n_points)
        throw ValidationError("sknn: K (" + std::to_string(k) +
                              ") must be smaller than the point count (" +
                              std::to_string(e.n_points) + ")");
    std::size_t n = e.n_points;
    std::vector<double> d2(n * n);
    kernels::pairwise_sqdist(e.coords.data(), n, e.coords.data(), n, e.dim, d2.data());
    std::vector<std::uint32_t> nn(n * k);
    kernels::knn_indices(d2.data(), n, n, k, /*skip_diag=*/true, nn.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same = 0;
        for (std::size_t q = 0; q < k; ++q)
            if (e.labels[nn[i * k + q]] == e.labels[i]) ++same;
        acc += static_cast<double>(same) / static_cast<double>(k);
    }
    return acc / static_cast<double>(n);
}

double delta_sknn(const Embedding& real, const Embedding& gen, std::size_t k) {
    return std::abs(sknn(gen, k) - sknn(real, k));
}

double pknn(const Embedding& real, const Embedding& gen, std::size_t k) {
    real.validate();
    gen.validate();
    if (real.n_points == 0 || gen.n_points == 0) throw ValidationError("pknn: empty sample set");
    if (k == 0 || k > real.n_points)
        throw ValidationError("pknn: K must be in [1, n_real]");
    if (real.dim != gen.dim) throw ValidationError("pknn: embedding dimensions disagree");
    std::size_t n = gen.n_points, m = real.n_points;
    std::vector<double> d2(n * m);
    kernels::pairwise_sqdist(gen.coords.data(), n, real.coords.data(), m, gen.dim, d2.data());
    std::vector<std::uint32_t> nn(n * k);
    kernels::knn_indices(d2.data(), n, m, k, /*skip_diag=*/false, nn.data());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        // Majority label; ties by smaller summed distance, then label name.
        std::map<std::string, std::pair<std::size_t, double>> votes;
        for (std::size_t q = 0; q < k; ++q) {
            std::uint32_t j = nn[i * k + q];
            auto& [count, dist] = votes[real.labels[j]];
            ++count;
            dist += std::sqrt(d2[i * m + j]);
        }
        const std::string* winner = nullptr;
        std::size_t best_count = 0;
        double best_dist = 0.0;
        for (const auto& [label, cd] : votes) {
            bool better = cd.first > best_count ||
                          (cd.first == best_count && cd.second < best_dist);
            if (winner == nullptr || better) {
                winner = &label;
                best_count = cd.first;
                best_dist = cd.second;
            }
        }
        if (*winner == gen.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

ClassificationMetrics classification_metrics(const std::vector<std::string>& pred,
                                             const std::vector<std::string>& truth) {
    if (pred.size() != truth.size())
        throw ValidationError("classification_metrics: length mismatch");
    if (pred.empty()) throw ValidationError("classification_metrics: empty input");

    ClassificationMetrics out;
    std::size_t correct = 0;
    std::set<std::string> class_set;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        class_set.insert(truth[i]);
        if (pred[i] == kUnanswered) {
            ++out.unanswered;
            continue;
        }
        class_set.insert(pred[i]);
        if (pred[i] == truth[i]) ++correct;
    }
    out.true_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    out.classes.assign(class_set.begin(), class_set.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < out.classes.size(); ++i) index[out.classes[i]] = i;

    std::size_t c = out.classes.size();
    out.confusion.assign(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == kUnanswered) continue;
        ++out.confusion[index[truth[i]]][index[pred[i]]];
    }

    double macro = 0.0, weighted = 0.0;
    std::size_t support_total = 0, active = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        std::size_t tp = out.confusion[ci][ci];
        std::size_t truth_count = 0, pred_count = 0;
        for (std::size_t cj = 0; cj < c; ++cj) {
            truth_count += out.confusion[ci][cj];
            pred_count += out.confusion[cj][ci];
        }
        if (truth_count == 0 && pred_count == 0) continue;  // absent class: zero weight
        ++active;
        double precision = pred_count ? static_cast<double>(tp) / pred_count : 0.0;
        double recall = truth_count ? static_cast<double>(tp) / truth_count : 0.0;
        double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                             : 0.0;
        macro += f1;
        weighted += f1 * static_cast<double>(truth_count);
        support_total += truth_count;
    }
    out.macro_f1 = active ? macro / static_cast<double>(active) : 0.0;
    out.weighted_f1 = support_total ? weighted / static_cast<double>(support_total) : 0.0;
    return out;
}

}  // namespace cellforge::eval
