#pragma once

// Brute-force reference implementations used as independent oracles. These
// deliberately avoid the library's kernel/metric code paths.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace cellforge::test {

inline std::vector<double> brute_pairwise_dist(const std::vector<double>& a, std::size_t n,
                                               const std::vector<double>& b, std::size_t m,
                                               std::size_t d) {
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                double diff = a[i * d + p] - b[j * d + p];
                acc += diff * diff;
            }
            out[i * m + j] = std::sqrt(acc);
        }
    return out;
}

inline double brute_sknn(const std::vector<double>& coords, std::size_t n, std::size_t dim,
                         const std::vector<std::string>& labels, std::size_t k) {
    std::vector<double> dist = brute_pairwise_dist(coords, n, coords, n, dim);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) cand.emplace_back(dist[i * n + j], j);
        std::sort(cand.begin(), cand.end());
        std::size_t same = 0;
        for (std::size_t q = 0; q < k; ++q)
            if (labels[cand[q].second] == labels[i]) ++same;
        acc += static_cast<double>(same) / static_cast<double>(k);
    }
    return acc / static_cast<double>(n);
}

inline double brute_pknn(const std::vector<double>& real, std::size_t nr,
                         const std::vector<std::string>& real_labels,
                         const std::vector<double>& gen, std::size_t ng,
                         const std::vector<std::string>& gen_labels, std::size_t dim,
                         std::size_t k) {
    std::vector<double> dist = brute_pairwise_dist(gen, ng, real, nr, dim);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ng; ++i) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t j = 0; j < nr; ++j) cand.emplace_back(dist[i * nr + j], j);
        std::sort(cand.begin(), cand.end());
        std::map<std::string, std::pair<std::size_t, double>> votes;
        for (std::size_t q = 0; q < k; ++q) {
            auto& v = votes[real_labels[cand[q].second]];
            v.first += 1;
            v.second += cand[q].first;
        }
        std::string best;
        std::size_t bc = 0;
        double bd = 0.0;
        for (const auto& [label, cd] : votes) {
            if (best.empty() || cd.first > bc || (cd.first == bc && cd.second < bd)) {
                best = label;
                bc = cd.first;
                bd = cd.second;
            }
        }
        if (best == gen_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ng);
}

inline double brute_median_bandwidth(const std::vector<double>& coords, std::size_t n,
                                     std::size_t dim, std::size_t neighbors) {
    std::vector<double> dist = brute_pairwise_dist(coords, n, coords, n, dim);
    std::vector<double> avg(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back(dist[i * n + j]);
        std::sort(row.begin(), row.end());
        double acc = 0.0;
        for (std::size_t q = 0; q < neighbors; ++q) acc += row[q];
        avg[i] = acc / static_cast<double>(neighbors);
    }
    std::sort(avg.begin(), avg.end());
    return n % 2 ? avg[n / 2] : 0.5 * (avg[n / 2 - 1] + avg[n / 2]);
}

inline double brute_mmd(const std::vector<double>& x, const std::vector<double>& y,
                        std::size_t m, std::size_t dim, double omega) {
    auto kern = [&](const double* a, const double* b) {
        double d2 = 0.0;
        for (std::size_t p = 0; p < dim; ++p) d2 += (a[p] - b[p]) * (a[p] - b[p]);
        double s = 0.0;
        for (int i = 1; i <= 3; ++i) s += std::exp(-d2 / (std::pow(2.0, i - 2) * omega * omega));
        return s;
    };
    double kxx = 0.0, kxy = 0.0, kyy = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            kxx += kern(&x[i * dim], &x[j * dim]);
            kxy += kern(&x[i * dim], &y[j * dim]);
            kyy += kern(&y[i * dim], &y[j * dim]);
        }
    double mm = static_cast<double>(m) * static_cast<double>(m);
    double sq = kxx / mm - 2.0 * kxy / mm + kyy / mm;
    return std::sqrt(std::max(0.0, sq));
}

/// Central finite difference of f at x with step h.
template <typename F>
double central_diff(F f, double& x, double h = 1e-5) {
    double orig = x;
    x = orig + h;
    double fp = f();
    x = orig - h;
    double fm = f();
    x = orig;
    return (fp - fm) / (2.0 * h);
}

/// Relative gradient error with an absolute floor for near-zero pairs.
inline double grad_rel_err(double analytic, double numeric) {
    double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace cellforge::test
