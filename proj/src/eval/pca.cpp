#include "cellforge/eval/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellforge/kernels/kernels.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::eval {

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (in place).
/// Eigenvectors come out as columns of v.
void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigvals,
                  std::vector<double>& v) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (apq == 0.0) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vip = v[i * n + p], viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

}  // namespace

PcaModel pca_fit(const std::vector<double>& x, std::size_t n_rows, std::size_t n_cols,
                 std::size_t k) {
    if (x.size() != n_rows * n_cols) throw ValidationError("pca_fit: data size mismatch");
    if (k == 0) throw ValidationError("pca_fit: k must be > 0");
    if (k >= n_rows)
        throw ValidationError("pca_fit: k (" + std::to_string(k) +
                              ") must be smaller than the number of rows (" +
                              std::to_string(n_rows) + ")");
    if (k > n_cols) throw ValidationError("pca_fit: k exceeds feature count");

    PcaModel m;
    m.n_features = n_cols;
    m.k = k;
    m.means.assign(n_cols, 0.0);
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n_cols; ++j) m.means[j] += x[i * n_cols + j];
    for (double& v : m.means) v /= static_cast<double>(n_rows);

    std::vector<double> centered(x.size());
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n_cols; ++j)
            centered[i * n_cols + j] = x[i * n_cols + j] - m.means[j];

    std::vector<double> cov(n_cols * n_cols, 0.0);
    kernels::gemm_tn(centered.data(), centered.data(), cov.data(), n_cols, n_rows, n_cols);
    double inv = 1.0 / static_cast<double>(n_rows - 1);
    for (double& v : cov) v *= inv;
    for (std::size_t j = 0; j < n_cols; ++j) m.total_variance += cov[j * n_cols + j];

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, n_cols, eigvals, eigvecs);

    std::vector<std::size_t> order(n_cols);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (eigvals[a] != eigvals[b]) return eigvals[a] > eigvals[b];
        return a < b;
    });

    m.components.assign(k * n_cols, 0.0);
    m.explained_variance.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t src = order[c];
        m.explained_variance[c] = eigvals[src];
        double* row = m.components.data() + c * n_cols;
        for (std::size_t j = 0; j < n_cols; ++j) row[j] = eigvecs[j * n_cols + src];
        // Sign convention: largest-magnitude loading positive.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < n_cols; ++j)
            if (std::abs(row[j]) > std::abs(row[arg])) arg = j;
        if (row[arg] < 0.0)
            for (std::size_t j = 0; j < n_cols; ++j) row[j] = -row[j];
    }
    return m;
}

std::vector<double> pca_transform(const PcaModel& m, const std::vector<double>& x,
                                  std::size_t n_rows) {
    if (x.size() != n_rows * m.n_features)
        throw ValidationError("pca_transform: column count does not match the model");
    std::vector<double> centered(x.size());
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < m.n_features; ++j)
            centered[i * m.n_features + j] = x[i * m.n_features + j] - m.means[j];
    std::vector<double> out(n_rows * m.k, 0.0);
    kernels::gemm_nt(centered.data(), m.components.data(), out.data(), n_rows, m.n_features,
                     m.k);
    return out;
}

PcaModel PcaModel::truncated(std::size_t k_prime) const {
    if (k_prime > k) throw ValidationError("PcaModel::truncated: cannot grow k");
    PcaModel out = *this;
    out.k = k_prime;
    out.components.resize(k_prime * n_features);
    out.explained_variance.resize(k_prime);
    return out;
}

}  // namespace cellforge::eval
