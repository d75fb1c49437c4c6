#include "cellforge/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cellforge/util/errors.hpp"

namespace cellforge::kernels {

bool openmp_enabled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

// Below this many rows the parallel dispatch falls through to the serial
// loop; results are identical either way, this is purely overhead control.
constexpr std::size_t kMinParallelRows = 16;

inline void gemm_row(const double* a, const double* b, double* c,
                     std::size_t i, std::size_t k, std::size_t n) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        double aip = a[i * k + p];
        if (aip == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
}

inline void gemm_nt_row(const double* a, const double* b, double* c,
                        std::size_t i, std::size_t k, std::size_t n) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
        ci[j] = acc;
    }
}

inline void gemm_tn_col(const double* a, const double* b, double* c,
                        std::size_t i, std::size_t k, std::size_t m, std::size_t n) {
    // computes row i of C[m,n] where C = A^T B, A is k x m
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        double v = a[p * m + i];
        if (v == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += v * bp[j];
    }
}

inline void sqdist_row(const double* a, const double* b, std::size_t i,
                       std::size_t m, std::size_t d, double* out) {
    const double* ai = a + i * d;
    double* oi = out + i * m;
    for (std::size_t j = 0; j < m; ++j) {
        const double* bj = b + j * d;
        double acc = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
            double diff = ai[p] - bj[p];
            acc += diff * diff;
        }
        oi[j] = acc;
    }
}

inline void knn_row(const double* dist, std::size_t i, std::size_t m,
                    std::size_t k, bool skip_diag, std::uint32_t* out) {
    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(m);
    const double* di = dist + i * m;
    for (std::size_t j = 0; j < m; ++j) {
        if (skip_diag && j == i) continue;
        cand.emplace_back(di[j], static_cast<std::uint32_t>(j));
    }
    // (distance, index) is a total order, so the result is unique.
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                      cand.end());
    for (std::size_t q = 0; q < k; ++q) out[i * k + q] = cand[q].second;
}

inline double gauss3_row(const double* d2, std::size_t i, std::size_t m,
                         const double gamma[3]) {
    const double* row = d2 + i * m;
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double d = row[j];
        acc += std::exp(-gamma[0] * d) + std::exp(-gamma[1] * d) + std::exp(-gamma[2] * d);
    }
    return acc;
}

inline GroupStats group_stats_col(const double* x, std::size_t rows, std::size_t cols,
                                  const std::uint8_t* in_a, std::size_t j) {
    GroupStats s;
    double sum_a = 0.0, sum_b = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        double v = x[i * cols + j];
        if (in_a[i]) {
            sum_a += v;
            ++s.n_a;
        } else {
            sum_b += v;
            ++s.n_b;
        }
    }
    s.mean_a = s.n_a ? sum_a / static_cast<double>(s.n_a) : 0.0;
    s.mean_b = s.n_b ? sum_b / static_cast<double>(s.n_b) : 0.0;
    double sq_a = 0.0, sq_b = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        double v = x[i * cols + j];
        if (in_a[i]) {
            double d = v - s.mean_a;
            sq_a += d * d;
        } else {
            double d = v - s.mean_b;
            sq_b += d * d;
        }
    }
    s.var_a = s.n_a > 1 ? sq_a / static_cast<double>(s.n_a - 1) : 0.0;
    s.var_b = s.n_b > 1 ? sq_b / static_cast<double>(s.n_b - 1) : 0.0;
    return s;
}

inline void normalize_row(const double* x, std::size_t i, std::size_t cols,
                          double row_total, double target_sum, double* out) {
    double scale = target_sum / row_total;
    const double* xi = x + i * cols;
    double* oi = out + i * cols;
    for (std::size_t j = 0; j < cols; ++j) oi[j] = std::log1p(xi[j] * scale);
}

}  // namespace

namespace serial {

void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) gemm_row(a, b, c, i, k, n);
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, k, n);
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) gemm_tn_col(a, b, c, i, k, m, n);
}

void pairwise_sqdist(const double* a, std::size_t n, const double* b,
                     std::size_t m, std::size_t d, double* out) {
    for (std::size_t i = 0; i < n; ++i) sqdist_row(a, b, i, m, d, out);
}

void knn_indices(const double* dist, std::size_t n, std::size_t m,
                 std::size_t k, bool skip_diag, std::uint32_t* out) {
    std::size_t avail = skip_diag ? m - 1 : m;
    if (k > avail) throw ValidationError("knn_indices: k exceeds candidate count");
    for (std::size_t i = 0; i < n; ++i) knn_row(dist, i, m, k, skip_diag, out);
}

double gauss3_mean(const double* d2, std::size_t n, std::size_t m,
                   const double gamma[3]) {
    // Row partials accumulated in index order; the parallel variant reuses
    // the same two-level accumulation so the bits match.
    std::vector<double> partial(n);
    for (std::size_t i = 0; i < n; ++i) partial[i] = gauss3_row(d2, i, m, gamma);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += partial[i];
    return total / (static_cast<double>(n) * static_cast<double>(m));
}

void column_group_stats(const double* x, std::size_t rows, std::size_t cols,
                        const std::uint8_t* in_a, GroupStats* out) {
    for (std::size_t j = 0; j < cols; ++j) out[j] = group_stats_col(x, rows, cols, in_a, j);
}

void rows_normalize_log1p(const double* x, std::size_t rows, std::size_t cols,
                          const double* row_totals, double target_sum, double* out) {
    for (std::size_t i = 0; i < rows; ++i)
        normalize_row(x, i, cols, row_totals[i], target_sum, out);
}

}  // namespace serial

void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
            gemm_row(a, b, c, static_cast<std::size_t>(i), k, n);
        return;
    }
#endif
    serial::gemm(a, b, c, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
            gemm_nt_row(a, b, c, static_cast<std::size_t>(i), k, n);
        return;
    }
#endif
    serial::gemm_nt(a, b, c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
            gemm_tn_col(a, b, c, static_cast<std::size_t>(i), k, m, n);
        return;
    }
#endif
    serial::gemm_tn(a, b, c, m, k, n);
}

void pairwise_sqdist(const double* a, std::size_t n, const double* b,
                     std::size_t m, std::size_t d, double* out) {
#ifdef _OPENMP
    if (n >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
            sqdist_row(a, b, static_cast<std::size_t>(i), m, d, out);
        return;
    }
#endif
    serial::pairwise_sqdist(a, n, b, m, d, out);
}

void knn_indices(const double* dist, std::size_t n, std::size_t m,
                 std::size_t k, bool skip_diag, std::uint32_t* out) {
    std::size_t avail = skip_diag ? m - 1 : m;
    if (k > avail) throw ValidationError("knn_indices: k exceeds candidate count");
#ifdef _OPENMP
    if (n >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
            knn_row(dist, static_cast<std::size_t>(i), m, k, skip_diag, out);
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) knn_row(dist, i, m, k, skip_diag, out);
}

double gauss3_mean(const double* d2, std::size_t n, std::size_t m,
                   const double gamma[3]) {
    std::vector<double> partial(n);
#ifdef _OPENMP
    if (n >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
            partial[static_cast<std::size_t>(i)] =
                gauss3_row(d2, static_cast<std::size_t>(i), m, gamma);
    } else {
        for (std::size_t i = 0; i < n; ++i) partial[i] = gauss3_row(d2, i, m, gamma);
    }
#else
    for (std::size_t i = 0; i < n; ++i) partial[i] = gauss3_row(d2, i, m, gamma);
#endif
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += partial[i];
    return total / (static_cast<double>(n) * static_cast<double>(m));
}

void column_group_stats(const double* x, std::size_t rows, std::size_t cols,
                        const std::uint8_t* in_a, GroupStats* out) {
#ifdef _OPENMP
    if (cols >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j)
            out[j] = group_stats_col(x, rows, cols, in_a, static_cast<std::size_t>(j));
        return;
    }
#endif
    serial::column_group_stats(x, rows, cols, in_a, out);
}

void rows_normalize_log1p(const double* x, std::size_t rows, std::size_t cols,
                          const double* row_totals, double target_sum, double* out) {
#ifdef _OPENMP
    if (rows >= kMinParallelRows) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
            normalize_row(x, static_cast<std::size_t>(i), cols, row_totals[i], target_sum, out);
        return;
    }
#endif
    serial::rows_normalize_log1p(x, rows, cols, row_totals, target_sum, out);
}

}  // namespace cellforge::kernels
