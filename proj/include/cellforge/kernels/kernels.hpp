#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cellforge::kernels {

// Data-parallel inner loops shared by the numeric stack. Every kernel has a
// serial reference implementation (namespace serial) and an OpenMP variant
// dispatched by the top-level entry points. Parallel variants split work by
// row/column and keep every floating-point reduction in the same order as the
// reference, so results are bitwise identical regardless of thread count.
// tests/test_kernels.cpp asserts that equality; bench/kernel_bench.cpp times
// the two paths against each other.

/// True when compiled with OpenMP support.
bool openmp_enabled();

/// Worker threads the parallel variants will use (1 without OpenMP).
int thread_count();

struct GroupStats {
    double mean_a = 0.0, var_a = 0.0;  // var is the unbiased sample variance
    double mean_b = 0.0, var_b = 0.0;
    std::size_t n_a = 0, n_b = 0;
};

namespace serial {

/// C[m,n] = A[m,k] * B[k,n]
void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n);

/// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);

/// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);

/// out[i,j] = ||A_i - B_j||^2 for A[n,d], B[m,d]
void pairwise_sqdist(const double* a, std::size_t n,
                     const double* b, std::size_t m,
                     std::size_t d, double* out);

/// Per row of dist[n,m]: indices of the k smallest entries, ordered by
/// (distance, index) ascending. skip_diag excludes j == i (self neighbour).
void knn_indices(const double* dist, std::size_t n, std::size_t m,
                 std::size_t k, bool skip_diag, std::uint32_t* out);

/// Mean over all n*m pairs of sum_i exp(-gamma_i * d2), the three-Gaussian
/// kernel. d2 is a precomputed squared-distance matrix.
double gauss3_mean(const double* d2, std::size_t n, std::size_t m,
                   const double gamma[3]);

/// Per-column mean and unbiased sample variance split by a row mask
/// (in_a[i] != 0 -> group a, else group b).
void column_group_stats(const double* x, std::size_t rows, std::size_t cols,
                        const std::uint8_t* in_a, GroupStats* out);

/// Row-normalize to target_sum then log1p, writing dense out[rows,cols].
/// row_totals must hold the per-row sums (all > 0).
void rows_normalize_log1p(const double* x, std::size_t rows, std::size_t cols,
                          const double* row_totals, double target_sum,
                          double* out);

}  // namespace serial

// Dispatched entry points: OpenMP when available, identical results either way.
void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);
void pairwise_sqdist(const double* a, std::size_t n,
                     const double* b, std::size_t m,
                     std::size_t d, double* out);
void knn_indices(const double* dist, std::size_t n, std::size_t m,
                 std::size_t k, bool skip_diag, std::uint32_t* out);
double gauss3_mean(const double* d2, std::size_t n, std::size_t m,
                   const double gamma[3]);
void column_group_stats(const double* x, std::size_t rows, std::size_t cols,
                        const std::uint8_t* in_a, GroupStats* out);
void rows_normalize_log1p(const double* x, std::size_t rows, std::size_t cols,
                          const double* row_totals, double target_sum,
                          double* out);

}  // namespace cellforge::kernels
