#pragma once

#include <cstddef>
#include <vector>

namespace cellforge::eval {

/// Principal components of the sample covariance, computed with a
/// deterministic cyclic Jacobi eigensolver. Components are orthonormal rows
/// ordered by descending eigenvalue; each is sign-fixed so its
/// largest-magnitude loading is positive.
struct PcaModel {
    std::size_t n_features = 0;
    std::size_t k = 0;
    std::vector<double> components;        // k x n_features, row-major
    std::vector<double> means;             // per-feature
    std::vector<double> explained_variance;  // eigenvalues, non-increasing
    double total_variance = 0.0;

    /// Model truncated to the leading k' components.
    PcaModel truncated(std::size_t k_prime) const;
};

PcaModel pca_fit(const std::vector<double>& x, std::size_t n_rows, std::size_t n_cols,
                 std::size_t k);

/// (x - means) * components^T; returns n_rows x k row-major.
std::vector<double> pca_transform(const PcaModel& m, const std::vector<double>& x,
                                  std::size_t n_rows);

}  // namespace cellforge::eval
