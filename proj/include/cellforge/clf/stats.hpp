#pragma once

#include <vector>

namespace cellforge::clf {

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Welch's two-sample t-test: t = (mean_a - mean_b) / sqrt(s_a^2/n_a +
/// s_b^2/n_b) with Welch-Satterthwaite degrees of freedom and a two-sided
/// p-value from the Student-t survival function. Degenerate zero-variance
/// input gives t = 0, p = 1 at equal means and t = +/-inf, p = 0 otherwise.
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

/// From precomputed group moments (unbiased variances).
WelchResult welch_t_from_stats(double mean_a, double var_a, std::size_t n_a,
                               double mean_b, double var_b, std::size_t n_b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value for a Student-t statistic.
double student_t_two_sided_p(double t, double df);

}  // namespace cellforge::clf
