#include "cellforge/clf/stats.hpp"

#include <cmath>
#include <limits>

#include "cellforge/util/errors.hpp"

namespace cellforge::clf {

namespace {

// Continued-fraction expansion of the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw NumericError("incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

WelchResult welch_t_from_stats(double mean_a, double var_a, std::size_t n_a,
                               double mean_b, double var_b, std::size_t n_b) {
    if (n_a < 2 || n_b < 2) throw ValidationError("welch_t: both samples need >= 2 values");
    double sa = var_a / static_cast<double>(n_a);
    double sb = var_b / static_cast<double>(n_b);
    WelchResult r;
    if (sa + sb == 0.0) {
        // Zero pooled variance: equal means -> no evidence; unequal means ->
        // infinitely strong evidence by convention.
        if (mean_a == mean_b) {
            r.t = 0.0;
            r.df = static_cast<double>(n_a + n_b - 2);
            r.p = 1.0;
        } else {
            r.t = mean_a > mean_b ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
            r.df = static_cast<double>(n_a + n_b - 2);
            r.p = 0.0;
        }
        return r;
    }
    r.t = (mean_a - mean_b) / std::sqrt(sa + sb);
    double denom = sa * sa / static_cast<double>(n_a - 1) + sb * sb / static_cast<double>(n_b - 1);
    r.df = (sa + sb) * (sa + sb) / denom;
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("welch_t: both samples need >= 2 values");
    auto moments = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size() - 1);
        return std::pair<double, double>{mean, var};
    };
    auto [ma, va] = moments(a);
    auto [mb, vb] = moments(b);
    return welch_t_from_stats(ma, va, a.size(), mb, vb, b.size());
}

}  // namespace cellforge::clf
