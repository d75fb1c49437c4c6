#include "cellforge/cvae/zinb.hpp"

#include <cmath>
#include <limits>

#include "cellforge/util/errors.hpp"

namespace cellforge::cvae {

namespace {

double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

void ZinbParams::validate() const {
    if (theta.size() != mu.size() || pi.size() != mu.size())
        throw ValidationError("ZinbParams: component lengths disagree");
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(mu[i] >= 0.0)) throw ValidationError("ZinbParams: mu must be >= 0");
        if (!(theta[i] > 0.0)) throw ValidationError("ZinbParams: theta must be > 0");
        if (!(pi[i] >= 0.0 && pi[i] <= 1.0))
            throw ValidationError("ZinbParams: pi must be in [0,1]");
    }
}

double nb_log_pmf(double y, double mu, double theta) {
    if (mu == 0.0) return y == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    double log_theta_mu = logaddexp(std::log(theta), std::log(mu));
    double r = std::lgamma(y + theta) - std::lgamma(theta) - std::lgamma(y + 1.0) +
               theta * (std::log(theta) - log_theta_mu);
    if (y > 0.0) r += y * (std::log(mu) - log_theta_mu);
    return r;
}

double zinb_log_pmf(double y, double mu, double theta, double pi) {
    if (y < 0.0 || std::floor(y) != y)
        throw ValidationError("zinb_log_pmf: counts must be non-negative integers");
    if (!(theta > 0.0)) throw ValidationError("zinb_log_pmf: theta must be positive");
    if (!(pi >= 0.0 && pi <= 1.0)) throw ValidationError("zinb_log_pmf: pi must be in [0,1]");
    double log_pi = pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity();
    double log_1mpi = pi < 1.0 ? std::log1p(-pi) : -std::numeric_limits<double>::infinity();
    if (y == 0.0) return logaddexp(log_pi, log_1mpi + nb_log_pmf(0.0, mu, theta));
    return log_1mpi + nb_log_pmf(y, mu, theta);
}

double zinb_log_prob(const ZinbParams& p, const std::vector<double>& counts) {
    p.validate();
    if (counts.size() != p.size())
        throw ValidationError("zinb_log_prob: count vector length does not match genes");
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        total += zinb_log_pmf(counts[i], p.mu[i], p.theta[i], p.pi[i]);
    return total;
}

double zinb_zero_prob(double mu, double theta, double pi) {
    return pi + (1.0 - pi) * std::exp(theta * (std::log(theta) - std::log(theta + mu)));
}

double sample_gamma(num::Rng& rng, double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
        throw ValidationError("sample_gamma: shape and rate must be positive");
    if (shape < 1.0) {
        // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        double u = rng.uniform();
        while (u == 0.0) u = rng.uniform();
        return sample_gamma(rng, shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x = rng.normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = rng.uniform();
        while (u == 0.0) u = rng.uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

namespace {

// Hormann's PTRS transformed-rejection sampler for lambda >= 10.
std::uint64_t poisson_ptrs(num::Rng& rng, double lambda) {
    double slam = std::sqrt(lambda);
    double loglam = std::log(lambda);
    double b = 0.931 + 2.53 * slam;
    double a = -0.059 + 0.02483 * b;
    double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    double vr = 0.9277 - 3.6224 / (b - 2.0);
    while (true) {
        double u = rng.uniform() - 0.5;
        double v = rng.uniform();
        double us = 0.5 - std::abs(u);
        double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            k * loglam - lambda - std::lgamma(k + 1.0))
            return static_cast<std::uint64_t>(k);
    }
}

std::uint64_t poisson_knuth(num::Rng& rng, double lambda) {
    double limit = std::exp(-lambda);
    double prod = 1.0;
    std::uint64_t k = 0;
    do {
        prod *= rng.uniform();
        if (prod <= limit) break;
        ++k;
    } while (true);
    return k;
}

}  // namespace

std::uint64_t sample_poisson(num::Rng& rng, double lambda) {
    if (lambda < 0.0) throw ValidationError("sample_poisson: lambda must be >= 0");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) return poisson_knuth(rng, lambda);
    return poisson_ptrs(rng, lambda);
}

std::uint64_t sample_zinb_chain(num::Rng& rng, double rho, double theta, double pi,
                                double scale) {
    double w = sample_gamma(rng, theta, theta / rho);
    std::uint64_t v = sample_poisson(rng, scale * w);
    bool zeroed = rng.uniform() < pi;
    return zeroed ? 0 : v;
}

}  // namespace cellforge::cvae
