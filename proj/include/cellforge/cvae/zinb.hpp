#pragma once

#include <cstdint>
#include <vector>

#include "cellforge/num/rng.hpp"

namespace cellforge::cvae {

/// Per-gene decoder output: mean rate mu_i, inverse dispersion theta_i > 0,
/// zero-inflation probability pi_i in (0,1).
struct ZinbParams {
    std::vector<double> mu;
    std::vector<double> theta;
    std::vector<double> pi;

    std::size_t size() const { return mu.size(); }
    void validate() const;
};

/// log ZINB pmf of a single gene. Stable in log space for mu, theta in
/// [1e-8, 1e8] and y up to 1e6. Accepts the pi is 0 / pi is 1 boundary
/// limits.
double zinb_log_pmf(double y, double mu, double theta, double pi);

/// Plain negative binomial log pmf (mean / inverse-dispersion form).
double nb_log_pmf(double y, double mu, double theta);

/// Sum of per-gene log pmfs over a dense count vector. Counts must be
/// non-negative integers.
double zinb_log_prob(const ZinbParams& p, const std::vector<double>& counts);

/// Analytic P(y = 0) = pi + (1-pi) * (theta/(theta+mu))^theta.
double zinb_zero_prob(double mu, double theta, double pi);

// Deterministic samplers driven by an Rng stream.

/// Gamma(shape, rate) via Marsaglia-Tsang (with the shape<1 boost).
double sample_gamma(num::Rng& rng, double shape, double rate);

/// Poisson(lambda); Knuth multiplication for small lambda, PTRS transformed
/// rejection for large.
std::uint64_t sample_poisson(num::Rng& rng, double lambda);

/// One draw of the ZINB generative chain: w ~ Gamma(shape=theta,
/// rate=theta/rho), v ~ Poisson(scale*w), b ~ Bernoulli(pi), result
/// v*(1-b). The Poisson marginal over w is NB(mean=scale*rho,
/// inverse dispersion=theta).
std::uint64_t sample_zinb_chain(num::Rng& rng, double rho, double theta, double pi,
                                double scale);

}  // namespace cellforge::cvae
