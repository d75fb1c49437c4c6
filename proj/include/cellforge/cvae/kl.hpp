#pragma once

#include <vector>

namespace cellforge::cvae {

/// KL(N(mu1, diag(var1)) || N(mu2, diag(var2))), closed form:
/// 0.5 * [log(|S2|/|S1|) - d + tr(S2^-1 S1) + (mu2-mu1)^T S2^-1 (mu2-mu1)].
double kl_gaussian(const std::vector<double>& mu1, const std::vector<double>& var1,
                   const std::vector<double>& mu2, const std::vector<double>& var2);

/// KL between two log-normals equals the Gaussian KL of the underlying
/// log-space parameters (exact identity).
double kl_lognormal(double mu1, double var1, double mu2, double var2);

}  // namespace cellforge::cvae
