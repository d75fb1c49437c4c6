#include "cellforge/cvae/kl.hpp"

#include <cmath>

#include "cellforge/util/errors.hpp"

namespace cellforge::cvae {

double kl_gaussian(const std::vector<double>& mu1, const std::vector<double>& var1,
                   const std::vector<double>& mu2, const std::vector<double>& var2) {
    std::size_t d = mu1.size();
    if (var1.size() != d || mu2.size() != d || var2.size() != d)
        throw ValidationError("kl_gaussian: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(var1[i] > 0.0) || !(var2[i] > 0.0))
            throw ValidationError("kl_gaussian: variances must be positive");
        double diff = mu2[i] - mu1[i];
        acc += std::log(var2[i] / var1[i]) - 1.0 + var1[i] / var2[i] + diff * diff / var2[i];
    }
    return 0.5 * acc;
}

double kl_lognormal(double mu1, double var1, double mu2, double var2) {
    return kl_gaussian({mu1}, {var1}, {mu2}, {var2});
}

}  // namespace cellforge::cvae
