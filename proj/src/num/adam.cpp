#include "cellforge/num/adam.hpp"

#include <cmath>

#include "cellforge/util/errors.hpp"

namespace cellforge::num {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0 || eps <= 0.0) throw ValidationError("Adam: lr and eps must be positive");
}

void Adam::step(ParamStore& store) {
    // Validate before touching anything so a throw leaves params unchanged.
    for (const auto& [name, entry] : store.entries)
        if (!entry.grad.all_finite())
            throw NumericError("Adam: non-finite gradient for parameter " + name);
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, entry] : store.entries) {
        auto it = state_.find(name);
        if (it == state_.end()) {
            Moments mom;
            mom.m = Tensor::zeros(entry.value.shape);
            mom.v = Tensor::zeros(entry.value.shape);
            it = state_.emplace(name, std::move(mom)).first;
        }
        Moments& mom = it->second;
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            double g = entry.grad.data[i];
            mom.m.data[i] = beta1_ * mom.m.data[i] + (1.0 - beta1_) * g;
            mom.v.data[i] = beta2_ * mom.v.data[i] + (1.0 - beta2_) * g * g;
            double mhat = mom.m.data[i] / bc1;
            double vhat = mom.v.data[i] / bc2;
            entry.value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace cellforge::num
