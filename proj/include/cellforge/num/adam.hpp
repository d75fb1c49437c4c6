#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cellforge/num/graph.hpp"

namespace cellforge::num {

/// Adam with bias correction. One state per parameter name; step() applies
/// the update from the gradients currently in the store.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(ParamStore& store);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::uint64_t steps_taken() const { return t_; }

private:
    struct Moments {
        Tensor m;
        Tensor v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace cellforge::num
