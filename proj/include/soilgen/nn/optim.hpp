#pragma once

#include "soilgen/nn/params.hpp"

namespace soilgen::nn {

/// Adam with bias correction. step() consumes the accumulated gradients and
/// bumps the store's step counter; callers zero_grad() before the next pass.
class Adam {
public:
    explicit Adam(ParameterStore& ps, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : ps_(ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    ParameterStore& ps_;
    double lr_, beta1_, beta2_, eps_;
};

}  // namespace soilgen::nn
