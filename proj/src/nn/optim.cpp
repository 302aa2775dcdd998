#include "soilgen/nn/optim.hpp"

#include <cmath>

namespace soilgen::nn {

void Adam::step() {
    int64_t t = ps_.step_count + 1;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    for (auto& p : ps_.all()) {
        Tensor& v = p->value;
        Tensor& g = p->grad;
        Tensor& m1 = p->m;
        Tensor& m2 = p->v;
        for (int64_t i = 0; i < v.numel(); ++i) {
            m1[i] = beta1_ * m1[i] + (1.0 - beta1_) * g[i];
            m2[i] = beta2_ * m2[i] + (1.0 - beta2_) * g[i] * g[i];
            double mh = m1[i] / bc1;
            double vh = m2[i] / bc2;
            v[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
    ps_.step_count = t;
}

}  // namespace soilgen::nn
