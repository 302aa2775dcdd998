#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "soilgen/nn/autodiff.hpp"
#include "soilgen/nn/params.hpp"

namespace sgtest {

// Central-difference check of every parameter element against the recorded
// gradient. `loss` must rebuild the graph from the store on each call.
template <typename LossFn>
void check_param_grads(soilgen::nn::ParameterStore& ps, LossFn&& loss, double h = 1e-5,
                       double tol = 1e-4) {
    ps.zero_grad();
    {
        soilgen::nn::Var root = loss();
        root.backward();
    }
    for (auto& p : ps.all()) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            double keep = p->value[i];
            p->value[i] = keep + h;
            double lp = loss().value().item();
            p->value[i] = keep - h;
            double lm = loss().value().item();
            p->value[i] = keep;
            double fd = (lp - lm) / (2.0 * h);
            double g = p->grad[i];
            double denom = std::max({1e-2, std::abs(g), std::abs(fd)});
            double err = std::abs(g - fd) / denom;
            INFO("param ", p->name, "[", i, "]: analytic ", g, " vs fd ", fd);
            CHECK(err < tol);
        }
    }
}

// Same check on an evenly spaced subset of each parameter (first, last, and
// ~per_param evenly spaced elements), for models too large to sweep fully.
template <typename LossFn>
void check_param_grads_sampled(soilgen::nn::ParameterStore& ps, LossFn&& loss,
                               int64_t per_param = 6, double h = 1e-5, double tol = 1e-4) {
    ps.zero_grad();
    {
        soilgen::nn::Var root = loss();
        root.backward();
    }
    for (auto& p : ps.all()) {
        const int64_t n = p->value.numel();
        const int64_t step = std::max<int64_t>(1, n / per_param);
        for (int64_t i = 0; i < n; i += step) {
            const int64_t j = (i + step > n) ? n - 1 : i;  // always hit the tail
            double keep = p->value[j];
            p->value[j] = keep + h;
            double lp = loss().value().item();
            p->value[j] = keep - h;
            double lm = loss().value().item();
            p->value[j] = keep;
            double fd = (lp - lm) / (2.0 * h);
            double g = p->grad[j];
            double denom = std::max({1e-2, std::abs(g), std::abs(fd)});
            double err = std::abs(g - fd) / denom;
            INFO("param ", p->name, "[", j, "]: analytic ", g, " vs fd ", fd);
            CHECK(err < tol);
        }
    }
}

}  // namespace sgtest
