#include "soilgen/nn/params.hpp"

#include <cmath>

namespace soilgen::nn {

Parameter& ParameterStore::create(const std::string& name, std::vector<int64_t> shape) {
    return create(name, Tensor::zeros(std::move(shape)));
}

Parameter& ParameterStore::create(const std::string& name, Tensor init) {
    SG_CHECK(by_name_.find(name) == by_name_.end(), value_error,
             "duplicate parameter name: ", name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    Parameter* p = params_.back().get();
    by_name_[name] = p;
    return *p;
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
    Parameter* p = find(name);
    SG_CHECK(p != nullptr, value_error, "unknown parameter: ", name);
    return *p;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
}

int64_t ParameterStore::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

double ParameterStore::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
        for (int64_t i = 0; i < p->grad.numel(); ++i) s += p->grad[i] * p->grad[i];
    return std::sqrt(s);
}

}  // namespace soilgen::nn
