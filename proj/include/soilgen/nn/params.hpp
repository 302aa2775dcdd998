#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "soilgen/nn/tensor.hpp"

namespace soilgen::nn {

/// One named trainable tensor plus its gradient and optimizer moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // first moment
    Tensor v;  // second moment

    explicit Parameter(std::string n, Tensor val)
        : name(std::move(n)),
          value(std::move(val)),
          grad(Tensor::zeros(value.shape())),
          m(Tensor::zeros(value.shape())),
          v(Tensor::zeros(value.shape())) {}
};

/// Ordered registry of parameters. Creation order is stable, which makes
/// checkpoint layout and optimizer sweeps deterministic.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    Parameter& create(const std::string& name, std::vector<int64_t> shape);
    Parameter& create(const std::string& name, Tensor init);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& at(const std::string& name);

    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    size_t size() const { return params_.size(); }

    void zero_grad();
    int64_t parameter_count() const;
    double grad_norm() const;

    int64_t step_count = 0;  // optimizer steps taken; persisted in checkpoints

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

}  // namespace soilgen::nn
