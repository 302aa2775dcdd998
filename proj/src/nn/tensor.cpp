#include "soilgen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace soilgen::nn {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        SG_CHECK(d >= 0, shape_error, "negative dimension ", d);
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    SG_CHECK(shape_numel(shape_) == static_cast<int64_t>(data_.size()), shape_error,
             "shape ", shape_str(shape_), " does not match data length ", data_.size());
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

double Tensor::item() const {
    SG_CHECK(numel() == 1, shape_error, "item() requires a single-element tensor, got ",
             shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    SG_CHECK(shape_numel(shape) == numel(), shape_error, "cannot reshape ", shape_str(shape_),
             " to ", shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
    SG_CHECK(same_shape(other), shape_error, "add_: shape mismatch ", shape_str(shape_), " vs ",
             shape_str(other.shape_));
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale_(double s) {
    for (double& v : data_) v *= s;
}

void Tensor::clamp_(double lo, double hi) {
    for (double& v : data_) v = std::min(hi, std::max(lo, v));
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const {
    SG_CHECK(!data_.empty(), value_error, "min of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
    SG_CHECK(!data_.empty(), value_error, "max of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::mean() const {
    SG_CHECK(!data_.empty(), value_error, "mean of empty tensor");
    return sum() / static_cast<double>(data_.size());
}

}  // namespace soilgen::nn
