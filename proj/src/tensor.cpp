#include "ssldetect/tensor.hpp"

#include <cmath>

namespace ssldetect {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        check(d > 0, "tensor extent must be positive, got ", d);
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    int64_t n = shape_numel(shape);
    d->shape = std::move(shape);
    d->values.assign(static_cast<size_t>(n), 0.0f);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.values()) v = value;
    return t;
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<float> values) {
    int64_t n = shape_numel(shape);
    check(n == static_cast<int64_t>(values.size()), "value count ", values.size(),
          " does not match shape ", shape_str(shape));
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(float value) { return from_values({1}, {value}); }

Tensor Tensor::clone() const {
    auto d = std::make_shared<TensorData>();
    d->shape = d_->shape;
    d->values = d_->values;
    d->requires_grad = d_->requires_grad;
    return Tensor(std::move(d));
}

bool Tensor::all_finite() const {
    for (float v : d_->values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace ssldetect
