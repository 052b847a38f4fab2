#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ssldetect/common.hpp"

namespace ssldetect {

struct TensorData {
    std::vector<int> shape;
    std::vector<float> values;
    std::vector<float> grad; // empty until backward touches this tensor
    bool requires_grad = false;
};

// Dense row-major float32 tensor. A Tensor is a cheap handle; copies share
// storage. Values are written once by the producing operation and read-only
// afterwards, so completed tensors may be read from any thread.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from_values(std::vector<int> shape, std::vector<float> values);
    static Tensor scalar(float value);

    bool defined() const { return static_cast<bool>(d_); }
    const std::vector<int>& shape() const { return d_->shape; }
    int ndim() const { return static_cast<int>(d_->shape.size()); }
    int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

    float* data() { return d_->values.data(); }
    const float* data() const { return d_->values.data(); }
    std::vector<float>& values() { return d_->values; }
    const std::vector<float>& values() const { return d_->values; }

    bool requires_grad() const { return d_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        d_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    // Allocates a zero-filled gradient buffer on first use.
    void ensure_grad() {
        if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0f);
    }
    float* grad_data() { return d_->grad.data(); }
    const float* grad_data() const { return d_->grad.data(); }
    std::vector<float>& grad() { return d_->grad; }
    const std::vector<float>& grad() const { return d_->grad; }
    void drop_grad() { d_->grad.clear(); }

    float item() const {
        check(numel() == 1, "item() called on tensor with ", numel(), " elements");
        return d_->values[0];
    }

    // Deep copy of values (gradient state is not copied).
    Tensor clone() const;

    const std::shared_ptr<TensorData>& node() const { return d_; }

    bool all_finite() const;

private:
    std::shared_ptr<TensorData> d_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

} // namespace ssldetect
