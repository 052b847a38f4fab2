#pragma once

#include <string>
#include <vector>

#include "ssldetect/tensor.hpp"

namespace ssldetect {

// Ordered registry of named model tensors. Names form a stable namespace
// that is a function of the architecture alone (never of the seed), so
// checkpoints written by one run load into any model built from the same
// config. Trainable entries take gradients; buffers (batch-norm running
// statistics) are saved and restored but never stepped by the optimizer.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable;
    };

    Tensor add_param(const std::string& name, std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        push(name, t, true);
        return t;
    }

    Tensor add_buffer(const std::string& name, std::vector<int> shape, float fill) {
        Tensor t = Tensor::full(std::move(shape), fill);
        push(name, t, false);
        return t;
    }

    const std::vector<Entry>& entries() const { return entries_; }

    Tensor find(const std::string& name) const {
        for (const auto& e : entries_) {
            if (e.name == name) return e.tensor;
        }
        return Tensor();
    }

    bool contains(const std::string& name) const { return find(name).defined(); }

    // Trainable parameter element count.
    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& e : entries_) {
            if (e.trainable) n += e.tensor.numel();
        }
        return n;
    }

    void drop_grads() {
        for (auto& e : entries_) e.tensor.drop_grad();
    }

private:
    void push(const std::string& name, Tensor t, bool trainable) {
        check(!contains(name), "duplicate parameter name: ", name);
        entries_.push_back({name, std::move(t), trainable});
    }

    std::vector<Entry> entries_;
};

} // namespace ssldetect
