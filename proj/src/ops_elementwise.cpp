#include <cmath>

#include "ssldetect/ops.hpp"

namespace ssldetect::ops {

namespace {

void ensure_grad(TensorData& d) {
    if (d.grad.empty()) d.grad.assign(d.values.size(), 0.0f);
}

bool tape_wants(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    check(a.shape() == b.shape(), op, " shape mismatch: ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
}

// Elementwise binary op; dfa/dfb give the local partials as functions of
// (a_i, b_i, y_i).
template <typename F, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA dfa, DB dfb) {
    check_same_shape(a, b, name);
    Tensor out = Tensor::zeros(a.shape());
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i]);
    if (tape_wants({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.node();
        auto bd = b.node();
        auto od = out.node();
        Tape::active()->record([ad, bd, od, dfa, dfb]() {
            if (od->grad.empty()) return;
            const float* g = od->grad.data();
            size_t n = od->values.size();
            if (ad->requires_grad) {
                ensure_grad(*ad);
                for (size_t i = 0; i < n; ++i) {
                    ad->grad[i] += g[i] * dfa(ad->values[i], bd->values[i], od->values[i]);
                }
            }
            if (bd->requires_grad) {
                ensure_grad(*bd);
                for (size_t i = 0; i < n; ++i) {
                    bd->grad[i] += g[i] * dfb(ad->values[i], bd->values[i], od->values[i]);
                }
            }
        });
    }
    return out;
}

template <typename F, typename D>
Tensor unary_op(const Tensor& a, F f, D df) {
    Tensor out = Tensor::zeros(a.shape());
    const float* ap = a.data();
    float* op = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) op[i] = f(ap[i]);
    if (tape_wants({&a})) {
        out.set_requires_grad(true);
        auto ad = a.node();
        auto od = out.node();
        Tape::active()->record([ad, od, df]() {
            if (od->grad.empty() || !ad->requires_grad) return;
            ensure_grad(*ad);
            const float* g = od->grad.data();
            for (size_t i = 0; i < od->values.size(); ++i) {
                ad->grad[i] += g[i] * df(ad->values[i], od->values[i]);
            }
        });
    }
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](float x, float y) { return x + y; },
        [](float, float, float) { return 1.0f; }, [](float, float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](float x, float y) { return x - y; },
        [](float, float, float) { return 1.0f; }, [](float, float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](float x, float y) { return x * y; },
        [](float, float y, float) { return y; }, [](float x, float, float) { return x; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "divide", [](float x, float y) { return x / y; },
        [](float, float y, float) { return 1.0f / y; },
        [](float, float y, float out) { return -out / y; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    // Ties route the gradient to a.
    return binary_op(
        a, b, "minimum", [](float x, float y) { return x <= y ? x : y; },
        [](float x, float y, float) { return x <= y ? 1.0f : 0.0f; },
        [](float x, float y, float) { return x <= y ? 0.0f : 1.0f; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "maximum", [](float x, float y) { return x >= y ? x : y; },
        [](float x, float y, float) { return x >= y ? 1.0f : 0.0f; },
        [](float x, float y, float) { return x >= y ? 0.0f : 1.0f; });
}

Tensor add_scalar(const Tensor& a, float s) {
    return unary_op(
        a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float s) {
    return unary_op(
        a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor clamp_min_scalar(const Tensor& a, float lo) {
    return unary_op(
        a, [lo](float x) { return x > lo ? x : lo; },
        [lo](float x, float) { return x > lo ? 1.0f : 0.0f; });
}

Tensor atan_of(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::atan(x); },
        [](float x, float) { return 1.0f / (1.0f + x * x); });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
    Tensor out = Tensor::scalar(static_cast<float>(s));
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            float g = od->grad[0];
            for (auto& v : xd->grad) v += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) {
    double s = 0.0;
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) s += x.data()[i];
    Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, n]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            float g = od->grad[0] / static_cast<float>(n);
            for (auto& v : xd->grad) v += g;
        });
    }
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    Tensor out = Tensor::zeros(logits.shape());
    const float* xp = logits.data();
    const float* tp = targets.data();
    float* op = out.data();
    for (int64_t i = 0; i < logits.numel(); ++i) {
        float x = xp[i], t = tp[i];
        op[i] = std::max(x, 0.0f) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    if (tape_wants({&logits})) {
        out.set_requires_grad(true);
        auto xd = logits.node();
        auto td = targets.node();
        auto od = out.node();
        Tape::active()->record([xd, td, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            const float* g = od->grad.data();
            for (size_t i = 0; i < xd->values.size(); ++i) {
                float s = 1.0f / (1.0f + std::exp(-xd->values[i]));
                xd->grad[i] += g[i] * (s - td->values[i]);
            }
        });
    }
    return out;
}

Tensor bin_expectation(const Tensor& logits) {
    check(logits.ndim() == 2, "bin_expectation expects [P,B], got ", shape_str(logits.shape()));
    int p = logits.dim(0), b = logits.dim(1);
    Tensor out = Tensor::zeros({p});
    std::vector<float> probs(static_cast<size_t>(p) * b);
    for (int i = 0; i < p; ++i) {
        const float* row = logits.data() + static_cast<long>(i) * b;
        float* pr = probs.data() + static_cast<long>(i) * b;
        double mx = row[0];
        for (int j = 1; j < b; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0.0;
        for (int j = 0; j < b; ++j) z += std::exp(row[j] - mx);
        double e = 0.0;
        for (int j = 0; j < b; ++j) {
            double pj = std::exp(row[j] - mx) / z;
            pr[j] = static_cast<float>(pj);
            e += pj * j;
        }
        out.data()[i] = static_cast<float>(e);
    }
    if (tape_wants({&logits})) {
        out.set_requires_grad(true);
        auto xd = logits.node();
        auto od = out.node();
        auto probs_c = std::make_shared<std::vector<float>>(std::move(probs));
        Tape::active()->record([xd, od, probs_c, p, b]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int i = 0; i < p; ++i) {
                float g = od->grad[static_cast<size_t>(i)];
                float e = od->values[static_cast<size_t>(i)];
                const float* pr = probs_c->data() + static_cast<long>(i) * b;
                float* dst = xd->grad.data() + static_cast<long>(i) * b;
                for (int j = 0; j < b; ++j) dst[j] += g * pr[j] * (static_cast<float>(j) - e);
            }
        });
    }
    return out;
}

Tensor dfl_loss_rows(const Tensor& logits, const std::vector<float>& targets) {
    check(logits.ndim() == 2, "dfl_loss expects [P,B] logits, got ", shape_str(logits.shape()));
    int p = logits.dim(0), b = logits.dim(1);
    check(b >= 2, "dfl_loss needs at least 2 bins, got ", b);
    check(static_cast<int>(targets.size()) == p, "dfl_loss target count ", targets.size(),
          " does not match ", p, " rows");
    for (float t : targets) {
        check(t >= 0.0f && t <= static_cast<float>(b - 1), "dfl_loss target ", t,
              " outside [0, ", b - 1, "]");
    }
    Tensor out = Tensor::zeros({p});
    std::vector<float> probs(static_cast<size_t>(p) * b);
    for (int i = 0; i < p; ++i) {
        const float* row = logits.data() + static_cast<long>(i) * b;
        float* pr = probs.data() + static_cast<long>(i) * b;
        double mx = row[0];
        for (int j = 1; j < b; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0.0;
        for (int j = 0; j < b; ++j) z += std::exp(row[j] - mx);
        double logz = std::log(z) + mx;
        for (int j = 0; j < b; ++j) pr[j] = static_cast<float>(std::exp(row[j] - logz));
        float t = targets[static_cast<size_t>(i)];
        int l = static_cast<int>(std::floor(t));
        double loss;
        if (static_cast<float>(l) == t) {
            loss = logz - row[l];
        } else {
            int r = l + 1;
            double wl = r - t, wr = t - l;
            loss = wl * (logz - row[l]) + wr * (logz - row[r]);
        }
        out.data()[i] = static_cast<float>(loss);
    }
    if (tape_wants({&logits})) {
        out.set_requires_grad(true);
        auto xd = logits.node();
        auto od = out.node();
        auto probs_c = std::make_shared<std::vector<float>>(std::move(probs));
        auto targets_c = std::make_shared<std::vector<float>>(targets);
        Tape::active()->record([xd, od, probs_c, targets_c, p, b]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int i = 0; i < p; ++i) {
                float g = od->grad[static_cast<size_t>(i)];
                const float* pr = probs_c->data() + static_cast<long>(i) * b;
                float* dst = xd->grad.data() + static_cast<long>(i) * b;
                float t = (*targets_c)[static_cast<size_t>(i)];
                int l = static_cast<int>(std::floor(t));
                for (int j = 0; j < b; ++j) dst[j] += g * pr[j];
                if (static_cast<float>(l) == t) {
                    dst[l] -= g;
                } else {
                    dst[l] -= g * (static_cast<float>(l + 1) - t);
                    dst[l + 1] -= g * (t - static_cast<float>(l));
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_rows needs at least one input");
    int k = parts[0].dim(1);
    int rows = 0;
    for (const auto& t : parts) {
        check(t.ndim() == 2 && t.dim(1) == k, "concat_rows column mismatch: expected ", k,
              " columns, got ", shape_str(t.shape()));
        rows += t.dim(0);
    }
    Tensor out = Tensor::zeros({rows, k});
    long off = 0;
    for (const auto& t : parts) {
        std::copy(t.data(), t.data() + t.numel(), out.data() + off);
        off += t.numel();
    }
    bool wants = false;
    for (const auto& t : parts) {
        if (Tape::active() && t.requires_grad()) wants = true;
    }
    if (wants) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorData>> nodes;
        nodes.reserve(parts.size());
        for (const auto& t : parts) nodes.push_back(t.node());
        auto od = out.node();
        Tape::active()->record([nodes, od]() {
            if (od->grad.empty()) return;
            long off = 0;
            for (const auto& nd : nodes) {
                long n = static_cast<long>(nd->values.size());
                if (nd->requires_grad) {
                    ensure_grad(*nd);
                    for (long i = 0; i < n; ++i) nd->grad[static_cast<size_t>(i)] += od->grad[static_cast<size_t>(off + i)];
                }
                off += n;
            }
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
    check(x.ndim() == 2, "gather_rows expects [M,K], got ", shape_str(x.shape()));
    int m = x.dim(0), k = x.dim(1);
    for (int idx : indices) check(idx >= 0 && idx < m, "gather_rows index ", idx, " out of [0,", m, ")");
    int p = static_cast<int>(indices.size());
    check(p > 0, "gather_rows needs at least one index");
    Tensor out = Tensor::zeros({p, k});
    for (int i = 0; i < p; ++i) {
        const float* src = x.data() + static_cast<long>(indices[static_cast<size_t>(i)]) * k;
        std::copy(src, src + k, out.data() + static_cast<long>(i) * k);
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        auto idx_c = std::make_shared<std::vector<int>>(indices);
        Tape::active()->record([xd, od, idx_c, k]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (size_t i = 0; i < idx_c->size(); ++i) {
                const float* g = od->grad.data() + static_cast<long>(i) * k;
                float* dst = xd->grad.data() + static_cast<long>((*idx_c)[i]) * k;
                for (int j = 0; j < k; ++j) dst[j] += g[j];
            }
        });
    }
    return out;
}

Tensor stride_slice(const Tensor& x, int offset, int stride) {
    check(stride >= 1 && offset >= 0, "stride_slice requires offset >= 0 and stride >= 1");
    int64_t n = x.numel();
    check(offset < n, "stride_slice offset ", offset, " out of range for ", n, " elements");
    int count = static_cast<int>((n - offset + stride - 1) / stride);
    Tensor out = Tensor::zeros({count});
    for (int i = 0; i < count; ++i) out.data()[i] = x.data()[offset + static_cast<int64_t>(i) * stride];
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, offset, stride, count]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int i = 0; i < count; ++i) {
                xd->grad[static_cast<size_t>(offset + static_cast<int64_t>(i) * stride)] +=
                    od->grad[static_cast<size_t>(i)];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    check(shape_numel(new_shape) == x.numel(), "reshape from ", shape_str(x.shape()), " to ",
          shape_str(new_shape), " changes element count");
    Tensor out = Tensor::from_values(std::move(new_shape),
                                     std::vector<float>(x.data(), x.data() + x.numel()));
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
        });
    }
    return out;
}

} // namespace ssldetect::ops
