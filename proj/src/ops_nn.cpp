#include <cmath>
#include <cstring>

#include "gemm.hpp"
#include "ssldetect/ops.hpp"
#include "ssldetect/parallel.hpp"

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

float sigmoid_f(float x) { return 1.0f / (1.0f + std::exp(-x)); }

} // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool train, float momentum,
                  float eps) {
    check(x.ndim() == 4, "batch_norm input must be NCHW, got ", shape_str(x.shape()));
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    check(gamma.ndim() == 1 && gamma.dim(0) == c, "batch_norm gamma must be [C]=[", c, "], got ",
          shape_str(gamma.shape()));
    check(beta.ndim() == 1 && beta.dim(0) == c, "batch_norm beta must be [C]=[", c, "], got ",
          shape_str(beta.shape()));
    check(running_mean.dim(0) == c && running_var.dim(0) == c,
          "batch_norm running stats must be [C]=[", c, "]");
    const long plane = static_cast<long>(h) * w;
    const long cnt = static_cast<long>(n) * plane;
    if (train) check(cnt >= 2, "batch_norm train mode needs at least 2 values per channel, got ", cnt);

    Tensor out = Tensor::zeros({n, c, h, w});
    std::vector<float> mean_v(static_cast<size_t>(c)), istd_v(static_cast<size_t>(c));

    if (train) {
        for (int ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const float* p = x.data() + (static_cast<long>(ni) * c + ci) * plane;
                for (long i = 0; i < plane; ++i) s += p[i];
            }
            double mu = s / static_cast<double>(cnt);
            double sq = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const float* p = x.data() + (static_cast<long>(ni) * c + ci) * plane;
                for (long i = 0; i < plane; ++i) {
                    double dv = p[i] - mu;
                    sq += dv * dv;
                }
            }
            double var = sq / static_cast<double>(cnt);
            mean_v[static_cast<size_t>(ci)] = static_cast<float>(mu);
            istd_v[static_cast<size_t>(ci)] = static_cast<float>(1.0 / std::sqrt(var + eps));
            double unbiased = sq / static_cast<double>(cnt - 1);
            float* rm = running_mean.data();
            float* rv = running_var.data();
            rm[ci] = (1.0f - momentum) * rm[ci] + momentum * static_cast<float>(mu);
            rv[ci] = (1.0f - momentum) * rv[ci] + momentum * static_cast<float>(unbiased);
        }
    } else {
        for (int ci = 0; ci < c; ++ci) {
            mean_v[static_cast<size_t>(ci)] = running_mean.data()[ci];
            istd_v[static_cast<size_t>(ci)] =
                1.0f / std::sqrt(running_var.data()[ci] + eps);
        }
    }

    const float* gp = gamma.data();
    const float* bp = beta.data();
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
        int ci = static_cast<int>(nc % c);
        const float* src = x.data() + nc * plane;
        float* dst = out.data() + nc * plane;
        float mu = mean_v[static_cast<size_t>(ci)];
        float is = istd_v[static_cast<size_t>(ci)];
        float ga = gp[ci], be = bp[ci];
        for (long i = 0; i < plane; ++i) dst[i] = ga * (src[i] - mu) * is + be;
    });

    if (tape_wants({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto gd = gamma.node();
        auto bd = beta.node();
        auto od = out.node();
        auto mean_c = std::make_shared<std::vector<float>>(std::move(mean_v));
        auto istd_c = std::make_shared<std::vector<float>>(std::move(istd_v));
        Tape::active()->record([xd, gd, bd, od, mean_c, istd_c, n, c, plane, cnt, train]() {
            if (od->grad.empty()) return;
            const float* g = od->grad.data();
            const float* xv = xd->values.data();
            bool need_x = xd->requires_grad;
            bool need_g = gd->requires_grad;
            bool need_b = bd->requires_grad;
            if (need_x) ensure_grad(*xd);
            if (need_g) ensure_grad(*gd);
            if (need_b) ensure_grad(*bd);

            parallel_for(c, [&](int64_t ci) {
                float mu = (*mean_c)[static_cast<size_t>(ci)];
                float is = (*istd_c)[static_cast<size_t>(ci)];
                float ga = gd->values[static_cast<size_t>(ci)];
                double sum_g = 0.0, sum_gx = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    long base = (static_cast<long>(ni) * c + ci) * plane;
                    for (long i = 0; i < plane; ++i) {
                        float xhat = (xv[base + i] - mu) * is;
                        sum_g += g[base + i];
                        sum_gx += static_cast<double>(g[base + i]) * xhat;
                    }
                }
                if (need_g) gd->grad[static_cast<size_t>(ci)] += static_cast<float>(sum_gx);
                if (need_b) bd->grad[static_cast<size_t>(ci)] += static_cast<float>(sum_g);
                if (need_x) {
                    if (train) {
                        double inv_cnt = 1.0 / static_cast<double>(cnt);
                        for (int ni = 0; ni < n; ++ni) {
                            long base = (static_cast<long>(ni) * c + ci) * plane;
                            for (long i = 0; i < plane; ++i) {
                                float xhat = (xv[base + i] - mu) * is;
                                double t = g[base + i] - sum_g * inv_cnt -
                                           xhat * sum_gx * inv_cnt;
                                xd->grad[static_cast<size_t>(base + i)] +=
                                    static_cast<float>(ga * is * t);
                            }
                        }
                    } else {
                        for (int ni = 0; ni < n; ++ni) {
                            long base = (static_cast<long>(ni) * c + ci) * plane;
                            for (long i = 0; i < plane; ++i) {
                                xd->grad[static_cast<size_t>(base + i)] += ga * is * g[base + i];
                            }
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* xp = x.data();
    float* op = out.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        float s = sigmoid_f(xp[i]);
        op[i] = xp[i] * s;
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            const float* g = od->grad.data();
            for (size_t i = 0; i < xd->values.size(); ++i) {
                float xv = xd->values[i];
                float s = sigmoid_f(xv);
                xd->grad[i] += g[i] * (s * (1.0f + xv * (1.0f - s)));
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* xp = x.data();
    float* op = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) op[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            const float* g = od->grad.data();
            for (size_t i = 0; i < xd->values.size(); ++i) {
                if (xd->values[i] > 0.0f) xd->grad[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* xp = x.data();
    float* op = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) op[i] = sigmoid_f(xp[i]);
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            const float* g = od->grad.data();
            for (size_t i = 0; i < xd->values.size(); ++i) {
                float y = od->values[i];
                xd->grad[i] += g[i] * y * (1.0f - y);
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    check(x.ndim() == 4, "global_avg_pool input must be NCHW, got ", shape_str(x.shape()));
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const long plane = static_cast<long>(h) * w;
    Tensor out = Tensor::zeros({n, c});
    for (long nc = 0; nc < static_cast<long>(n) * c; ++nc) {
        const float* p = x.data() + nc * plane;
        double s = 0.0;
        for (long i = 0; i < plane; ++i) s += p[i];
        out.data()[nc] = static_cast<float>(s / static_cast<double>(plane));
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, plane]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            float inv = 1.0f / static_cast<float>(plane);
            for (size_t nc = 0; nc < od->values.size(); ++nc) {
                float gv = od->grad[nc] * inv;
                float* dst = xd->grad.data() + static_cast<long>(nc) * plane;
                for (long i = 0; i < plane; ++i) dst[i] += gv;
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    check(x.ndim() == 2, "linear input must be [N,K], got ", shape_str(x.shape()));
    check(w.ndim() == 2, "linear weight must be [M,K], got ", shape_str(w.shape()));
    int n = x.dim(0), k = x.dim(1), m = w.dim(0);
    check(w.dim(1) == k, "linear inner dimension mismatch: input K=", k, ", weight K=", w.dim(1));
    if (bias.defined()) {
        check(bias.ndim() == 1 && bias.dim(0) == m, "linear bias must be [M]=[", m, "], got ",
              shape_str(bias.shape()));
    }
    Tensor out = Tensor::zeros({n, m});
    detail::gemm_nt(n, m, k, x.data(), w.data(), out.data());
    if (bias.defined()) {
        for (int i = 0; i < n; ++i) {
            float* row = out.data() + static_cast<long>(i) * m;
            for (int j = 0; j < m; ++j) row[j] += bias.data()[j];
        }
    }
    if (tape_wants({&x, &w, &bias})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto wd = w.node();
        auto bd = bias.defined() ? bias.node() : nullptr;
        auto od = out.node();
        Tape::active()->record([xd, wd, bd, od, n, m, k]() {
            if (od->grad.empty()) return;
            const float* g = od->grad.data();
            if (xd->requires_grad) {
                ensure_grad(*xd);
                detail::gemm_nn(n, k, m, g, wd->values.data(), xd->grad.data());
            }
            if (wd->requires_grad) {
                ensure_grad(*wd);
                detail::gemm_tn(m, k, n, g, xd->values.data(), wd->grad.data());
            }
            if (bd && bd->requires_grad) {
                ensure_grad(*bd);
                for (int j = 0; j < m; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i) s += g[static_cast<long>(i) * m + j];
                    bd->grad[static_cast<size_t>(j)] += static_cast<float>(s);
                }
            }
        });
    }
    return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
    check(x.ndim() == 2, "l2_normalize expects [N,K], got ", shape_str(x.shape()));
    constexpr double kFloor = 1e-12;
    int n = x.dim(0), k = x.dim(1);
    Tensor out = Tensor::zeros({n, k});
    std::vector<float> norms(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* row = x.data() + static_cast<long>(i) * k;
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += static_cast<double>(row[j]) * row[j];
        double norm = std::max(std::sqrt(s), kFloor);
        norms[static_cast<size_t>(i)] = static_cast<float>(norm);
        float inv = static_cast<float>(1.0 / norm);
        float* dst = out.data() + static_cast<long>(i) * k;
        for (int j = 0; j < k; ++j) dst[j] = row[j] * inv;
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        auto norms_c = std::make_shared<std::vector<float>>(std::move(norms));
        Tape::active()->record([xd, od, norms_c, n, k]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int i = 0; i < n; ++i) {
                const float* g = od->grad.data() + static_cast<long>(i) * k;
                const float* y = od->values.data() + static_cast<long>(i) * k;
                float inv = 1.0f / (*norms_c)[static_cast<size_t>(i)];
                double dot = 0.0;
                for (int j = 0; j < k; ++j) dot += static_cast<double>(g[j]) * y[j];
                float* dst = xd->grad.data() + static_cast<long>(i) * k;
                for (int j = 0; j < k; ++j) {
                    dst[j] += (g[j] - static_cast<float>(dot) * y[j]) * inv;
                }
            }
        });
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
    check(x.ndim() == 4, "upsample expects NCHW, got ", shape_str(x.shape()));
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out = Tensor::zeros({n, c, 2 * h, 2 * w});
    const long planes = static_cast<long>(n) * c;
    parallel_for(planes, [&](int64_t nc) {
        const float* src = x.data() + nc * h * w;
        float* dst = out.data() + nc * 4 * h * w;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                float v = src[y * w + xx];
                long o = static_cast<long>(2 * y) * (2 * w) + 2 * xx;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * w] = v;
                dst[o + 2 * w + 1] = v;
            }
        }
    });
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, planes, h, w]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (long nc = 0; nc < planes; ++nc) {
                const float* g = od->grad.data() + nc * 4 * h * w;
                float* dst = xd->grad.data() + nc * h * w;
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < w; ++xx) {
                        long o = static_cast<long>(2 * y) * (2 * w) + 2 * xx;
                        dst[y * w + xx] += g[o] + g[o + 1] + g[o + 2 * w] + g[o + 2 * w + 1];
                    }
                }
            }
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 4 && b.ndim() == 4, "concat_channels expects NCHW inputs");
    check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const long plane = static_cast<long>(h) * w;
    Tensor out = Tensor::zeros({n, ca + cb, h, w});
    for (int ni = 0; ni < n; ++ni) {
        std::memcpy(out.data() + static_cast<long>(ni) * (ca + cb) * plane,
                    a.data() + static_cast<long>(ni) * ca * plane,
                    sizeof(float) * static_cast<size_t>(ca * plane));
        std::memcpy(out.data() + (static_cast<long>(ni) * (ca + cb) + ca) * plane,
                    b.data() + static_cast<long>(ni) * cb * plane,
                    sizeof(float) * static_cast<size_t>(cb * plane));
    }
    if (tape_wants({&a, &b})) {
        out.set_requires_grad(true);
        auto ad = a.node();
        auto bd = b.node();
        auto od = out.node();
        Tape::active()->record([ad, bd, od, n, ca, cb, plane]() {
            if (od->grad.empty()) return;
            for (int ni = 0; ni < n; ++ni) {
                const float* g = od->grad.data() + static_cast<long>(ni) * (ca + cb) * plane;
                if (ad->requires_grad) {
                    ensure_grad(*ad);
                    float* dst = ad->grad.data() + static_cast<long>(ni) * ca * plane;
                    for (long i = 0; i < ca * plane; ++i) dst[i] += g[i];
                }
                if (bd->requires_grad) {
                    ensure_grad(*bd);
                    float* dst = bd->grad.data() + static_cast<long>(ni) * cb * plane;
                    const float* gb = g + ca * plane;
                    for (long i = 0; i < cb * plane; ++i) dst[i] += gb[i];
                }
            }
        });
    }
    return out;
}

Tensor slice_channels(const Tensor& x, int begin, int end) {
    check(x.ndim() == 4, "slice_channels expects NCHW, got ", shape_str(x.shape()));
    check(begin >= 0 && begin < end && end <= x.dim(1), "slice_channels range [", begin, ",", end,
          ") invalid for ", x.dim(1), " channels");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int cs = end - begin;
    const long plane = static_cast<long>(h) * w;
    Tensor out = Tensor::zeros({n, cs, h, w});
    for (int ni = 0; ni < n; ++ni) {
        std::memcpy(out.data() + static_cast<long>(ni) * cs * plane,
                    x.data() + (static_cast<long>(ni) * c + begin) * plane,
                    sizeof(float) * static_cast<size_t>(cs * plane));
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, n, c, cs, begin, plane]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int ni = 0; ni < n; ++ni) {
                const float* g = od->grad.data() + static_cast<long>(ni) * cs * plane;
                float* dst = xd->grad.data() + (static_cast<long>(ni) * c + begin) * plane;
                for (long i = 0; i < cs * plane; ++i) dst[i] += g[i];
            }
        });
    }
    return out;
}

Tensor cells_to_rows(const Tensor& x) {
    check(x.ndim() == 4, "cells_to_rows expects NCHW, got ", shape_str(x.shape()));
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const long plane = static_cast<long>(h) * w;
    Tensor out = Tensor::zeros({n * h * w, c});
    for (int ni = 0; ni < n; ++ni) {
        const float* src = x.data() + static_cast<long>(ni) * c * plane;
        float* dst = out.data() + static_cast<long>(ni) * plane * c;
        for (int ci = 0; ci < c; ++ci) {
            for (long p = 0; p < plane; ++p) dst[p * c + ci] = src[ci * plane + p];
        }
    }
    if (tape_wants({&x})) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto od = out.node();
        Tape::active()->record([xd, od, n, c, plane]() {
            if (od->grad.empty() || !xd->requires_grad) return;
            ensure_grad(*xd);
            for (int ni = 0; ni < n; ++ni) {
                const float* g = od->grad.data() + static_cast<long>(ni) * plane * c;
                float* dst = xd->grad.data() + static_cast<long>(ni) * c * plane;
                for (int ci = 0; ci < c; ++ci) {
                    for (long p = 0; p < plane; ++p) dst[ci * plane + p] += g[p * c + ci];
                }
            }
        });
    }
    return out;
}

} // namespace ssldetect::ops
