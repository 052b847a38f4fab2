#include <cstring>

#include "gemm.hpp"
#include "ssldetect/ops.hpp"
#include "ssldetect/parallel.hpp"

namespace ssldetect::ops {

namespace {

void ensure_grad(TensorData& d) {
    if (d.grad.empty()) d.grad.assign(d.values.size(), 0.0f);
}

struct ConvDims {
    int n, c, h, w;      // input
    int o, k;            // filters
    int stride, pad;
    int oh, ow;          // output spatial
    int ckk;             // col rows
    int p;               // col columns = oh*ow
    bool unit;           // 1x1 stride-1 pad-0: col aliases the input
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    check(x.ndim() == 4, "conv2d input must be NCHW, got ", shape_str(x.shape()));
    check(w.ndim() == 4, "conv2d weight must be [O,C,k,k], got ", shape_str(w.shape()));
    check(w.dim(2) == w.dim(3), "conv2d kernel must be square, got ", w.dim(2), "x", w.dim(3));
    check(stride >= 1, "conv2d stride must be positive, got ", stride);
    check(padding >= 0, "conv2d padding must be non-negative, got ", padding);
    ConvDims d;
    d.n = x.dim(0);
    d.c = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.o = w.dim(0);
    d.k = w.dim(2);
    d.stride = stride;
    d.pad = padding;
    check(w.dim(1) == d.c, "conv2d channel mismatch: input has ", d.c, " channels, weight expects ",
          w.dim(1));
    check(d.h + 2 * padding >= d.k && d.w + 2 * padding >= d.k, "conv2d kernel ", d.k,
          " does not fit padded input ", d.h + 2 * padding, "x", d.w + 2 * padding);
    if (bias.defined()) {
        check(bias.ndim() == 1 && bias.dim(0) == d.o, "conv2d bias must be [O]=[", d.o, "], got ",
              shape_str(bias.shape()));
    }
    d.oh = (d.h + 2 * padding - d.k) / stride + 1;
    d.ow = (d.w + 2 * padding - d.k) / stride + 1;
    d.ckk = d.c * d.k * d.k;
    d.p = d.oh * d.ow;
    d.unit = (d.k == 1 && stride == 1 && padding == 0);
    return d;
}

// Expands one image into [C*k*k, oh*ow]; rows ordered (c, ky, kx).
void im2col(const ConvDims& d, const float* img, float* col) {
    for (int c = 0; c < d.c; ++c) {
        const float* plane = img + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                float* row = col + (static_cast<long>(c) * d.k * d.k + ky * d.k + kx) * d.p;
                for (int oy = 0; oy < d.oh; ++oy) {
                    int iy = oy * d.stride - d.pad + ky;
                    float* dst = row + static_cast<long>(oy) * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(dst, 0, sizeof(float) * static_cast<size_t>(d.ow));
                        continue;
                    }
                    const float* src_row = plane + static_cast<long>(iy) * d.w;
                    int ix0 = -d.pad + kx; // input x for ox = 0
                    int ox_lo = std::max(0, (-ix0 + d.stride - 1) / d.stride);
                    int ox_hi = d.ow;
                    if (ix0 + (d.ow - 1) * d.stride >= d.w) {
                        ox_hi = (d.w - 1 - ix0) / d.stride + 1;
                        if (ox_hi < 0) ox_hi = 0;
                    }
                    for (int ox = 0; ox < ox_lo; ++ox) dst[ox] = 0.0f;
                    if (d.stride == 1) {
                        if (ox_hi > ox_lo) {
                            std::memcpy(dst + ox_lo, src_row + ix0 + ox_lo,
                                        sizeof(float) * static_cast<size_t>(ox_hi - ox_lo));
                        }
                    } else {
                        for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = src_row[ix0 + ox * d.stride];
                    }
                    for (int ox = ox_hi; ox < d.ow; ++ox) dst[ox] = 0.0f;
                }
            }
        }
    }
}

// Scatters a [C*k*k, oh*ow] gradient back onto one image's gradient.
void col2im_add(const ConvDims& d, const float* col, float* img_grad) {
    for (int c = 0; c < d.c; ++c) {
        float* plane = img_grad + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                const float* row = col + (static_cast<long>(c) * d.k * d.k + ky * d.k + kx) * d.p;
                for (int oy = 0; oy < d.oh; ++oy) {
                    int iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    const float* src = row + static_cast<long>(oy) * d.ow;
                    float* dst_row = plane + static_cast<long>(iy) * d.w;
                    int ix0 = -d.pad + kx;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        int ix = ix0 + ox * d.stride;
                        if (ix < 0 || ix >= d.w) continue;
                        dst_row[ix] += src[ox];
                    }
                }
            }
        }
    }
}

thread_local std::vector<float> t_col_buf;

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    ConvDims d = conv_dims(x, w, bias, stride, padding);
    Tensor out = Tensor::zeros({d.n, d.o, d.oh, d.ow});

    const float* xp = x.data();
    const float* wp = w.data();
    float* op = out.data();
    const long in_sz = static_cast<long>(d.c) * d.h * d.w;
    const long out_sz = static_cast<long>(d.o) * d.p;

    parallel_for(d.n, [&](int64_t n) {
        const float* img = xp + n * in_sz;
        const float* col = img;
        if (!d.unit) {
            t_col_buf.resize(static_cast<size_t>(d.ckk) * d.p);
            im2col(d, img, t_col_buf.data());
            col = t_col_buf.data();
        }
        float* dst = op + n * out_sz;
        detail::gemm_nn(d.o, d.p, d.ckk, wp, col, dst);
        if (bias.defined()) {
            const float* bp = bias.data();
            for (int o = 0; o < d.o; ++o) {
                float bv = bp[o];
                float* row = dst + static_cast<long>(o) * d.p;
                for (int p = 0; p < d.p; ++p) row[p] += bv;
            }
        }
    });

    Tape* tape = Tape::active();
    bool needs = tape && (x.requires_grad() || w.requires_grad() || (bias.defined() && bias.requires_grad()));
    if (needs) {
        out.set_requires_grad(true);
        auto xd = x.node();
        auto wd = w.node();
        auto bd = bias.defined() ? bias.node() : nullptr;
        auto od = out.node();
        tape->record([xd, wd, bd, od, d]() {
            if (od->grad.empty()) return;
            const float* g = od->grad.data();
            const long in_sz = static_cast<long>(d.c) * d.h * d.w;
            const long out_sz = static_cast<long>(d.o) * d.p;
            const long w_sz = static_cast<long>(d.o) * d.ckk;

            if (bd && bd->requires_grad) {
                ensure_grad(*bd);
                for (int n = 0; n < d.n; ++n) {
                    for (int o = 0; o < d.o; ++o) {
                        const float* row = g + n * out_sz + static_cast<long>(o) * d.p;
                        double s = 0.0;
                        for (int p = 0; p < d.p; ++p) s += row[p];
                        bd->grad[static_cast<size_t>(o)] += static_cast<float>(s);
                    }
                }
            }

            // Weight transposed once: both remaining products then run on the
            // row-major kernel.
            std::vector<float> wt;
            if (xd->requires_grad) {
                wt.resize(static_cast<size_t>(d.ckk) * d.o);
                for (int o = 0; o < d.o; ++o)
                    for (int r = 0; r < d.ckk; ++r)
                        wt[static_cast<size_t>(r) * d.o + o] = wd->values[static_cast<size_t>(o) * d.ckk + r];
                ensure_grad(*xd);
            }

            // Per-group weight-gradient partials keep the accumulation order
            // fixed for any thread count.
            constexpr int kGroup = 8;
            int groups = (d.n + kGroup - 1) / kGroup;
            std::vector<std::vector<float>> wg_partial;
            if (wd->requires_grad) wg_partial.assign(static_cast<size_t>(groups), {});

            parallel_for(groups, [&](int64_t gi) {
                int n_begin = static_cast<int>(gi) * kGroup;
                int n_end = std::min(d.n, n_begin + kGroup);
                float* wg = nullptr;
                if (wd->requires_grad) {
                    wg_partial[static_cast<size_t>(gi)].assign(static_cast<size_t>(w_sz), 0.0f);
                    wg = wg_partial[static_cast<size_t>(gi)].data();
                }
                std::vector<float> col_grad;
                for (int n = n_begin; n < n_end; ++n) {
                    const float* img = xd->values.data() + n * in_sz;
                    const float* col = img;
                    if (!d.unit) {
                        t_col_buf.resize(static_cast<size_t>(d.ckk) * d.p);
                        im2col(d, img, t_col_buf.data());
                        col = t_col_buf.data();
                    }
                    const float* gout = g + n * out_sz;
                    if (wg) detail::gemm_nt(d.o, d.ckk, d.p, gout, col, wg);
                    if (xd->requires_grad) {
                        float* xg = xd->grad.data() + n * in_sz;
                        if (d.unit) {
                            detail::gemm_nn(d.ckk, d.p, d.o, wt.data(), gout, xg);
                        } else {
                            col_grad.assign(static_cast<size_t>(d.ckk) * d.p, 0.0f);
                            detail::gemm_nn(d.ckk, d.p, d.o, wt.data(), gout, col_grad.data());
                            col2im_add(d, col_grad.data(), xg);
                        }
                    }
                }
            });

            if (wd->requires_grad) {
                ensure_grad(*wd);
                for (int gi = 0; gi < groups; ++gi) {
                    const auto& part = wg_partial[static_cast<size_t>(gi)];
                    for (long i = 0; i < w_sz; ++i) wd->grad[static_cast<size_t>(i)] += part[static_cast<size_t>(i)];
                }
            }
        });
    }
    return out;
}

} // namespace ssldetect::ops
