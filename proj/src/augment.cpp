#include "ssldetect/augment.hpp"

#include <algorithm>
#include <cmath>

namespace ssldetect {

namespace {

constexpr float kAffineFill = 114.0f / 255.0f;

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void clamp01(Tensor& t) {
    for (auto& v : t.values()) v = std::clamp(v, 0.0f, 1.0f);
}

// Boxes below the minimum side length (in pixels of the target image) are
// discarded; the rest are clipped to [0,1].
void clip_boxes(std::vector<GroundTruthBox>& boxes, int img_w, int img_h) {
    std::vector<GroundTruthBox> kept;
    kept.reserve(boxes.size());
    for (const auto& b : boxes) {
        float x0 = std::clamp(b.x_min(), 0.0f, 1.0f);
        float y0 = std::clamp(b.y_min(), 0.0f, 1.0f);
        float x1 = std::clamp(b.x_max(), 0.0f, 1.0f);
        float y1 = std::clamp(b.y_max(), 0.0f, 1.0f);
        if ((x1 - x0) * static_cast<float>(img_w) < kMinBoxSidePx) continue;
        if ((y1 - y0) * static_cast<float>(img_h) < kMinBoxSidePx) continue;
        kept.push_back(GroundTruthBox::from_corners(x0, y0, x1, y1));
    }
    boxes = std::move(kept);
}

struct Hsv {
    float h, s, v;
};

Hsv rgb_to_hsv(float r, float g, float b) {
    float mx = std::max({r, g, b});
    float mn = std::min({r, g, b});
    float d = mx - mn;
    Hsv out{0.0f, 0.0f, mx};
    if (d > 1e-12f) {
        if (mx == r) {
            out.h = std::fmod((g - b) / d, 6.0f);
        } else if (mx == g) {
            out.h = (b - r) / d + 2.0f;
        } else {
            out.h = (r - g) / d + 4.0f;
        }
        out.h /= 6.0f;
        if (out.h < 0) out.h += 1.0f;
    }
    if (mx > 1e-12f) out.s = d / mx;
    return out;
}

void hsv_to_rgb(const Hsv& in, float& r, float& g, float& b) {
    float h = in.h * 6.0f;
    int i = static_cast<int>(std::floor(h)) % 6;
    if (i < 0) i += 6;
    float f = h - std::floor(h);
    float p = in.v * (1.0f - in.s);
    float q = in.v * (1.0f - in.s * f);
    float t = in.v * (1.0f - in.s * (1.0f - f));
    switch (i) {
        case 0: r = in.v; g = t; b = p; break;
        case 1: r = q; g = in.v; b = p; break;
        case 2: r = p; g = in.v; b = t; break;
        case 3: r = p; g = q; b = in.v; break;
        case 4: r = t; g = p; b = in.v; break;
        default: r = in.v; g = p; b = q; break;
    }
}

} // namespace

void AugmentPolicy::validate() const {
    check(crop_scale_lo > 0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0f,
          "crop scale range must satisfy 0 < lo <= hi <= 1, got (", crop_scale_lo, ",",
          crop_scale_hi, ")");
    for (float p : {grayscale_prob, blur_prob, flip_prob}) {
        check(p >= 0.0f && p <= 1.0f, "probability out of [0,1]: ", p);
    }
    check(blur_sigma_lo > 0 && blur_sigma_lo <= blur_sigma_hi, "blur sigma range invalid");
    check(output_size >= 2, "output_size must be at least 2");
}

ImageSample random_resized_crop(const ImageSample& img, Rng& rng, const AugmentPolicy& policy) {
    int w = img.width(), h = img.height();
    check(w >= 2 && h >= 2, "random_resized_crop needs an image of at least 2x2, got ", w, "x", h);
    int out = policy.output_size;
    float area = static_cast<float>(w) * static_cast<float>(h);

    int cw = -1, ch = -1, cx0 = 0, cy0 = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        float frac = static_cast<float>(rng.uniform(policy.crop_scale_lo, policy.crop_scale_hi));
        float log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
        float ar = std::exp(static_cast<float>(rng.uniform(log_lo, log_hi)));
        float target = area * frac;
        int tw = static_cast<int>(std::lround(std::sqrt(target * ar)));
        int th = static_cast<int>(std::lround(std::sqrt(target / ar)));
        if (tw >= 1 && th >= 1 && tw <= w && th <= h) {
            cw = tw;
            ch = th;
            cx0 = rng.uniform_int(w - tw + 1);
            cy0 = rng.uniform_int(h - th + 1);
            break;
        }
    }
    if (cw < 0) {
        // Center crop of the largest square.
        int side = std::min(w, h);
        cw = ch = side;
        cx0 = (w - side) / 2;
        cy0 = (h - side) / 2;
    }

    ImageSample res;
    res.source_id = img.source_id;
    res.pixels = crop_and_resize(img.pixels, static_cast<float>(cx0), static_cast<float>(cy0),
                                 static_cast<float>(cx0 + cw), static_cast<float>(cy0 + ch), out, out);
    res.boxes.reserve(img.boxes.size());
    for (const auto& b : img.boxes) {
        float x0 = (b.x_min() * static_cast<float>(w) - static_cast<float>(cx0)) / static_cast<float>(cw);
        float y0 = (b.y_min() * static_cast<float>(h) - static_cast<float>(cy0)) / static_cast<float>(ch);
        float x1 = (b.x_max() * static_cast<float>(w) - static_cast<float>(cx0)) / static_cast<float>(cw);
        float y1 = (b.y_max() * static_cast<float>(h) - static_cast<float>(cy0)) / static_cast<float>(ch);
        res.boxes.push_back(GroundTruthBox::from_corners(x0, y0, x1, y1));
    }
    clip_boxes(res.boxes, out, out);
    return res;
}

ImageSample color_jitter(const ImageSample& img, Rng& rng, const AugmentPolicy& policy) {
    ImageSample res;
    res.source_id = img.source_id;
    res.boxes = img.boxes;
    res.pixels = img.pixels.clone();
    int h = img.height(), w = img.width();
    const long plane = static_cast<long>(h) * w;
    float* r = res.pixels.data();
    float* g = r + plane;
    float* b = r + 2 * plane;

    std::vector<int> order = {0, 1, 2, 3};
    rng.shuffle(order);
    // Factors are drawn up front in a fixed order so the shuffle only
    // affects application order, not the draws themselves.
    float fb = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - policy.brightness),
                                              1.0f + policy.brightness));
    float fc = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - policy.contrast),
                                              1.0f + policy.contrast));
    float fs = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - policy.saturation),
                                              1.0f + policy.saturation));
    float dh = static_cast<float>(rng.uniform(-policy.hue, policy.hue));

    for (int which : order) {
        switch (which) {
            case 0: { // brightness
                if (policy.brightness <= 0) break;
                for (long i = 0; i < 3 * plane; ++i) r[i] = std::clamp(r[i] * fb, 0.0f, 1.0f);
                break;
            }
            case 1: { // contrast: blend toward the mean gray level
                if (policy.contrast <= 0) break;
                double m = 0.0;
                for (long i = 0; i < plane; ++i) m += luma(r[i], g[i], b[i]);
                float gray = static_cast<float>(m / static_cast<double>(plane));
                for (long i = 0; i < 3 * plane; ++i) {
                    r[i] = std::clamp(gray + (r[i] - gray) * fc, 0.0f, 1.0f);
                }
                break;
            }
            case 2: { // saturation: blend toward per-pixel luma
                if (policy.saturation <= 0) break;
                for (long i = 0; i < plane; ++i) {
                    float l = luma(r[i], g[i], b[i]);
                    r[i] = std::clamp(l + (r[i] - l) * fs, 0.0f, 1.0f);
                    g[i] = std::clamp(l + (g[i] - l) * fs, 0.0f, 1.0f);
                    b[i] = std::clamp(l + (b[i] - l) * fs, 0.0f, 1.0f);
                }
                break;
            }
            default: { // hue rotation
                if (policy.hue <= 0) break;
                for (long i = 0; i < plane; ++i) {
                    Hsv hsv = rgb_to_hsv(r[i], g[i], b[i]);
                    hsv.h = hsv.h + dh;
                    hsv.h -= std::floor(hsv.h);
                    hsv_to_rgb(hsv, r[i], g[i], b[i]);
                }
                break;
            }
        }
    }
    clamp01(res.pixels);
    return res;
}

ImageSample random_grayscale(const ImageSample& img, Rng& rng, float prob) {
    if (!rng.bernoulli(prob)) {
        ImageSample res;
        res.source_id = img.source_id;
        res.boxes = img.boxes;
        res.pixels = img.pixels.clone();
        return res;
    }
    ImageSample res;
    res.source_id = img.source_id;
    res.boxes = img.boxes;
    res.pixels = Tensor::zeros(img.pixels.shape());
    const long plane = static_cast<long>(img.height()) * img.width();
    const float* r = img.pixels.data();
    const float* g = r + plane;
    const float* b = r + 2 * plane;
    float* dst = res.pixels.data();
    for (long i = 0; i < plane; ++i) {
        float l = luma(r[i], g[i], b[i]);
        dst[i] = l;
        dst[plane + i] = l;
        dst[2 * plane + i] = l;
    }
    return res;
}

Tensor gaussian_blur_kernel(float sigma) {
    check(sigma > 0, "gaussian blur sigma must be positive, got ", sigma);
    int radius = static_cast<int>(std::ceil(3.0f * sigma));
    Tensor k = Tensor::zeros({2 * radius + 1});
    double s = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
        k.data()[i + radius] = static_cast<float>(v);
        s += v;
    }
    for (auto& v : k.values()) v = static_cast<float>(v / s);
    return k;
}

ImageSample gaussian_blur(const ImageSample& img, Rng& rng, float sigma_lo, float sigma_hi,
                          float prob) {
    bool apply = rng.bernoulli(prob);
    float sigma = static_cast<float>(rng.uniform(sigma_lo, sigma_hi));
    if (!apply) {
        ImageSample res;
        res.source_id = img.source_id;
        res.boxes = img.boxes;
        res.pixels = img.pixels.clone();
        return res;
    }
    Tensor kernel = gaussian_blur_kernel(sigma);
    int radius = (kernel.dim(0) - 1) / 2;
    int h = img.height(), w = img.width();
    const long plane = static_cast<long>(h) * w;

    // Edge-inclusive reflection keeps each input pixel's total weight at 1,
    // so the image mean is preserved.
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return std::clamp(i, 0, n - 1);
    };

    ImageSample res;
    res.source_id = img.source_id;
    res.boxes = img.boxes;
    res.pixels = Tensor::zeros(img.pixels.shape());
    Tensor tmp = Tensor::zeros({h, w});
    for (int c = 0; c < 3; ++c) {
        const float* src = img.pixels.data() + c * plane;
        // horizontal
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    acc += static_cast<double>(kernel.data()[t + radius]) *
                           src[y * w + reflect(x + t, w)];
                }
                tmp.data()[y * w + x] = static_cast<float>(acc);
            }
        }
        // vertical
        float* dst = res.pixels.data() + c * plane;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    acc += static_cast<double>(kernel.data()[t + radius]) *
                           tmp.data()[reflect(y + t, h) * w + x];
                }
                dst[y * w + x] = static_cast<float>(acc);
            }
        }
    }
    clamp01(res.pixels);
    return res;
}

ImageSample horizontal_flip(const ImageSample& img, Rng& rng, float prob) {
    ImageSample res;
    res.source_id = img.source_id;
    if (!rng.bernoulli(prob)) {
        res.boxes = img.boxes;
        res.pixels = img.pixels.clone();
        return res;
    }
    int h = img.height(), w = img.width();
    const long plane = static_cast<long>(h) * w;
    res.pixels = Tensor::zeros(img.pixels.shape());
    for (int c = 0; c < 3; ++c) {
        const float* src = img.pixels.data() + c * plane;
        float* dst = res.pixels.data() + c * plane;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) dst[y * w + x] = src[y * w + (w - 1 - x)];
        }
    }
    res.boxes = img.boxes;
    for (auto& b : res.boxes) b.cx = 1.0f - b.cx;
    return res;
}

ViewPair make_view_pair(const ImageSample& img, uint64_t seed, const AugmentPolicy& policy) {
    policy.validate();
    auto one_view = [&](uint64_t sub) {
        Rng rng(sub);
        ImageSample v = random_resized_crop(img, rng, policy);
        v = horizontal_flip(v, rng, policy.flip_prob);
        v = color_jitter(v, rng, policy);
        v = random_grayscale(v, rng, policy.grayscale_prob);
        v = gaussian_blur(v, rng, policy.blur_sigma_lo, policy.blur_sigma_hi, policy.blur_prob);
        v.boxes.clear();
        return v;
    };
    ViewPair pair;
    pair.source_id = img.source_id;
    pair.view_a = one_view(Rng::derive(seed, 0));
    pair.view_b = one_view(Rng::derive(seed, 1));
    return pair;
}

ImageSample mosaic(const std::array<ImageSample, 4>& samples, Rng& rng, int output_size) {
    check(output_size >= 4, "mosaic output size too small: ", output_size);
    int s = output_size;
    int cx = static_cast<int>(std::lround(rng.uniform(0.25 * s, 0.75 * s)));
    int cy = static_cast<int>(std::lround(rng.uniform(0.25 * s, 0.75 * s)));
    cx = std::clamp(cx, 1, s - 1);
    cy = std::clamp(cy, 1, s - 1);
    return mosaic_at(samples, cx, cy, output_size);
}

ImageSample mosaic_at(const std::array<ImageSample, 4>& samples, int cx, int cy, int output_size) {
    int s = output_size;
    check(cx >= 1 && cx <= s - 1 && cy >= 1 && cy <= s - 1, "mosaic center (", cx, ",", cy,
          ") outside image of size ", s);
    ImageSample out;
    out.source_id = samples[0].source_id + "+mosaic";
    out.pixels = Tensor::zeros({3, s, s});
    const long oplane = static_cast<long>(s) * s;

    struct Tile {
        int x0, y0, x1, y1;
    };
    Tile tiles[4] = {{0, 0, cx, cy}, {cx, 0, s, cy}, {0, cy, cx, s}, {cx, cy, s, s}};

    for (int q = 0; q < 4; ++q) {
        const ImageSample& src = samples[static_cast<size_t>(q)];
        Tile t = tiles[q];
        int tw = t.x1 - t.x0, th = t.y1 - t.y0;
        if (tw <= 0 || th <= 0) continue;
        Tensor tile = bilinear_resize(src.pixels, th, tw);
        const long tplane = static_cast<long>(th) * tw;
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < th; ++y) {
                for (int x = 0; x < tw; ++x) {
                    out.pixels.data()[c * oplane + static_cast<long>(t.y0 + y) * s + (t.x0 + x)] =
                        tile.data()[c * tplane + static_cast<long>(y) * tw + x];
                }
            }
        }
        for (const auto& b : src.boxes) {
            // into collage pixels, then clipped to the tile
            float x0 = b.x_min() * static_cast<float>(tw) + static_cast<float>(t.x0);
            float y0 = b.y_min() * static_cast<float>(th) + static_cast<float>(t.y0);
            float x1 = b.x_max() * static_cast<float>(tw) + static_cast<float>(t.x0);
            float y1 = b.y_max() * static_cast<float>(th) + static_cast<float>(t.y0);
            x0 = std::clamp(x0, static_cast<float>(t.x0), static_cast<float>(t.x1));
            x1 = std::clamp(x1, static_cast<float>(t.x0), static_cast<float>(t.x1));
            y0 = std::clamp(y0, static_cast<float>(t.y0), static_cast<float>(t.y1));
            y1 = std::clamp(y1, static_cast<float>(t.y0), static_cast<float>(t.y1));
            if (x1 - x0 < kMinBoxSidePx || y1 - y0 < kMinBoxSidePx) continue;
            out.boxes.push_back(GroundTruthBox::from_corners(
                x0 / static_cast<float>(s), y0 / static_cast<float>(s), x1 / static_cast<float>(s),
                y1 / static_cast<float>(s)));
        }
    }
    return out;
}

ImageSample apply_affine(const ImageSample& img, float rotate_deg, float scale, float tx_px,
                         float ty_px) {
    int h = img.height(), w = img.width();
    float theta = rotate_deg * static_cast<float>(M_PI) / 180.0f;
    float ct = std::cos(theta), st = std::sin(theta);
    float cx = 0.5f * static_cast<float>(w), cy = 0.5f * static_cast<float>(h);

    // forward map: p' = R*S*(p - c) + c + t
    auto fwd = [&](float x, float y, float& ox, float& oy) {
        float dx = (x - cx) * scale, dy = (y - cy) * scale;
        ox = ct * dx - st * dy + cx + tx_px;
        oy = st * dx + ct * dy + cy + ty_px;
    };
    // inverse map for resampling
    float inv_scale = 1.0f / scale;
    auto inv = [&](float x, float y, float& ox, float& oy) {
        float dx = x - cx - tx_px, dy = y - cy - ty_px;
        float rx = ct * dx + st * dy;
        float ry = -st * dx + ct * dy;
        ox = rx * inv_scale + cx;
        oy = ry * inv_scale + cy;
    };

    ImageSample res;
    res.source_id = img.source_id;
    res.pixels = Tensor::zeros(img.pixels.shape());
    const long plane = static_cast<long>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float sx, sy;
            inv(static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f, sx, sy);
            sx -= 0.5f;
            sy -= 0.5f;
            if (sx < -0.5f || sy < -0.5f || sx > static_cast<float>(w) - 0.5f ||
                sy > static_cast<float>(h) - 0.5f) {
                for (int c = 0; c < 3; ++c) res.pixels.data()[c * plane + y * w + x] = kAffineFill;
                continue;
            }
            float fx = std::clamp(sx, 0.0f, static_cast<float>(w - 1));
            float fy = std::clamp(sy, 0.0f, static_cast<float>(h - 1));
            int ix0 = static_cast<int>(fx);
            int iy0 = static_cast<int>(fy);
            int ix1 = std::min(ix0 + 1, w - 1);
            int iy1 = std::min(iy0 + 1, h - 1);
            float wx = fx - static_cast<float>(ix0);
            float wy = fy - static_cast<float>(iy0);
            for (int c = 0; c < 3; ++c) {
                const float* p = img.pixels.data() + c * plane;
                float top = p[iy0 * w + ix0] * (1 - wx) + p[iy0 * w + ix1] * wx;
                float bot = p[iy1 * w + ix0] * (1 - wx) + p[iy1 * w + ix1] * wx;
                res.pixels.data()[c * plane + y * w + x] = top * (1 - wy) + bot * wy;
            }
        }
    }

    res.boxes.reserve(img.boxes.size());
    for (const auto& b : img.boxes) {
        float corners[4][2] = {
            {b.x_min() * static_cast<float>(w), b.y_min() * static_cast<float>(h)},
            {b.x_max() * static_cast<float>(w), b.y_min() * static_cast<float>(h)},
            {b.x_min() * static_cast<float>(w), b.y_max() * static_cast<float>(h)},
            {b.x_max() * static_cast<float>(w), b.y_max() * static_cast<float>(h)},
        };
        float mnx = 1e30f, mny = 1e30f, mxx = -1e30f, mxy = -1e30f;
        for (auto& c : corners) {
            float ox, oy;
            fwd(c[0], c[1], ox, oy);
            mnx = std::min(mnx, ox);
            mny = std::min(mny, oy);
            mxx = std::max(mxx, ox);
            mxy = std::max(mxy, oy);
        }
        res.boxes.push_back(GroundTruthBox::from_corners(
            mnx / static_cast<float>(w), mny / static_cast<float>(h), mxx / static_cast<float>(w),
            mxy / static_cast<float>(h)));
    }
    clip_boxes(res.boxes, w, h);
    return res;
}

ImageSample random_affine(const ImageSample& img, Rng& rng, const AffineLimits& limits) {
    float deg = static_cast<float>(rng.uniform(-limits.max_rotate_deg, limits.max_rotate_deg));
    float scale = static_cast<float>(
        rng.uniform(1.0f - limits.max_scale_delta, 1.0f + limits.max_scale_delta));
    float tx = static_cast<float>(rng.uniform(-limits.max_translate, limits.max_translate)) *
               static_cast<float>(img.width());
    float ty = static_cast<float>(rng.uniform(-limits.max_translate, limits.max_translate)) *
               static_cast<float>(img.height());
    return apply_affine(img, deg, scale, tx, ty);
}

} // namespace ssldetect
