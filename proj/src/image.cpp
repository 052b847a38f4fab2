#include "ssldetect/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace ssldetect {

void write_ppm(const std::filesystem::path& path, const Tensor& chw) {
    check(chw.ndim() == 3 && chw.dim(0) == 3, "write_ppm expects [3,H,W], got ",
          shape_str(chw.shape()));
    int h = chw.dim(1), w = chw.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(concat("cannot open ", path.string(), " for writing"));
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    const long plane = static_cast<long>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = chw.data()[c * plane + static_cast<long>(y) * w + x];
                v = std::clamp(v, 0.0f, 1.0f);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(v * 255.0f));
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError(concat("short write to ", path.string()));
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(concat("cannot open ", path.string()));
    std::string magic;
    f >> magic;
    if (magic != "P6") throw IoError(concat(path.string(), ": unsupported format '", magic,
                                            "' (binary P6 expected)"));
    auto skip_ws_comments = [&f]() {
        for (;;) {
            int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
    };
    skip_ws_comments();
    int w = 0, h = 0, maxval = 0;
    f >> w;
    skip_ws_comments();
    f >> h;
    skip_ws_comments();
    f >> maxval;
    if (!f || w <= 0 || h <= 0) throw IoError(concat(path.string(), ": malformed PPM header"));
    if (maxval != 255) throw IoError(concat(path.string(), ": unsupported maxval ", maxval));
    f.get(); // single whitespace after maxval
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw IoError(concat(path.string(), ": truncated pixel data"));
    }
    Tensor t = Tensor::zeros({3, h, w});
    const long plane = static_cast<long>(h) * w;
    for (long i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            t.data()[c * plane + i] = static_cast<float>(raw[static_cast<size_t>(i) * 3 + c]) / 255.0f;
        }
    }
    return t;
}

Tensor crop_and_resize(const Tensor& chw, float x0, float y0, float x1, float y1, int out_h,
                       int out_w) {
    check(chw.ndim() == 3, "crop_and_resize expects CHW, got ", shape_str(chw.shape()));
    check(x1 > x0 && y1 > y0, "crop_and_resize window is empty");
    int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out = Tensor::zeros({c, out_h, out_w});
    float sx = (x1 - x0) / static_cast<float>(out_w);
    float sy = (y1 - y0) / static_cast<float>(out_h);
    const long plane = static_cast<long>(h) * w;
    const long oplane = static_cast<long>(out_h) * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        float fy = y0 + (static_cast<float>(oy) + 0.5f) * sy - 0.5f;
        fy = std::clamp(fy, 0.0f, static_cast<float>(h - 1));
        int iy0 = static_cast<int>(fy);
        int iy1 = std::min(iy0 + 1, h - 1);
        float wy = fy - static_cast<float>(iy0);
        for (int ox = 0; ox < out_w; ++ox) {
            float fx = x0 + (static_cast<float>(ox) + 0.5f) * sx - 0.5f;
            fx = std::clamp(fx, 0.0f, static_cast<float>(w - 1));
            int ix0 = static_cast<int>(fx);
            int ix1 = std::min(ix0 + 1, w - 1);
            float wx = fx - static_cast<float>(ix0);
            for (int ci = 0; ci < c; ++ci) {
                const float* p = chw.data() + ci * plane;
                float top = p[iy0 * w + ix0] * (1 - wx) + p[iy0 * w + ix1] * wx;
                float bot = p[iy1 * w + ix0] * (1 - wx) + p[iy1 * w + ix1] * wx;
                out.data()[ci * oplane + static_cast<long>(oy) * out_w + ox] =
                    top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& chw, int out_h, int out_w) {
    return crop_and_resize(chw, 0.0f, 0.0f, static_cast<float>(chw.dim(2)),
                           static_cast<float>(chw.dim(1)), out_h, out_w);
}

} // namespace ssldetect
