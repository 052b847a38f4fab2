#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssldetect/boxes.hpp"
#include "ssldetect/tensor.hpp"

namespace ssldetect {

// One image with its annotations. Pixels are [3,H,W] floats in [0,1];
// boxes are normalized to the image extent, so they survive resizing as-is.
struct ImageSample {
    Tensor pixels;
    std::vector<GroundTruthBox> boxes;
    std::string source_id;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

// Binary PPM (P6, maxval 255). Uncompressed and byte-exact, which keeps
// dataset generation and all fixture comparisons reproducible.
void write_ppm(const std::filesystem::path& path, const Tensor& chw);
Tensor read_ppm(const std::filesystem::path& path);

// Bilinear resize with half-pixel centers.
Tensor bilinear_resize(const Tensor& chw, int out_h, int out_w);

// Bilinear resample of the axis-aligned source window [x0,y0,x1,y1) to
// out_h x out_w.
Tensor crop_and_resize(const Tensor& chw, float x0, float y0, float x1, float y1, int out_h,
                       int out_w);

} // namespace ssldetect
