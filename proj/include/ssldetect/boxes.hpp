#pragma once

#include <string>
#include <vector>

namespace ssldetect {

// Annotated box in normalized center format. Single-class task: class_id is
// always 0; kept so label files round-trip verbatim.
struct GroundTruthBox {
    float cx = 0, cy = 0, w = 0, h = 0;
    int class_id = 0;

    float x_min() const { return cx - 0.5f * w; }
    float y_min() const { return cy - 0.5f * h; }
    float x_max() const { return cx + 0.5f * w; }
    float y_max() const { return cy + 0.5f * h; }

    static GroundTruthBox from_corners(float x0, float y0, float x1, float y1) {
        GroundTruthBox b;
        b.cx = 0.5f * (x0 + x1);
        b.cy = 0.5f * (y0 + y1);
        b.w = x1 - x0;
        b.h = y1 - y0;
        return b;
    }
};

// Scored prediction in pixel corner format.
struct Detection {
    float x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    float score = 0;
};

// Pixel-space ground truth for evaluation (converted from normalized form at
// a known resolution).
struct PixelBox {
    float x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

inline PixelBox to_pixels(const GroundTruthBox& b, float width, float height) {
    return {b.x_min() * width, b.y_min() * height, b.x_max() * width, b.y_max() * height};
}

} // namespace ssldetect
