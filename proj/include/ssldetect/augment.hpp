#pragma once

#include <array>

#include "ssldetect/image.hpp"
#include "ssldetect/rng.hpp"

namespace ssldetect {

// Stochastic transform strengths for the two-view pretraining pipeline.
// Defaults follow the standard contrastive recipe; all fields are
// config-exposed.
struct AugmentPolicy {
    float crop_scale_lo = 0.2f;
    float crop_scale_hi = 1.0f;
    float brightness = 0.4f;
    float contrast = 0.4f;
    float saturation = 0.4f;
    float hue = 0.1f;
    float grayscale_prob = 0.2f;
    float blur_prob = 0.5f;
    float blur_sigma_lo = 0.1f;
    float blur_sigma_hi = 2.0f;
    float flip_prob = 0.5f;
    int output_size = 64;

    void validate() const;
};

// Two independently augmented views of one source image; boxes are dropped.
struct ViewPair {
    ImageSample view_a;
    ImageSample view_b;
    std::string source_id;
};

struct AffineLimits {
    float max_rotate_deg = 10.0f;
    float max_translate = 0.1f; // fraction of image size
    float max_scale_delta = 0.2f;
};

// Boxes whose clipped extent falls below this side length (pixels) are
// dropped by mosaic and affine.
constexpr float kMinBoxSidePx = 2.0f;

ImageSample random_resized_crop(const ImageSample& img, Rng& rng, const AugmentPolicy& policy);
ImageSample color_jitter(const ImageSample& img, Rng& rng, const AugmentPolicy& policy);
ImageSample random_grayscale(const ImageSample& img, Rng& rng, float prob);
ImageSample gaussian_blur(const ImageSample& img, Rng& rng, float sigma_lo, float sigma_hi,
                          float prob);
ImageSample horizontal_flip(const ImageSample& img, Rng& rng, float prob);

// Full pipeline (crop, flip, jitter, grayscale, blur) applied twice with
// independent sub-seeds derived from seed.
ViewPair make_view_pair(const ImageSample& img, uint64_t seed, const AugmentPolicy& policy);

// 2x2 collage of four labeled samples around a random center; boxes are
// remapped into the collage, clipped to their tile, and dropped when tiny.
ImageSample mosaic(const std::array<ImageSample, 4>& samples, Rng& rng, int output_size);
ImageSample mosaic_at(const std::array<ImageSample, 4>& samples, int cx, int cy, int output_size);

ImageSample random_affine(const ImageSample& img, Rng& rng, const AffineLimits& limits);

// Deterministic cores (exposed for tests; the random_* wrappers draw the
// parameters and delegate here).
Tensor gaussian_blur_kernel(float sigma);
ImageSample apply_affine(const ImageSample& img, float rotate_deg, float scale, float tx_px,
                         float ty_px);

} // namespace ssldetect
