#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssldetect/augment.hpp"
#include "test_support.hpp"

using namespace ssldetect;
using namespace ssldetect::testing;

namespace {

ImageSample make_test_image(int h, int w, uint64_t seed, int n_boxes = 0) {
    ImageSample img;
    img.source_id = "test";
    Rng rng(seed);
    img.pixels = Tensor::zeros({3, h, w});
    for (auto& v : img.pixels.values()) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < n_boxes; ++i) {
        GroundTruthBox b;
        b.cx = static_cast<float>(rng.uniform(0.3, 0.7));
        b.cy = static_cast<float>(rng.uniform(0.3, 0.7));
        b.w = static_cast<float>(rng.uniform(0.1, 0.3));
        b.h = static_cast<float>(rng.uniform(0.1, 0.3));
        img.boxes.push_back(b);
    }
    return img;
}

bool same_pixels(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

bool in_unit_range(const Tensor& t) {
    for (float v : t.values()) {
        if (v < 0.0f || v > 1.0f) return false;
    }
    return true;
}

} // namespace

TEST_CASE("random_resized_crop full-scale square input is a plain resize") {
    ImageSample img = make_test_image(40, 40, 3);
    AugmentPolicy policy;
    policy.crop_scale_lo = policy.crop_scale_hi = 1.0f;
    policy.output_size = 32;
    Rng rng(7);
    ImageSample out = random_resized_crop(img, rng, policy);
    Tensor direct = bilinear_resize(img.pixels, 32, 32);
    CHECK(same_pixels(out.pixels, direct));
}

TEST_CASE("random_resized_crop always emits output_size") {
    AugmentPolicy policy;
    policy.output_size = 24;
    Rng rng(9);
    for (int hw : {8, 17, 63, 128}) {
        ImageSample img = make_test_image(hw, hw + 5, static_cast<uint64_t>(hw));
        ImageSample out = random_resized_crop(img, rng, policy);
        CHECK(out.pixels.shape() == std::vector<int>{3, 24, 24});
    }
}

TEST_CASE("random_resized_crop is seed-deterministic") {
    ImageSample img = make_test_image(48, 48, 5);
    AugmentPolicy policy;
    policy.output_size = 32;
    Rng a(1234), b(1234);
    ImageSample o1 = random_resized_crop(img, a, policy);
    ImageSample o2 = random_resized_crop(img, b, policy);
    CHECK(same_pixels(o1.pixels, o2.pixels));
}

TEST_CASE("color_jitter zero strengths is identity") {
    ImageSample img = make_test_image(16, 16, 11);
    AugmentPolicy policy;
    policy.brightness = policy.contrast = policy.saturation = policy.hue = 0.0f;
    Rng rng(1);
    ImageSample out = color_jitter(img, rng, policy);
    CHECK(same_pixels(out.pixels, img.pixels));
}

TEST_CASE("color_jitter clamps and stays in range") {
    ImageSample img = make_test_image(16, 16, 13);
    img.pixels.data()[0] = 0.8f;
    AugmentPolicy policy;
    policy.brightness = 1.0f; // factors up to 2
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        ImageSample out = color_jitter(img, rng, policy);
        CHECK(in_unit_range(out.pixels));
    }
}

TEST_CASE("random_grayscale") {
    ImageSample img = make_test_image(8, 8, 17);
    Rng rng(3);
    ImageSample keep = random_grayscale(img, rng, 0.0f);
    CHECK(same_pixels(keep.pixels, img.pixels));

    ImageSample white;
    white.pixels = Tensor::full({3, 4, 4}, 1.0f);
    Rng rng2(4);
    ImageSample wg = random_grayscale(white, rng2, 1.0f);
    for (float v : wg.pixels.values()) CHECK(v == doctest::Approx(1.0f));

    ImageSample red;
    red.pixels = Tensor::zeros({3, 2, 2});
    for (int i = 0; i < 4; ++i) red.pixels.data()[i] = 1.0f;
    Rng rng3(5);
    ImageSample rg = random_grayscale(red, rng3, 1.0f);
    for (float v : rg.pixels.values()) CHECK(v == doctest::Approx(0.299f));
}

TEST_CASE("gaussian blur kernel properties") {
    for (float sigma : {0.1f, 0.5f, 1.0f, 2.0f}) {
        Tensor k = gaussian_blur_kernel(sigma);
        double s = 0.0;
        for (float v : k.values()) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        int n = k.dim(0);
        CHECK(n == 2 * static_cast<int>(std::ceil(3.0f * sigma)) + 1);
        for (int i = 0; i < n; ++i) CHECK(k.data()[i] == k.data()[n - 1 - i]);
    }
}

TEST_CASE("gaussian blur preserves constants and the mean") {
    ImageSample flat;
    flat.pixels = Tensor::full({3, 12, 12}, 0.42f);
    Rng rng(6);
    ImageSample out = gaussian_blur(flat, rng, 1.0f, 1.0f, 1.0f);
    for (float v : out.pixels.values()) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));

    ImageSample img = make_test_image(24, 24, 19);
    Rng rng2(7);
    ImageSample blurred = gaussian_blur(img, rng2, 1.5f, 1.5f, 1.0f);
    double m0 = 0, m1 = 0;
    for (float v : img.pixels.values()) m0 += v;
    for (float v : blurred.pixels.values()) m1 += v;
    m0 /= static_cast<double>(img.pixels.numel());
    m1 /= static_cast<double>(img.pixels.numel());
    CHECK(std::abs(m0 - m1) < 1e-5);
}

TEST_CASE("horizontal flip is an involution and mirrors boxes") {
    ImageSample img = make_test_image(10, 14, 23, 2);
    img.boxes[0].cx = 0.2f;
    Rng always(1);
    ImageSample once = horizontal_flip(img, always, 1.0f);
    CHECK(once.boxes[0].cx == doctest::Approx(0.8f));
    Rng always2(2);
    ImageSample twice = horizontal_flip(once, always2, 1.0f);
    CHECK(same_pixels(twice.pixels, img.pixels));

    Rng never(3);
    ImageSample keep = horizontal_flip(img, never, 0.0f);
    CHECK(same_pixels(keep.pixels, img.pixels));
}

TEST_CASE("make_view_pair determinism and divergence") {
    ImageSample img = make_test_image(48, 48, 29);
    AugmentPolicy policy;
    policy.output_size = 32;

    ViewPair p1 = make_view_pair(img, 777, policy);
    ViewPair p2 = make_view_pair(img, 777, policy);
    CHECK(same_pixels(p1.view_a.pixels, p2.view_a.pixels));
    CHECK(same_pixels(p1.view_b.pixels, p2.view_b.pixels));
    CHECK(p1.view_a.pixels.shape() == std::vector<int>{3, 32, 32});
    CHECK(p1.view_b.pixels.shape() == std::vector<int>{3, 32, 32});
    CHECK(p1.view_a.boxes.empty());
    CHECK(p1.source_id == img.source_id);

    int differing = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        ViewPair p = make_view_pair(img, seed, policy);
        if (!same_pixels(p.view_a.pixels, p.view_b.pixels)) ++differing;
    }
    CHECK(differing >= 99);
}

TEST_CASE("mosaic with centered split tiles four identical images") {
    ImageSample img = make_test_image(20, 20, 31);
    std::array<ImageSample, 4> quad = {img, img, img, img};
    ImageSample out = mosaic_at(quad, 20, 20, 40);
    CHECK(out.pixels.shape() == std::vector<int>{3, 40, 40});
    Tensor tile = bilinear_resize(img.pixels, 20, 20);
    const long plane = 40L * 40L;
    const long tplane = 20L * 20L;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) {
                float expect = tile.data()[c * tplane + y * 20 + x];
                CHECK(out.pixels.data()[c * plane + y * 40 + x] == expect);
                CHECK(out.pixels.data()[c * plane + y * 40 + (x + 20)] == expect);
                CHECK(out.pixels.data()[c * plane + (y + 20) * 40 + x] == expect);
                CHECK(out.pixels.data()[c * plane + (y + 20) * 40 + (x + 20)] == expect);
            }
        }
    }
}

TEST_CASE("mosaic keeps at most the input boxes, all within bounds") {
    Rng rng(37);
    for (int trial = 0; trial < 25; ++trial) {
        std::array<ImageSample, 4> quad = {
            make_test_image(24, 24, 100 + static_cast<uint64_t>(trial), 2),
            make_test_image(24, 24, 200 + static_cast<uint64_t>(trial), 1),
            make_test_image(24, 24, 300 + static_cast<uint64_t>(trial), 3),
            make_test_image(24, 24, 400 + static_cast<uint64_t>(trial), 0),
        };
        size_t total_in = 0;
        for (const auto& q : quad) total_in += q.boxes.size();
        ImageSample out = mosaic(quad, rng, 48);
        CHECK(out.boxes.size() <= total_in);
        for (const auto& b : out.boxes) {
            CHECK(b.x_min() >= -1e-6f);
            CHECK(b.y_min() >= -1e-6f);
            CHECK(b.x_max() <= 1.0f + 1e-6f);
            CHECK(b.y_max() <= 1.0f + 1e-6f);
            CHECK(b.w > 0.0f);
            CHECK(b.h > 0.0f);
        }
    }
}

TEST_CASE("affine identity limits leave the sample unchanged") {
    ImageSample img = make_test_image(20, 20, 41, 2);
    AffineLimits limits{0.0f, 0.0f, 0.0f};
    Rng rng(8);
    ImageSample out = random_affine(img, rng, limits);
    CHECK(same_pixels(out.pixels, img.pixels));
    REQUIRE(out.boxes.size() == img.boxes.size());
    for (size_t i = 0; i < out.boxes.size(); ++i) {
        CHECK(out.boxes[i].cx == doctest::Approx(img.boxes[i].cx).epsilon(1e-5));
        CHECK(out.boxes[i].w == doctest::Approx(img.boxes[i].w).epsilon(1e-5));
    }
}

TEST_CASE("pure translation moves box centers exactly") {
    ImageSample img = make_test_image(32, 32, 43, 1);
    img.boxes[0] = GroundTruthBox::from_corners(0.25f, 0.25f, 0.5f, 0.5f);
    ImageSample out = apply_affine(img, 0.0f, 1.0f, 4.0f, -2.0f);
    REQUIRE(out.boxes.size() == 1);
    CHECK(out.boxes[0].cx == doctest::Approx(img.boxes[0].cx + 4.0f / 32.0f).epsilon(1e-5));
    CHECK(out.boxes[0].cy == doctest::Approx(img.boxes[0].cy - 2.0f / 32.0f).epsilon(1e-5));
}

TEST_CASE("90 degree rotation maps a centered square box to itself") {
    ImageSample img = make_test_image(32, 32, 47, 0);
    img.boxes.push_back(GroundTruthBox::from_corners(0.25f, 0.25f, 0.75f, 0.75f));
    ImageSample out = apply_affine(img, 90.0f, 1.0f, 0.0f, 0.0f);
    REQUIRE(out.boxes.size() == 1);
    CHECK(out.boxes[0].cx == doctest::Approx(0.5f).epsilon(1e-5));
    CHECK(out.boxes[0].cy == doctest::Approx(0.5f).epsilon(1e-5));
    CHECK(out.boxes[0].w == doctest::Approx(0.5f).epsilon(1e-5));
    CHECK(out.boxes[0].h == doctest::Approx(0.5f).epsilon(1e-5));
}

TEST_CASE("pixel range invariant across full chains") {
    AugmentPolicy policy;
    policy.output_size = 24;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        ImageSample img = make_test_image(36, 36, 1000 + seed, 2);
        ViewPair p = make_view_pair(img, seed, policy);
        CHECK(in_unit_range(p.view_a.pixels));
        CHECK(in_unit_range(p.view_b.pixels));

        Rng rng(seed);
        AffineLimits limits{25.0f, 0.2f, 0.3f};
        ImageSample aff = random_affine(img, rng, limits);
        CHECK(in_unit_range(aff.pixels));
        for (const auto& b : aff.boxes) {
            CHECK(b.x_min() >= -1e-6f);
            CHECK(b.x_max() <= 1.0f + 1e-6f);
        }
    }
}

TEST_CASE("ppm round trip is byte exact") {
    ImageSample img = make_test_image(15, 23, 51);
    // quantize to the format's precision first
    for (auto& v : img.pixels.values()) {
        v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    }
    auto tmp = std::filesystem::temp_directory_path() / "ssldetect_test.ppm";
    write_ppm(tmp, img.pixels);
    Tensor back = read_ppm(tmp);
    REQUIRE(back.shape() == img.pixels.shape());
    for (int64_t i = 0; i < back.numel(); ++i) {
        CHECK(back.data()[i] == doctest::Approx(img.pixels.data()[i]).epsilon(1e-6));
    }
    std::filesystem::remove(tmp);
}
