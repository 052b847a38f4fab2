#pragma once

#include <array>
#include <string>
#include <vector>

#include "ssldetect/params.hpp"
#include "ssldetect/rng.hpp"
#include "ssldetect/tensor.hpp"

namespace ssldetect {

enum class Activation { silu, relu };
enum class BottleneckStyle { residual_csp, c2f }; // "v5-like" vs "v8-like"
enum class InitScheme { fan_in, glorot };

// Conv (bias-free) + batch norm + activation; the basic building block.
struct ConvBn {
    Tensor w, gamma, beta, run_mean, run_var;
    int stride = 1, pad = 0;
    Activation act = Activation::silu;
    InitScheme scheme = InitScheme::fan_in;

    Tensor forward(const Tensor& x, bool train) const;
    void init(Rng& rng);
};

ConvBn make_conv_bn(ParamStore& store, const std::string& name, int cin, int cout, int k,
                    int stride, Activation act, InitScheme scheme, Rng& rng);

struct Bottleneck {
    ConvBn cv1, cv2;
    bool residual = true;
    Tensor forward(const Tensor& x, bool train) const;
};

// Cross-stage-partial block. residual_csp: two 1x1 projections, bottleneck
// chain on one half, 1x1 fuse of the concat. c2f: single 1x1 expand, split,
// chained bottlenecks with all intermediates concatenated before the fuse.
struct CspBlock {
    BottleneckStyle style = BottleneckStyle::c2f;
    ConvBn cv1, cv2, cv3; // cv3 unused for c2f
    std::vector<Bottleneck> blocks;
    int channels = 0;
    Tensor forward(const Tensor& x, bool train) const;
};

struct BackboneConfig {
    int stem_channels = 16;
    std::vector<int> stage_channels = {32, 64, 128, 256};
    std::vector<int> blocks_per_stage = {1, 2, 2, 1};
    float width_multiplier = 1.0f;
    float depth_multiplier = 1.0f;
    BottleneckStyle style = BottleneckStyle::c2f;
    Activation act = Activation::silu;

    void validate() const;
    // Effective extents after the multipliers.
    int stem() const;
    std::vector<int> stages() const;
    std::vector<int> blocks() const;
};

// Stride-2 stem plus four stride-2 stages; the last three stage outputs are
// the multi-scale features (strides 8, 16, 32 relative to the input).
struct Backbone {
    BackboneConfig config;
    ConvBn stem;
    struct Stage {
        ConvBn down;
        CspBlock csp;
    };
    std::vector<Stage> stages;

    // [N,3,H,W] -> {stride 8, stride 16, stride 32}; H, W divisible by 32.
    std::array<Tensor, 3> forward_features(const Tensor& batch, bool train) const;
    int deepest_channels() const { return config.stages().back(); }
    void init(Rng& rng);
};

Backbone build_backbone(ParamStore& store, const BackboneConfig& config, Rng& rng);

// Two-layer MLP on the pooled deepest feature; output rows are
// L2-normalized by encode().
struct ProjectionHead {
    Tensor w1, b1, w2, b2;
    Activation act = Activation::silu;
    void init(Rng& rng);
};

ProjectionHead make_projection_head(ParamStore& store, int in_dim, int hidden, int out_dim,
                                    Activation act, Rng& rng);

// Deepest feature map -> global average pool -> MLP -> unit-norm rows [N,d].
Tensor encode(const Backbone& backbone, const ProjectionHead& head, const Tensor& batch,
              bool train);

// Namespace prefixes inside a ParamStore.
inline constexpr const char* kBackbonePrefix = "backbone.";
inline constexpr const char* kProjectionPrefix = "projection.";

} // namespace ssldetect
