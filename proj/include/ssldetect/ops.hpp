#pragma once

#include <optional>
#include <vector>

#include "ssldetect/tape.hpp"
#include "ssldetect/tensor.hpp"

// Numeric kernels. Every op validates shapes, computes its forward result,
// and (when a tape is active and an input requires grad) records a backward
// rule. Storage is float32; reductions (pooling, norms, sums) accumulate in
// float64 so finite-difference checks stay tight.
namespace ssldetect::ops {

// --- network kernels -------------------------------------------------------

// x: [N,C,H,W], w: [O,C,k,k], bias: [O] or undefined. Output spatial size is
// floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);

// Per-channel normalization over (N,H,W). Train mode uses batch statistics
// and updates running_mean/running_var in place (EMA with the given
// momentum, unbiased variance); eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool train, float momentum = 0.1f, float eps = 1e-5f);

Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// [N,C,H,W] -> [N,C]; each output element is the mean over its HxW plane.
Tensor global_avg_pool(const Tensor& x);

// x: [N,K], w: [M,K], bias: [M] or undefined -> [N,M].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Scales each row of [N,K] to unit Euclidean norm. The norm is floored at
// 1e-12 so degenerate rows stay finite instead of erroring.
Tensor l2_normalize_rows(const Tensor& x);

Tensor upsample_nearest2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Channels [begin, end) of an NCHW tensor.
Tensor slice_channels(const Tensor& x, int begin, int end);

// [N,C,H,W] -> [(N*H*W), C]: one row per spatial cell, batch-major then
// row-major over cells. Inverse permutation on the way back.
Tensor cells_to_rows(const Tensor& x);

// Stacks matrices with equal column counts along rows.
Tensor concat_rows(const std::vector<Tensor>& parts);

// rows: [M,K] -> [P,K] selecting the given row indices (duplicates allowed;
// backward scatter-adds).
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);

// Elements offset, offset+stride, offset+2*stride, ... of a flat tensor.
Tensor stride_slice(const Tensor& x, int offset, int stride);

// Same elements, new shape (row-major order preserved).
Tensor reshape(const Tensor& x, std::vector<int> new_shape);

// --- elementwise / reductions ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor clamp_min_scalar(const Tensor& a, float lo);
Tensor atan_of(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Elementwise binary cross-entropy with logits; targets take no gradient.
// Numerically stable form: max(x,0) - x*t + log(1 + exp(-|x|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// logits: [P,B] -> [P]; row-wise softmax expectation of the bin index,
// sum_b b * softmax(logits)_b.
Tensor bin_expectation(const Tensor& logits);

// logits: [P,B], targets: P values in [0, B-1]. Row-wise cross-entropy on
// the two bins bracketing each target: with l = floor(t), r = l+1,
//   loss = -((r - t) * ln S_l + (t - l) * ln S_r),
// and -ln S_t when t is an exact integer. Returns [P].
Tensor dfl_loss_rows(const Tensor& logits, const std::vector<float>& targets);

} // namespace ssldetect::ops
