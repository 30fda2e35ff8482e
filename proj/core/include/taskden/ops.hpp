#pragma once

#include <cstddef>

#include "taskden/tensor.hpp"

// Differentiable tensor operations. Each function records a node in the
// active graph when grad mode is on and some input requires a gradient.
//
// Broadcasting (add/sub/mul/div): shapes are aligned from the trailing
// dimension; missing leading dimensions count as 1 and each aligned pair of
// extents must be equal or contain a 1. Anything else throws ShapeError.

namespace taskden {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
};

/// Output extent of a convolution: (in + 2p - d(k-1) - 1) / s + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dOptions& opts);

/// Cross-correlation of an NCHW input with an OIKK weight. `bias` may be an
/// undefined tensor. Output is N x O x Ho x Wo with the extent formula above.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const Conv2dOptions& opts = {});

/// Affine map N x F -> N x O with weight F x O and bias O (bias may be undefined).
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor leaky_relu(const Tensor& x, Real slope);
Tensor sigmoid(const Tensor& x);

/// Per-channel batch normalization of an NCHW tensor.
///
/// In training mode the batch statistics (biased variance) normalize the
/// input and the running buffers are updated in place with
/// r <- (1 - momentum) r + momentum * batch_stat (unbiased variance for
/// running_var). In eval mode the running buffers are used and not modified.
Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, Real momentum = Real(0.1), Real epsilon = Real(1e-5));

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, Real factor);
Tensor add_scalar(const Tensor& x, Real value);
Tensor square(const Tensor& x);
/// |x| with subgradient 0 at exactly 0.
Tensor abs(const Tensor& x);
/// Clamp to [lo, hi]; gradient passes only where lo <= x <= hi.
Tensor clamp_values(const Tensor& x, Real lo, Real hi);

/// Reductions over all elements; the result has shape {1}.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Concatenates two NCHW tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Non-overlapping window average; H and W must be divisible by `window`.
Tensor avg_pool2d(const Tensor& x, std::size_t window);
/// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest2d(const Tensor& x, std::size_t factor);
/// N x C x H x W -> N x C.
Tensor global_avg_pool2d(const Tensor& x);

}  // namespace taskden
