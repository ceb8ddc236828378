#pragma once

// Forward/backward pairs for the layers the dense network is built from.
// All functions are pure: outputs depend only on the arguments, and loops
// run in a fixed order so repeated calls are bit-identical.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/tensor.hpp"

namespace dnetpad {

// Gradients produced by a layer's backward pass. `params` is keyed by
// parameter name ("weight", "bias"); each entry has the shape of the
// parameter it differentiates, and `input` has the shape of the input.
struct LayerGrads {
    Tensor input;
    std::map<std::string, Tensor> params;
};

struct Conv2dSpec {
    std::size_t stride = 1;
    std::size_t pad = 0;
};

// Cross-correlation with zero padding.
// input [N,C,H,W], kernel [F,C,kh,kw], bias [F] -> [N,F,H',W'] with
// H' = (H + 2*pad - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dSpec spec);
LayerGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                           Conv2dSpec spec);

Tensor relu(const Tensor& input);
// Gradient flows only where input > 0 (subgradient 0 at exactly 0).
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

enum class PoolMode { max, avg };

struct Pool2dSpec {
    PoolMode mode = PoolMode::max;
    std::size_t kernel = 2;
    std::size_t stride = 2;
};

// Unpadded window pooling. Max routes the gradient to the first maximum in
// row-major window order; avg spreads it uniformly.
Tensor pool2d(const Tensor& input, Pool2dSpec spec);
Tensor pool2d_backward(const Tensor& input, const Tensor& grad_output, Pool2dSpec spec);

// Channel-axis concatenation in argument order; all inputs share N, H, W.
Tensor concat_channels(std::span<const Tensor* const> inputs);
Tensor concat_channels(const std::vector<Tensor>& inputs);
// Splits a gradient of the concatenation back into per-input slices.
std::vector<Tensor> concat_channels_backward(const Tensor& grad_output,
                                             std::span<const std::size_t> channel_counts);

// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& input, const Tensor& grad_output);

// [N,D] x [K,D]^T + [K] -> [N,K].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
LayerGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output);

struct SoftmaxCrossEntropy {
    double loss = 0.0;   // mean over the batch of -log p[label]
    Tensor probs;        // [N,K], rows sum to 1
    Tensor grad_logits;  // (probs - onehot) / N
};

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

} // namespace dnetpad
