#pragma once

#include <vector>

#include "lexseg/tensor.hpp"

// Minimal static-graph CNN kernels: forward ops plus hand-written adjoints.
// Layouts: activations [N,C,H,W], conv weights [O,I,kh,kw], linear weights
// [O,F]. Convolutions are im2col + GEMM.
namespace lexseg::nn {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, const std::vector<int>& x_shape,
                             const ConvSpec& spec);
void conv2d_backward_params(const Tensor& gy, const Tensor& x, const ConvSpec& spec, Tensor& gw,
                            Tensor& gb);

Tensor relu(const Tensor& x);
// gx = gy where pre-activation was positive.
Tensor relu_backward(const Tensor& gy, const Tensor& x_pre);
// Guided rule: gx = gy where pre-activation was positive AND gy is positive.
Tensor relu_backward_guided(const Tensor& gy, const Tensor& x_pre);

// 2x2 max pooling with stride 2; odd trailing rows/cols are dropped.
Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>& argmax);
Tensor maxpool2_backward(const Tensor& gy, const std::vector<std::int32_t>& argmax,
                         const std::vector<int>& x_shape);

Tensor global_avg_pool(const Tensor& x);                                    // [N,C,H,W] -> [N,C]
Tensor global_avg_pool_backward(const Tensor& gy, const std::vector<int>& x_shape);

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);           // [N,F] -> [N,O]
Tensor linear_backward_input(const Tensor& gy, const Tensor& w);
void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb);

// Bilinear resample (half-pixel centers). Works on [N,C,H,W].
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& gy, const std::vector<int>& x_shape);

// Channel concatenation along dim 1.
Tensor concat_channels(const std::vector<const Tensor*>& xs);
std::vector<Tensor> split_channels(const Tensor& gy, const std::vector<int>& widths);

std::vector<double> softmax(const std::vector<double>& logits);

// Mean per-pixel 2-class cross entropy. logits [N,2,H,W], target [N,H,W] in {0,1}.
// Returns the loss; grad_logits (same shape as logits) is filled when non-null.
double softmax2_cross_entropy(const Tensor& logits, const std::vector<std::uint8_t>& target,
                              Tensor* grad_logits);

// Per-pixel foreground probability from 2-channel logits: [N,2,H,W] -> [N,H,W].
Tensor softmax2_foreground(const Tensor& logits);

}  // namespace lexseg::nn
