#pragma once

#include <cstddef>
#include <vector>

#include "vtseg/rng.hpp"
#include "vtseg/tensor.hpp"

namespace vtseg::nn {

// Differentiable primitives used by the network builders. Every operation is
// a pure function of its inputs; the *_backward companions take the upstream
// gradient plus whatever forward values they need and return exact analytic
// gradients. All math is double precision.

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) over 2 or 3 spatial axes.
//
//   input   (N, Cin,  spatial...)
//   weights (Cout, Cin, kernel...)   kernel rank equals the spatial rank
//   bias    (Cout)
//
// Pad::same requires stride 1 and odd kernels and preserves the spatial
// shape (zero fill); Pad::valid applies no padding and requires the strides
// to tile the input exactly ((in - k) divisible by stride). Strided valid
// convolution is what the patch embedding uses (kernel == stride).
enum class Pad { same, valid };

TensorND conv_nd(const TensorND& input, const TensorND& weights, const TensorND& bias,
                 std::size_t stride = 1, Pad padding = Pad::same);

struct ConvGrads {
  TensorND input;
  TensorND weights;
  TensorND bias;
};
ConvGrads conv_nd_backward(const TensorND& grad_out, const TensorND& input,
                           const TensorND& weights, std::size_t stride = 1,
                           Pad padding = Pad::same);

// Transposed convolution (the adjoint map), used for learned upsampling.
//
//   input   (N, Cin, spatial...)
//   weights (Cin, Cout, kernel...)
//   output  (N, Cout, (in-1)*stride + k ...)
//
// With kernel == stride (the only configuration the builders use) this
// upsamples each spatial axis by exactly the stride.
TensorND tconv_nd(const TensorND& input, const TensorND& weights, const TensorND& bias,
                  std::size_t stride);
ConvGrads tconv_nd_backward(const TensorND& grad_out, const TensorND& input,
                            const TensorND& weights, std::size_t stride);

// Max pooling by an integer factor per spatial axis (dims must divide).
// `argmax` receives, per output element, the flat input index of the winning
// voxel (first occurrence on ties), which is all the backward pass needs.
TensorND maxpool_nd(const TensorND& input, std::size_t factor,
                    std::vector<std::size_t>& argmax);
TensorND maxpool_nd_backward(const TensorND& grad_out,
                             const std::vector<std::size_t>& argmax,
                             const std::vector<std::size_t>& input_shape);

// Elementwise activations.
TensorND relu(const TensorND& x);
TensorND relu_backward(const TensorND& grad_out, const TensorND& pre_activation);
TensorND sigmoid(const TensorND& x);
// Takes the forward *output* y and uses dy/dx = y (1 - y).
TensorND sigmoid_backward(const TensorND& grad_out, const TensorND& output);

// Inverted dropout: each kept element is scaled by 1/(1-rate) so the
// expected activation is unchanged; the same mask multiplies the gradient.
// rate must lie in [0, 1); rate 0 yields an all-ones mask.
TensorND dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng);
TensorND hadamard(const TensorND& a, const TensorND& b);

// Channel concatenation (axis 1) and its splitting backward.
TensorND concat_channels(const TensorND& a, const TensorND& b);
void split_channels(const TensorND& grad, std::size_t channels_a, TensorND& grad_a,
                    TensorND& grad_b);

// Token-matrix helpers for the transformer encoder; operands are rank-2
// (rows, cols).
TensorND matmul(const TensorND& a, const TensorND& b);     // (m,k) x (k,n)
TensorND matmul_at(const TensorND& a, const TensorND& b);  // aT b: (k,m)T x (k,n)
TensorND matmul_bt(const TensorND& a, const TensorND& b);  // a bT: (m,k) x (n,k)T

// Affine map on rows: y = x W + b with x (m,k), W (k,n), b (n).
TensorND linear(const TensorND& x, const TensorND& w, const TensorND& b);
struct LinearGrads {
  TensorND input;
  TensorND weights;
  TensorND bias;
};
LinearGrads linear_backward(const TensorND& grad_out, const TensorND& x,
                            const TensorND& w);

// Per-row normalization over the feature axis with learned scale/shift.
TensorND layernorm(const TensorND& x, const TensorND& gamma, const TensorND& beta,
                   double eps = 1e-5);
struct LayerNormGrads {
  TensorND input;
  TensorND gamma;
  TensorND beta;
};
LayerNormGrads layernorm_backward(const TensorND& grad_out, const TensorND& x,
                                  const TensorND& gamma, const TensorND& beta,
                                  double eps = 1e-5);

// Row-wise softmax (max-shifted for stability) and its backward given the
// forward output y: dx_i = y_i (g_i - sum_j g_j y_j) per row.
TensorND softmax_rows(const TensorND& x);
TensorND softmax_rows_backward(const TensorND& grad_out, const TensorND& y);

// Elementwise utilities.
TensorND add(const TensorND& a, const TensorND& b);
TensorND scale(const TensorND& a, double s);

}  // namespace vtseg::nn
