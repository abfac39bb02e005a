#pragma once

#include "oiqa/model.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa::layers {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
};

/// Zero-padded cross-correlation: x C_in×H×W, w C_out×C_in×k×k, b C_out.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);

struct ConvGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, ConvGeometry g, const Tensor& grad_out,
                          bool want_params = true);

/// y = W vec(x) + b, returned as a rank-1 tensor.
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
ConvGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, bool want_params = true);

double activate(LayerKind kind, double v);
double activate_derivative(LayerKind kind, double v);
Tensor activation_forward(LayerKind kind, const Tensor& x);
Tensor activation_backward(LayerKind kind, const Tensor& x, const Tensor& grad_out);

/// Average pooling onto an n×n grid, n = min(H, W); output cell i covers
/// rows [floor(i H / n), ceil((i + 1) H / n)).
Tensor adaptive_square_pool_forward(const Tensor& x);
Tensor adaptive_square_pool_backward(const Shape& input_shape, const Tensor& grad_out);

/// Unpadded average pooling; kernel 0 averages each channel globally.
Tensor avg_pool_forward(const Tensor& x, std::size_t kernel, std::size_t stride);
Tensor avg_pool_backward(const Shape& input_shape, std::size_t kernel, std::size_t stride, const Tensor& grad_out);

}  // namespace oiqa::layers
