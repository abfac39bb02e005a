#pragma once

#include <cstdint>
#include <vector>

#include "oiqa/linalg.hpp"
#include "oiqa/model.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

/// Q = (I - A)(I + A)^-1 with A = W - W^H. Q is unitary for any finite W
/// because a skew-Hermitian A has a purely imaginary spectrum.
ComplexMatrix cayley_orthogonalize(const ComplexMatrix& w_hat);

/// Free parameters of an orthogonal convolution: a real c×c×k×k kernel,
/// zero-embedded (wrapping modulo n) into the n×n circular grid.
struct CayleyConvParams {
    Tensor kernel;
    std::size_t n = 0;

    std::size_t channels() const { return kernel.dim(0); }
};

struct OrthConvGrads {
    Tensor input;
    Tensor kernel;
};

/// Per-frequency unitary operators of a Cayley convolution, plus the inverses
/// (I + A_f)^-1 retained for the backward pass.
class CayleyOperator {
public:
    CayleyOperator() = default;
    explicit CayleyOperator(const CayleyConvParams& params);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return n_; }
    std::size_t kernel_size() const noexcept { return k_; }
    const ComplexMatrix& q(std::size_t frequency) const { return q_.at(frequency); }
    std::size_t frequencies() const noexcept { return q_.size(); }

    /// max over frequencies of max_ij |(Q^H Q - I)_ij|.
    double orthogonality_residual() const;

    /// Circular orthogonal convolution of a c×n×n input.
    Tensor apply(const Tensor& x) const;

    /// Gradients w.r.t. the input and the spatial kernel given dL/d(output).
    OrthConvGrads backward(const Tensor& x, const Tensor& grad_out, bool want_kernel = true) const;

private:
    void require_input(const Tensor& x) const;

    std::size_t channels_ = 0;
    std::size_t n_ = 0;
    std::size_t k_ = 0;
    std::vector<ComplexMatrix> q_;
    std::vector<ComplexMatrix> s_;
};

/// Per-frequency kernel spectrum W_f (c_out×c_in) of a c_out×c_in×k×k kernel
/// under circular semantics on an n×n grid, frequencies in row-major order.
std::vector<ComplexMatrix> kernel_spectrum(const Tensor& kernel, std::size_t n);

Tensor orth_conv_forward(const CayleyConvParams& params, const Tensor& x);

struct RobustBlockSpec {
    std::size_t insert_position = 0;
    std::size_t channels = 0;      // C
    std::size_t mid_channels = 0;  // floor(C / 2)
    std::size_t size = 0;          // n = min(H, W)
};

/// Spec for a block receiving a C×H×W input. Throws ConfigError when C < 2.
RobustBlockSpec make_robust_block_spec(const Shape& input_shape, std::size_t position);

inline constexpr std::size_t kCayleyKernelSize = 3;

/// adaptive square pool -> 1×1 conv C -> floor(C/2) -> zero-pad channels back
/// to C -> Cayley convolution on C channels.
Tensor robust_block_forward(const RobustBlockSpec& spec, const Tensor& reduce_weight, const CayleyOperator& orth,
                            const Tensor& x);

/// Copy of `model` with a freshly initialised robust block inserted before
/// layer `position`, which must be a conv2d layer. Existing parameters are
/// carried over untouched. The 1×1 reduction starts with orthonormal rows and
/// the Cayley kernel with seeded Gaussian entries.
ModelGraph insert_robust_block(const ModelGraph& model, std::size_t position, std::uint64_t seed);

/// Copy of `model` with layer `index` removed (its parameters dropped).
ModelGraph remove_layer(const ModelGraph& model, std::size_t index);

}  // namespace oiqa
