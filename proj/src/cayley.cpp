#include "oiqa/cayley.hpp"

#include <cmath>
#include <numbers>

#include "oiqa/fourier.hpp"
#include "oiqa/layers.hpp"
#include "oiqa/random.hpp"

namespace oiqa {

ComplexMatrix cayley_orthogonalize(const ComplexMatrix& w_hat) {
    if (!w_hat.square()) throw ShapeError("cayley_orthogonalize: matrix must be square");
    const ComplexMatrix a = w_hat - w_hat.adjoint();
    const ComplexMatrix eye = ComplexMatrix::identity(w_hat.rows());
    return (eye - a) * cinv(eye + a);
}

namespace {

std::vector<complex> unit_roots(std::size_t n, double sign) {
    std::vector<complex> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

// Gathers channel vectors at one frequency from a c×n×n spectrum.
std::vector<complex> gather(std::span<const complex> spectrum, std::size_t channels, std::size_t plane, std::size_t f) {
    std::vector<complex> v(channels);
    for (std::size_t c = 0; c < channels; ++c) v[c] = spectrum[c * plane + f];
    return v;
}

}  // namespace

std::vector<ComplexMatrix> kernel_spectrum(const Tensor& kernel, std::size_t n) {
    if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3))
        throw ShapeError("kernel_spectrum: expected c_out×c_in×k×k kernel, got " + shape_string(kernel.shape()));
    if (n == 0) throw ShapeError("kernel_spectrum: grid size must be positive");
    const std::size_t co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
    const auto roots = unit_roots(n, -1.0);
    std::vector<ComplexMatrix> out(n * n, ComplexMatrix(co, ci));
    for (std::size_t fy = 0; fy < n; ++fy) {
        for (std::size_t fx = 0; fx < n; ++fx) {
            ComplexMatrix& m = out[fy * n + fx];
            for (std::size_t o = 0; o < co; ++o) {
                for (std::size_t i = 0; i < ci; ++i) {
                    complex acc{};
                    for (std::size_t u = 0; u < k; ++u)
                        for (std::size_t v = 0; v < k; ++v)
                            acc += kernel[((o * ci + i) * k + u) * k + v] * roots[(fy * u + fx * v) % n];
                    m(o, i) = acc;
                }
            }
        }
    }
    return out;
}

CayleyOperator::CayleyOperator(const CayleyConvParams& params) : n_(params.n) {
    const Tensor& kernel = params.kernel;
    if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1))
        throw ShapeError("CayleyOperator: kernel must be c×c×k×k, got " + shape_string(kernel.shape()));
    kernel.require_finite("CayleyOperator");
    channels_ = kernel.dim(0);
    k_ = kernel.dim(2);
    const auto spectrum = kernel_spectrum(kernel, n_);
    const ComplexMatrix eye = ComplexMatrix::identity(channels_);
    q_.reserve(spectrum.size());
    s_.reserve(spectrum.size());
    for (const auto& w_hat : spectrum) {
        const ComplexMatrix a = w_hat - w_hat.adjoint();
        ComplexMatrix s = cinv(eye + a);
        q_.push_back((eye - a) * s);
        s_.push_back(std::move(s));
    }
}

double CayleyOperator::orthogonality_residual() const {
    const ComplexMatrix eye = ComplexMatrix::identity(channels_);
    double worst = 0.0;
    for (const auto& q : q_) worst = std::max(worst, max_abs_diff(q.adjoint() * q, eye));
    return worst;
}

void CayleyOperator::require_input(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(1) != x.dim(2))
        throw ShapeError("orthogonal convolution needs a square C×n×n input (pool first), got " +
                         shape_string(x.shape()));
    if (x.dim(0) != channels_ || x.dim(1) != n_)
        throw ShapeError("orthogonal convolution configured for " + std::to_string(channels_) + "×" +
                         std::to_string(n_) + "×" + std::to_string(n_) + ", got " + shape_string(x.shape()));
}

Tensor CayleyOperator::apply(const Tensor& x) const {
    require_input(x);
    const std::size_t plane = n_ * n_;
    const Tensor xf = dft2(x);
    const auto xs = xf.cvalues();
    Tensor yf(x.shape(), DType::complex128);
    auto ys = yf.cvalues();
    for (std::size_t f = 0; f < plane; ++f) {
        const auto v = gather(xs, channels_, plane, f);
        const auto y = q_[f] * std::span<const complex>(v);
        for (std::size_t c = 0; c < channels_; ++c) ys[c * plane + f] = y[c];
    }
    return idft2(yf);
}

OrthConvGrads CayleyOperator::backward(const Tensor& x, const Tensor& grad_out, bool want_kernel) const {
    require_input(x);
    require_shape(grad_out, x.shape(), "CayleyOperator::backward");
    const std::size_t c = channels_, plane = n_ * n_;
    const Tensor gf = dft2(grad_out);
    const auto gs = gf.cvalues();

    // Input gradient: the adjoint of a unitary per-frequency map is Q^H.
    Tensor hf(x.shape(), DType::complex128);
    auto hs = hf.cvalues();
    for (std::size_t f = 0; f < plane; ++f) {
        const auto g = gather(gs, c, plane, f);
        for (std::size_t i = 0; i < c; ++i) {
            complex acc{};
            for (std::size_t o = 0; o < c; ++o) acc += std::conj(q_[f](o, i)) * g[o];
            hs[i * plane + f] = acc;
        }
    }
    OrthConvGrads grads{idft2(hf), Tensor()};
    if (!want_kernel) return grads;

    // dL/dQ_f = G_f X_f^H / N is rank one, so dL/dA_f = -((I + Q)^H G_f)(S X_f)^H / N.
    const Tensor xf = dft2(x);
    const auto xs = xf.cvalues();
    const double inv_n = 1.0 / static_cast<double>(plane);
    std::vector<ComplexMatrix> grad_w(plane, ComplexMatrix(c, c));
    for (std::size_t f = 0; f < plane; ++f) {
        const auto g = gather(gs, c, plane, f);
        const auto xv = gather(xs, c, plane, f);
        std::vector<complex> left(c), right(c);
        for (std::size_t i = 0; i < c; ++i) {
            complex l = g[i];
            for (std::size_t o = 0; o < c; ++o) l += std::conj(q_[f](o, i)) * g[o];
            left[i] = -l * inv_n;
            complex r{};
            for (std::size_t j = 0; j < c; ++j) r += s_[f](i, j) * xv[j];
            right[i] = r;
        }
        ComplexMatrix& gw = grad_w[f];
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) gw(i, j) = left[i] * std::conj(right[j]);
        // dL/dW = dL/dA - (dL/dA)^H
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = i; j < c; ++j) {
                const complex aij = gw(i, j), aji = gw(j, i);
                gw(i, j) = aij - std::conj(aji);
                gw(j, i) = aji - std::conj(aij);
            }
        }
    }

    const auto roots = unit_roots(n_, 1.0);
    grads.kernel = Tensor({c, c, k_, k_});
    for (std::size_t o = 0; o < c; ++o) {
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t u = 0; u < k_; ++u) {
                for (std::size_t v = 0; v < k_; ++v) {
                    double acc = 0.0;
                    for (std::size_t fy = 0; fy < n_; ++fy)
                        for (std::size_t fx = 0; fx < n_; ++fx) {
                            const complex z = grad_w[fy * n_ + fx](o, i) * roots[(fy * u + fx * v) % n_];
                            acc += z.real();
                        }
                    grads.kernel[((o * c + i) * k_ + u) * k_ + v] = acc;
                }
            }
        }
    }
    return grads;
}

Tensor orth_conv_forward(const CayleyConvParams& params, const Tensor& x) { return CayleyOperator(params).apply(x); }

RobustBlockSpec make_robust_block_spec(const Shape& input_shape, std::size_t position) {
    if (input_shape.size() != 3) throw ConfigError("robust block needs a C×H×W input, got " + shape_string(input_shape));
    if (input_shape[0] < 2)
        throw ConfigError("robust block needs at least 2 input channels, got " + std::to_string(input_shape[0]));
    return {position, input_shape[0], input_shape[0] / 2, std::min(input_shape[1], input_shape[2])};
}

Tensor robust_block_forward(const RobustBlockSpec& spec, const Tensor& reduce_weight, const CayleyOperator& orth,
                            const Tensor& x) {
    if (spec.channels < 2) throw ConfigError("robust block needs at least 2 channels");
    if (x.rank() != 3 || x.dim(0) != spec.channels)
        throw ShapeError("robust block expects " + std::to_string(spec.channels) + " channels, got " +
                         shape_string(x.shape()));
    require_shape(reduce_weight, {spec.mid_channels, spec.channels}, "robust block reduction");
    const Tensor pooled = layers::adaptive_square_pool_forward(x);
    const std::size_t n = pooled.dim(1), plane = n * n;
    Tensor lifted({spec.channels, n, n});
    for (std::size_t m = 0; m < spec.mid_channels; ++m)
        for (std::size_t c = 0; c < spec.channels; ++c) {
            const double w = reduce_weight[m * spec.channels + c];
            if (w == 0.0) continue;
            for (std::size_t p = 0; p < plane; ++p) lifted[m * plane + p] += w * pooled[c * plane + p];
        }
    return orth.apply(lifted);
}

ModelGraph insert_robust_block(const ModelGraph& model, std::size_t position, std::uint64_t seed) {
    if (position >= model.layers.size() || model.layers[position].kind != LayerKind::conv2d)
        throw ConfigError("robust block position " + std::to_string(position) + " does not index a conv2d layer");
    const auto shapes = infer_shapes(model);
    const RobustBlockSpec spec = make_robust_block_spec(shapes[position], position);

    std::size_t serial = 0;
    while (model.params.count("rb" + std::to_string(serial) + ".reduce")) ++serial;
    const std::string reduce_id = "rb" + std::to_string(serial) + ".reduce";
    const std::string kernel_id = "rb" + std::to_string(serial) + ".kernel";

    Rng rng(seed);
    // Orthonormal rows via Gram-Schmidt on a Gaussian draw.
    Tensor reduce({spec.mid_channels, spec.channels});
    for (std::size_t r = 0; r < spec.mid_channels; ++r) {
        auto row = reduce.values().subspan(r * spec.channels, spec.channels);
        for (auto& v : row) v = rng.normal();
        for (std::size_t p = 0; p < r; ++p) {
            auto prev = reduce.values().subspan(p * spec.channels, spec.channels);
            double d = 0.0;
            for (std::size_t i = 0; i < spec.channels; ++i) d += row[i] * prev[i];
            for (std::size_t i = 0; i < spec.channels; ++i) row[i] -= d * prev[i];
        }
        double norm = 0.0;
        for (auto v : row) norm += v * v;
        norm = std::sqrt(norm);
        for (auto& v : row) v /= norm;
    }
    Tensor kernel({spec.channels, spec.channels, kCayleyKernelSize, kCayleyKernelSize});
    const double scale = 1.0 / (3.0 * std::sqrt(static_cast<double>(spec.channels)));
    for (auto& v : kernel.values()) v = scale * rng.normal();

    ModelGraph out = model;
    out.params[reduce_id] = std::move(reduce);
    out.params[kernel_id] = std::move(kernel);
    LayerSpec layer;
    layer.kind = LayerKind::robust_block;
    layer.mid_channels = spec.mid_channels;
    layer.param_ids = {reduce_id, kernel_id};
    layer.fresh = true;
    out.layers.insert(out.layers.begin() + static_cast<std::ptrdiff_t>(position), std::move(layer));
    infer_shapes(out);
    return out;
}

ModelGraph remove_layer(const ModelGraph& model, std::size_t index) {
    if (index >= model.layers.size()) throw ConfigError("remove_layer: index out of range");
    ModelGraph out = model;
    for (const auto& id : out.layers[index].param_ids) out.params.erase(id);
    out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(index));
    return out;
}

}  // namespace oiqa
