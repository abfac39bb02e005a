#include "oiqa/layers.hpp"

#include <cmath>
#include <numbers>

namespace oiqa::layers {

namespace {

std::size_t out_extent(std::size_t in, std::size_t k, const ConvGeometry& g) {
    return conv_out_size(in, k, g.padding, g.stride, g.dilation);
}

void check_conv_operands(const Tensor& x, const Tensor& w) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: incompatible input " + shape_string(x.shape()) + " and weight " +
                         shape_string(w.shape()));
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
    check_conv_operands(x, w);
    const std::size_t ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t co_n = w.dim(0), k = w.dim(2);
    const std::size_t ho = out_extent(h, k, g), wo = out_extent(wd, k, g);
    Tensor y({co_n, ho, wo});
    const auto xv = x.values();
    const auto wv = w.values();
    auto yv = y.values();
    const auto pad = static_cast<long>(g.padding);
    for (std::size_t co = 0; co < co_n; ++co) {
        double* yplane = yv.data() + co * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) yplane[i] = b[co];
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* xplane = xv.data() + ci * h * wd;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const double wt = wv[((co * ci_n + ci) * k + ky) * k + kx];
                    if (wt == 0.0) continue;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - pad;
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        const double* xrow = xplane + static_cast<std::size_t>(iy) * wd;
                        double* yrow = yplane + oy * wo;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - pad;
                            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                            yrow[ox] += wt * xrow[ix];
                        }
                    }
                }
            }
        }
    }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, ConvGeometry g, const Tensor& grad_out,
                          bool want_params) {
    check_conv_operands(x, w);
    const std::size_t ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t co_n = w.dim(0), k = w.dim(2);
    const std::size_t ho = out_extent(h, k, g), wo = out_extent(wd, k, g);
    require_shape(grad_out, {co_n, ho, wo}, "conv2d_backward");
    ConvGrads grads{Tensor(x.shape()), want_params ? Tensor(w.shape()) : Tensor(), want_params ? Tensor({co_n}) : Tensor()};
    const auto xv = x.values();
    const auto wv = w.values();
    const auto gv = grad_out.values();
    auto gx = grads.input.values();
    const auto pad = static_cast<long>(g.padding);
    for (std::size_t co = 0; co < co_n; ++co) {
        const double* gplane = gv.data() + co * ho * wo;
        if (want_params) {
            double s = 0.0;
            for (std::size_t i = 0; i < ho * wo; ++i) s += gplane[i];
            grads.bias[co] = s;
        }
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* xplane = xv.data() + ci * h * wd;
            double* gxplane = gx.data() + ci * h * wd;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((co * ci_n + ci) * k + ky) * k + kx;
                    const double wt = wv[widx];
                    double gw = 0.0;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - pad;
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        const double* xrow = xplane + static_cast<std::size_t>(iy) * wd;
                        double* gxrow = gxplane + static_cast<std::size_t>(iy) * wd;
                        const double* grow = gplane + oy * wo;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - pad;
                            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                            gw += grow[ox] * xrow[ix];
                            gxrow[ix] += wt * grow[ox];
                        }
                    }
                    if (want_params) grads.weight[widx] = gw;
                }
            }
        }
    }
    return grads;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t in = x.size();
    if (w.rank() != 2 || w.dim(1) != in)
        throw ShapeError("dense: input of " + std::to_string(in) + " features vs weight " + shape_string(w.shape()));
    const std::size_t out = w.dim(0);
    Tensor y({out});
    const auto xv = x.values();
    const auto wv = w.values();
    for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* row = wv.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * xv[i];
        y[o] = s;
    }
    return y;
}

ConvGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, bool want_params) {
    const std::size_t in = x.size(), out = w.dim(0);
    require_shape(grad_out, {out}, "dense_backward");
    ConvGrads grads{Tensor(x.shape()), want_params ? Tensor(w.shape()) : Tensor(), want_params ? Tensor({out}) : Tensor()};
    const auto xv = x.values();
    const auto wv = w.values();
    auto gx = grads.input.values();
    for (std::size_t o = 0; o < out; ++o) {
        const double g = grad_out[o];
        const double* row = wv.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) gx[i] += g * row[i];
        if (want_params) {
            grads.bias[o] = g;
            auto gw = grads.weight.values().subspan(o * in, in);
            for (std::size_t i = 0; i < in; ++i) gw[i] = g * xv[i];
        }
    }
    return grads;
}

double activate(LayerKind kind, double v) {
    switch (kind) {
        case LayerKind::relu: return v > 0.0 ? v : 0.0;
        case LayerKind::elu: return v > 0.0 ? v : std::expm1(v);
        case LayerKind::silu: return v / (1.0 + std::exp(-v));
        case LayerKind::gelu: return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
        default: throw ConfigError("activate: not an activation kind");
    }
}

double activate_derivative(LayerKind kind, double v) {
    switch (kind) {
        case LayerKind::relu: return v > 0.0 ? 1.0 : 0.0;
        case LayerKind::elu: return v > 0.0 ? 1.0 : std::exp(v);
        case LayerKind::silu: {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        }
        case LayerKind::gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        }
        default: throw ConfigError("activate_derivative: not an activation kind");
    }
}

Tensor activation_forward(LayerKind kind, const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = activate(kind, v);
    return y;
}

Tensor activation_backward(LayerKind kind, const Tensor& x, const Tensor& grad_out) {
    Tensor g = grad_out;
    auto gv = g.values();
    const auto xv = x.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= activate_derivative(kind, xv[i]);
    return g;
}

namespace {

struct Window {
    std::size_t begin, end;
};

Window adaptive_window(std::size_t i, std::size_t in, std::size_t out) {
    return {i * in / out, ((i + 1) * in + out - 1) / out};
}

}  // namespace

Tensor adaptive_square_pool_forward(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("adaptive_square_pool: expects C×H×W");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), n = std::min(h, w);
    Tensor y({c, n, n});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto rows = adaptive_window(i, h, n);
            for (std::size_t j = 0; j < n; ++j) {
                const auto cols = adaptive_window(j, w, n);
                double s = 0.0;
                for (std::size_t r = rows.begin; r < rows.end; ++r)
                    for (std::size_t q = cols.begin; q < cols.end; ++q) s += x.at(ch, r, q);
                y.at(ch, i, j) = s / static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin));
            }
        }
    }
    return y;
}

Tensor adaptive_square_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2], n = std::min(h, w);
    require_shape(grad_out, {c, n, n}, "adaptive_square_pool_backward");
    Tensor gx(input_shape);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto rows = adaptive_window(i, h, n);
            for (std::size_t j = 0; j < n; ++j) {
                const auto cols = adaptive_window(j, w, n);
                const double g =
                    grad_out.at(ch, i, j) / static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin));
                for (std::size_t r = rows.begin; r < rows.end; ++r)
                    for (std::size_t q = cols.begin; q < cols.end; ++q) gx.at(ch, r, q) += g;
            }
        }
    }
    return gx;
}

Tensor avg_pool_forward(const Tensor& x, std::size_t kernel, std::size_t stride) {
    if (x.rank() != 3) throw ShapeError("avg_pool: expects C×H×W");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (kernel == 0) {
        Tensor y({c, 1, 1});
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t i = 0; i < h * w; ++i) s += x[ch * h * w + i];
            y[ch] = s / static_cast<double>(h * w);
        }
        return y;
    }
    const std::size_t ho = conv_out_size(h, kernel, 0, stride, 1), wo = conv_out_size(w, kernel, 0, stride, 1);
    Tensor y({c, ho, wo});
    const double inv = 1.0 / static_cast<double>(kernel * kernel);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j) {
                double s = 0.0;
                for (std::size_t a = 0; a < kernel; ++a)
                    for (std::size_t b = 0; b < kernel; ++b) s += x.at(ch, i * stride + a, j * stride + b);
                y.at(ch, i, j) = s * inv;
            }
    return y;
}

Tensor avg_pool_backward(const Shape& input_shape, std::size_t kernel, std::size_t stride, const Tensor& grad_out) {
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    Tensor gx(input_shape);
    if (kernel == 0) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double g = grad_out[ch] / static_cast<double>(h * w);
            for (std::size_t i = 0; i < h * w; ++i) gx[ch * h * w + i] = g;
        }
        return gx;
    }
    const std::size_t ho = grad_out.dim(1), wo = grad_out.dim(2);
    const double inv = 1.0 / static_cast<double>(kernel * kernel);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j) {
                const double g = grad_out.at(ch, i, j) * inv;
                for (std::size_t a = 0; a < kernel; ++a)
                    for (std::size_t b = 0; b < kernel; ++b) gx.at(ch, i * stride + a, j * stride + b) += g;
            }
    return gx;
}

}  // namespace oiqa::layers
