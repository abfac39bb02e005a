#include "oiqa/fourier.hpp"

#include <cmath>
#include <numbers>

namespace oiqa {

namespace {

std::vector<complex> twiddles(std::size_t n, bool inverse) {
    std::vector<complex> w(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

// Direct O(n^2) transform along one axis of a strided line.
void transform_line(complex* data, std::size_t n, std::size_t stride, const std::vector<complex>& w,
                    std::vector<complex>& scratch) {
    for (std::size_t k = 0; k < n; ++k) {
        complex acc{};
        std::size_t idx = 0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += data[j * stride] * w[idx];
            idx += k;
            if (idx >= n) idx -= n;
        }
        scratch[k] = acc;
    }
    for (std::size_t k = 0; k < n; ++k) data[k * stride] = scratch[k];
}

void require_chw(const Tensor& t, const char* context) {
    if (t.rank() != 3) throw ShapeError(std::string(context) + ": expected a C×H×W tensor, got " + shape_string(t.shape()));
}

Tensor transform(Tensor x, bool inverse) {
    const std::size_t channels = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto data = x.cvalues();
    const auto wr = twiddles(w, inverse);
    const auto wc = twiddles(h, inverse);
    std::vector<complex> scratch(std::max(h, w));
    for (std::size_t c = 0; c < channels; ++c) {
        complex* plane = data.data() + c * h * w;
        for (std::size_t r = 0; r < h; ++r) transform_line(plane + r * w, w, 1, wr, scratch);
        for (std::size_t col = 0; col < w; ++col) transform_line(plane + col, h, w, wc, scratch);
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(h * w);
        for (auto& v : data) v *= scale;
    }
    return x;
}

Tensor promote(const Tensor& x) {
    if (!x.is_real()) return x;
    std::vector<complex> values(x.values().begin(), x.values().end());
    return Tensor(x.shape(), std::move(values));
}

}  // namespace

Tensor dft2(const Tensor& x) {
    if (!x.is_real()) throw TypeError("dft2: input must be real64");
    require_chw(x, "dft2");
    return transform(promote(x), false);
}

Tensor idft2(const Tensor& spectrum) {
    Tensor z = idft2_complex(spectrum);
    Tensor out(z.shape());
    auto o = out.values();
    auto zv = z.cvalues();
    for (std::size_t i = 0; i < zv.size(); ++i) {
        if (!(std::abs(zv[i].imag()) < kSymmetryTolerance))
            throw SymmetryError("idft2: imaginary residue " + std::to_string(std::abs(zv[i].imag())) +
                                " at flat index " + std::to_string(i) + " (spectrum is not conjugate-symmetric)");
        o[i] = zv[i].real();
    }
    return out;
}

Tensor dft2_complex(const Tensor& x) {
    require_chw(x, "dft2_complex");
    return transform(promote(x), false);
}

Tensor idft2_complex(const Tensor& spectrum) {
    require_chw(spectrum, "idft2");
    return transform(promote(spectrum), true);
}

}  // namespace oiqa
