#include "oiqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace oiqa {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    validate_shape(shape_);
    size_ = shape_size(shape_);
    if (dtype_ == DType::real64)
        real_.assign(size_, 0.0);
    else
        complex_.assign(size_, complex{});
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), real_(std::move(values)) {
    validate_shape(shape_);
    size_ = shape_size(shape_);
    if (real_.size() != size_)
        throw ShapeError("data length " + std::to_string(real_.size()) + " does not match shape " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<complex> values)
    : shape_(std::move(shape)), dtype_(DType::complex128), complex_(std::move(values)) {
    validate_shape(shape_);
    size_ = shape_size(shape_);
    if (complex_.size() != size_)
        throw ShapeError("data length " + std::to_string(complex_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.real_.begin(), t.real_.end(), value);
    return t;
}

std::span<double> Tensor::values() {
    if (dtype_ != DType::real64) throw TypeError("expected a real64 tensor");
    return real_;
}

std::span<const double> Tensor::values() const {
    if (dtype_ != DType::real64) throw TypeError("expected a real64 tensor");
    return real_;
}

std::span<complex> Tensor::cvalues() {
    if (dtype_ != DType::complex128) throw TypeError("expected a complex128 tensor");
    return complex_;
}

std::span<const complex> Tensor::cvalues() const {
    if (dtype_ != DType::complex128) throw TypeError("expected a complex128 tensor");
    return complex_;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != size_)
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Tensor::require_finite(const char* context) const {
    bool ok = is_real() ? std::all_of(real_.begin(), real_.end(), [](double v) { return std::isfinite(v); })
                        : std::all_of(complex_.begin(), complex_.end(), [](complex v) {
                              return std::isfinite(v.real()) && std::isfinite(v.imag());
                          });
    if (!ok) throw InputError(std::string(context) + ": tensor contains NaN or Inf");
}

void require_shape(const Tensor& t, const Shape& expected, const char* context) {
    if (t.shape() != expected)
        throw ShapeError(std::string(context) + ": expected shape " + shape_string(expected) + ", got " +
                         shape_string(t.shape()));
}

namespace {

void require_same(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out += b;
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    Tensor out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.values()) v *= s;
    return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
    require_same(a, b);
    auto o = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return a;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    auto av = a.values();
    auto bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return s;
}

double norm2(const Tensor& a) {
    if (!a.is_real()) {
        double s = 0.0;
        for (auto v : a.cvalues()) s += std::norm(v);
        return std::sqrt(s);
    }
    return std::sqrt(dot(a, a));
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (auto v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    auto av = a.values();
    auto bv = b.values();
    double m = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

}  // namespace oiqa
