#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "oiqa/error.hpp"

namespace oiqa {

using Shape = std::vector<std::size_t>;
using complex = std::complex<double>;

enum class DType { real64, complex128 };

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor holding either real64 or complex128 scalars.
///
/// Only the storage matching dtype() is populated; asking for the other one
/// raises TypeError.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, DType dtype = DType::real64);
    Tensor(Shape shape, std::vector<double> values);
    Tensor(Shape shape, std::vector<complex> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor filled(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return size_; }
    DType dtype() const noexcept { return dtype_; }
    bool is_real() const noexcept { return dtype_ == DType::real64; }

    std::span<double> values();
    std::span<const double> values() const;
    std::span<complex> cvalues();
    std::span<const complex> cvalues() const;

    double& operator[](std::size_t i) { return real_[i]; }
    double operator[](std::size_t i) const { return real_[i]; }

    /// Rank-3 (C×H×W) element access for real tensors.
    double& at(std::size_t c, std::size_t h, std::size_t w) { return real_[(c * shape_[1] + h) * shape_[2] + w]; }
    double at(std::size_t c, std::size_t h, std::size_t w) const { return real_[(c * shape_[1] + h) * shape_[2] + w]; }

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    /// Throws InputError if any scalar is NaN or infinite.
    void require_finite(const char* context) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::size_t size_ = 0;
    DType dtype_ = DType::real64;
    std::vector<double> real_;
    std::vector<complex> complex_;
};

void require_shape(const Tensor& t, const Shape& expected, const char* context);

// Elementwise helpers over real tensors of identical shape.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor& operator+=(Tensor& a, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace oiqa
