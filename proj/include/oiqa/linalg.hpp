#pragma once

#include <cstddef>
#include <vector>

#include "oiqa/tensor.hpp"

namespace oiqa {

/// Small dense complex matrix, row-major.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols);
    ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<complex> entries);

    static ComplexMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    complex& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    complex operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<complex> entries() { return data_; }
    std::span<const complex> entries() const { return data_; }

    /// Conjugate transpose.
    ComplexMatrix adjoint() const;
    double frobenius() const;

    bool operator==(const ComplexMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<complex> data_;
};

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b);
std::vector<complex> operator*(const ComplexMatrix& a, std::span<const complex> x);

/// max_ij |a_ij - b_ij|
double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b);

/// Largest condition number (1-norm estimate) cinv accepts.
inline constexpr double kMaxCondition = 1e12;

/// Inverse by Gauss-Jordan elimination with partial pivoting. Throws
/// InversionError for singular input or when ||M||_1 * ||M^-1||_1 >= kMaxCondition.
ComplexMatrix cinv(const ComplexMatrix& m);

inline constexpr std::size_t kSvdMaxDim = 4096;

struct SvdResult {
    std::vector<double> singular_values;  // descending, length = cols
    ComplexMatrix u;                      // rows × cols, columns for zero singular values are zero
    ComplexMatrix v;                      // cols × cols, right singular vectors in columns
};

/// One-sided (Hestenes) Jacobi SVD. At most 100 sweeps; a column pair is
/// rotated while |a_p^H a_q| > 1e-12 * ||a_p|| ||a_q||.
SvdResult svd_small(const ComplexMatrix& m);

}  // namespace oiqa
