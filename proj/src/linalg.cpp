#include "oiqa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oiqa {

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<complex> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows * cols) throw ShapeError("ComplexMatrix: entry count does not match dimensions");
}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

ComplexMatrix ComplexMatrix::adjoint() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
    return out;
}

double ComplexMatrix::frobenius() const {
    double s = 0.0;
    for (auto v : data_) s += std::norm(v);
    return std::sqrt(s);
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("ComplexMatrix product: inner dimensions differ");
    ComplexMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const complex aik = a(i, k);
            if (aik == complex{}) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ComplexMatrix sum: dimensions differ");
    ComplexMatrix out = a;
    auto o = out.entries();
    auto bv = b.entries();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ComplexMatrix difference: dimensions differ");
    ComplexMatrix out = a;
    auto o = out.entries();
    auto bv = b.entries();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

std::vector<complex> operator*(const ComplexMatrix& a, std::span<const complex> x) {
    if (a.cols() != x.size()) throw ShapeError("ComplexMatrix-vector product: dimension mismatch");
    std::vector<complex> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        complex acc{};
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: dimensions differ");
    double m = 0.0;
    auto av = a.entries();
    auto bv = b.entries();
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

namespace {

double norm1(const ComplexMatrix& m) {
    double best = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) s += std::abs(m(r, c));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace

ComplexMatrix cinv(const ComplexMatrix& m) {
    if (!m.square()) throw ShapeError("cinv: matrix must be square");
    const std::size_t n = m.rows();
    for (auto v : m.entries())
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw InputError("cinv: non-finite entry");

    ComplexMatrix a = m;
    ComplexMatrix inv = ComplexMatrix::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > best) {
                best = std::abs(a(r, col));
                pivot = r;
            }
        }
        if (best == 0.0) throw InversionError("cinv: matrix is singular (zero pivot in column " + std::to_string(col) + ")");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) {
                std::swap(a(col, c), a(pivot, c));
                std::swap(inv(col, c), inv(pivot, c));
            }
        }
        const complex scale = 1.0 / a(col, col);
        for (std::size_t c = 0; c < n; ++c) {
            a(col, c) *= scale;
            inv(col, c) *= scale;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const complex f = a(r, col);
            if (f == complex{}) continue;
            for (std::size_t c = 0; c < n; ++c) {
                a(r, c) -= f * a(col, c);
                inv(r, c) -= f * inv(col, c);
            }
        }
    }
    const double condition = norm1(m) * norm1(inv);
    if (!(condition < kMaxCondition))
        throw InversionError("cinv: matrix is ill-conditioned (condition estimate " + std::to_string(condition) + ")");
    return inv;
}

SvdResult svd_small(const ComplexMatrix& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    if (rows > kSvdMaxDim || cols > kSvdMaxDim)
        throw SizeError("svd_small: " + std::to_string(rows) + "x" + std::to_string(cols) + " exceeds the " +
                        std::to_string(kSvdMaxDim) + " dimension cap");

    // Column-major working copies so that column rotations touch contiguous memory.
    std::vector<complex> a(rows * cols), v(cols * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) a[c * rows + r] = m(r, c);
    for (std::size_t c = 0; c < cols; ++c) v[c * cols + c] = 1.0;

    constexpr int kMaxSweeps = 100;
    constexpr double kThreshold = 1e-12;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                complex* ap = &a[p * rows];
                complex* aq = &a[q * rows];
                double alpha = 0.0, beta = 0.0;
                complex gamma{};
                for (std::size_t i = 0; i < rows; ++i) {
                    alpha += std::norm(ap[i]);
                    beta += std::norm(aq[i]);
                    gamma += std::conj(ap[i]) * aq[i];
                }
                const double g = std::abs(gamma);
                if (g == 0.0 || g <= kThreshold * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const complex phase = gamma / g;
                const double zeta = (beta - alpha) / (2.0 * g);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const complex sn = cs * t * phase;
                // [a_p, a_q] <- [a_p, a_q] * [[c, s], [-conj(s), c]]
                for (std::size_t i = 0; i < rows; ++i) {
                    const complex x = ap[i], y = aq[i];
                    ap[i] = cs * x - std::conj(sn) * y;
                    aq[i] = sn * x + cs * y;
                }
                complex* vp = &v[p * cols];
                complex* vq = &v[q * cols];
                for (std::size_t i = 0; i < cols; ++i) {
                    const complex x = vp[i], y = vq[i];
                    vp[i] = cs * x - std::conj(sn) * y;
                    vq[i] = sn * x + cs * y;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(cols);
    for (std::size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += std::norm(a[c * rows + i]);
        sigma[c] = std::sqrt(s);
    }
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return sigma[i] > sigma[j]; });

    SvdResult out{std::vector<double>(cols), ComplexMatrix(rows, cols), ComplexMatrix(cols, cols)};
    for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t src = order[k];
        out.singular_values[k] = sigma[src];
        for (std::size_t i = 0; i < cols; ++i) out.v(i, k) = v[src * cols + i];
        if (sigma[src] > 0.0)
            for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = a[src * rows + i] / sigma[src];
    }
    return out;
}

}  // namespace oiqa
