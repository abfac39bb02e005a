#pragma once

#include <cmath>
#include <cstdint>

#include "oiqa/linalg.hpp"
#include "oiqa/random.hpp"
#include "oiqa/tensor.hpp"

namespace testutil {

inline oiqa::Tensor random_tensor(const oiqa::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    oiqa::Rng rng(seed);
    oiqa::Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline oiqa::ComplexMatrix random_complex(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    oiqa::Rng rng(seed);
    oiqa::ComplexMatrix m(rows, cols);
    for (auto& v : m.entries()) v = {rng.normal(), rng.normal()};
    return m;
}

/// Columns orthonormalised by modified Gram-Schmidt (rows >= cols).
inline oiqa::ComplexMatrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed, bool real = false) {
    oiqa::Rng rng(seed);
    oiqa::ComplexMatrix m(rows, cols);
    for (auto& v : m.entries()) v = real ? oiqa::complex{rng.normal(), 0.0} : oiqa::complex{rng.normal(), rng.normal()};
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            oiqa::complex d{};
            for (std::size_t r = 0; r < rows; ++r) d += std::conj(m(r, p)) * m(r, c);
            for (std::size_t r = 0; r < rows; ++r) m(r, c) -= d * m(r, p);
        }
        double n = 0.0;
        for (std::size_t r = 0; r < rows; ++r) n += std::norm(m(r, c));
        n = std::sqrt(n);
        for (std::size_t r = 0; r < rows; ++r) m(r, c) /= n;
    }
    return m;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testutil
