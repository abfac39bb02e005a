#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oiqa/fourier.hpp"
#include "oiqa/linalg.hpp"
#include "test_util.hpp"

using namespace oiqa;
using testutil::random_tensor;

namespace {

// Textbook O(n^4) 2-D DFT, independent of the library's per-axis transform.
Tensor direct_dft2(const Tensor& x) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<complex> out(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k1 = 0; k1 < h; ++k1)
            for (std::size_t k2 = 0; k2 < w; ++k2) {
                complex acc{};
                for (std::size_t j1 = 0; j1 < h; ++j1)
                    for (std::size_t j2 = 0; j2 < w; ++j2) {
                        const double angle = -2.0 * std::numbers::pi *
                                             (static_cast<double>(k1 * j1) / h + static_cast<double>(k2 * j2) / w);
                        acc += x.at(ch, j1, j2) * std::polar(1.0, angle);
                    }
                out[(ch * h + k1) * w + k2] = acc;
            }
    return Tensor(x.shape(), std::move(out));
}

double energy(const Tensor& t) {
    const double n = norm2(t);
    return n * n;
}

}  // namespace

TEST_CASE("dft2 of a constant image puts everything in the DC bin") {
    const Tensor x = Tensor::filled({1, 4, 4}, 1.0);
    const Tensor transformed = dft2(x);
    const auto spec = transformed.cvalues();
    CHECK(std::abs(spec[0] - complex(16.0, 0.0)) < 1e-12);
    for (std::size_t i = 1; i < spec.size(); ++i) CHECK(std::abs(spec[i]) < 1e-12);
}

TEST_CASE("dft2 round trip and agreement with the direct transform") {
    const Tensor x = random_tensor({1, 8, 8}, 1);
    CHECK(max_abs_diff(idft2(dft2(x)), x) < 1e-10);

    const Tensor y = random_tensor({2, 5, 7}, 2);
    const Tensor fy = dft2(y), sy = direct_dft2(y);
    const auto fast = fy.cvalues();
    const auto slow = sy.cvalues();
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    CHECK(worst < 1e-10);
}

TEST_CASE("Parseval under the unnormalized convention, checked against the direct DFT") {
    const Tensor x = random_tensor({1, 6, 6}, 3);
    const double spatial = energy(x);
    CHECK(testutil::rel_err(energy(direct_dft2(x)), 36.0 * spatial) < 1e-12);
    CHECK(testutil::rel_err(energy(dft2(x)), 36.0 * spatial) < 1e-9);
}

TEST_CASE("Parseval and linearity hold for random shapes") {
    Rng rng(4);
    for (int trial = 0; trial < 25; ++trial) {
        const Shape shape{1 + rng.below(3), 1 + rng.below(9), 1 + rng.below(9)};
        const Tensor x = random_tensor(shape, 100 + trial);
        const Tensor y = random_tensor(shape, 200 + trial);
        const double hw = static_cast<double>(shape[1] * shape[2]);
        CHECK(testutil::rel_err(energy(dft2(x)), hw * energy(x)) < 1e-9);

        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        const auto lhs = dft2(a * x + b * y);
        const Tensor tx = dft2(x), ty = dft2(y);
        const auto fx = tx.cvalues();
        const auto fy = ty.cvalues();
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < fx.size(); ++i) {
            diff += std::norm(lhs.cvalues()[i] - (a * fx[i] + b * fy[i]));
            scale += std::norm(lhs.cvalues()[i]);
        }
        CHECK(std::sqrt(diff / scale) < 1e-10);
    }
}

TEST_CASE("dft2 and idft2 reject the wrong dtype or asymmetric spectra") {
    Tensor spectrum({1, 4, 4}, DType::complex128);
    CHECK_THROWS_AS(dft2(spectrum), TypeError);

    CHECK(max_abs(idft2(spectrum)) == 0.0);

    spectrum.cvalues()[1] = complex(1.0, 0.0);
    CHECK_THROWS_AS(idft2(spectrum), SymmetryError);
}

TEST_CASE("cinv on hand-checkable matrices") {
    const auto eye = ComplexMatrix::identity(3);
    CHECK(max_abs_diff(cinv(eye), eye) < 1e-15);

    ComplexMatrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    const auto di = cinv(d);
    CHECK(std::abs(di(0, 0) - 0.5) < 1e-15);
    CHECK(std::abs(di(1, 1) - 0.25) < 1e-15);
    CHECK(std::abs(di(0, 1)) == 0.0);

    const ComplexMatrix m(2, 2, {1.0, 1.0, -1.0, 1.0});
    const ComplexMatrix expected(2, 2, {0.5, -0.5, 0.5, 0.5});
    CHECK(max_abs_diff(cinv(m), expected) < 1e-15);
}

TEST_CASE("cinv residual on random matrices and failure on singular input") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = testutil::random_complex(6, 6, seed);
        CHECK(max_abs_diff(m * cinv(m), ComplexMatrix::identity(6)) < 1e-9);
    }
    const ComplexMatrix singular(2, 2, {1.0, 2.0, 2.0, 4.0});
    CHECK_THROWS_AS(cinv(singular), InversionError);

    const ComplexMatrix nearly(2, 2, {1.0, 1.0, 1.0, 1.0 + 1e-14});
    try {
        cinv(nearly);
        FAIL("expected an ill-conditioning error");
    } catch (const InversionError& e) {
        CHECK(std::string(e.what()).find("condition") != std::string::npos);
    }
}

TEST_CASE("svd_small basic cases") {
    ComplexMatrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    auto r = svd_small(d);
    CHECK(std::abs(r.singular_values[0] - 3.0) < 1e-12);
    CHECK(std::abs(r.singular_values[1] - 1.0) < 1e-12);
    CHECK(std::abs(std::abs(r.v(0, 0)) - 1.0) < 1e-12);
    CHECK(std::abs(r.v(1, 0)) < 1e-12);

    const auto q = testutil::random_orthonormal(5, 5, 11);
    for (double s : svd_small(q).singular_values) CHECK(std::abs(s - 1.0) < 1e-8);

    CHECK_THROWS_AS(svd_small(ComplexMatrix(4097, 1)), SizeError);
}

TEST_CASE("svd_small reconstructs random matrices") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = testutil::random_complex(5, 3, 40 + seed);
        const auto r = svd_small(m);
        ComplexMatrix sigma(3, 3);
        for (std::size_t k = 0; k < 3; ++k) sigma(k, k) = r.singular_values[k];
        const auto rebuilt = r.u * sigma * r.v.adjoint();
        CHECK((rebuilt - m).frobenius() < 1e-8);
        CHECK(max_abs_diff(r.v.adjoint() * r.v, ComplexMatrix::identity(3)) < 1e-8);
        for (std::size_t k = 0; k + 1 < 3; ++k) CHECK(r.singular_values[k] >= r.singular_values[k + 1]);
        // ||M v_k|| = sigma_k
        for (std::size_t k = 0; k < 3; ++k) {
            std::vector<complex> vk(3);
            for (std::size_t i = 0; i < 3; ++i) vk[i] = r.v(i, k);
            const auto mv = m * std::span<const complex>(vk);
            double n = 0.0;
            for (auto z : mv) n += std::norm(z);
            CHECK(std::abs(std::sqrt(n) - r.singular_values[k]) < 1e-8);
        }
    }
}

TEST_CASE("svd_small recovers a prescribed spectrum") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 3 + rng.below(6), cols = 1 + rng.below(rows);
        const auto u = testutil::random_orthonormal(rows, cols, 500 + trial);
        const auto v = testutil::random_orthonormal(cols, cols, 900 + trial);
        std::vector<double> target(cols);
        for (auto& s : target) s = rng.uniform(0.1, 5.0);
        std::sort(target.rbegin(), target.rend());
        ComplexMatrix sigma(cols, cols);
        for (std::size_t k = 0; k < cols; ++k) sigma(k, k) = target[k];
        const auto r = svd_small(u * sigma * v.adjoint());
        for (std::size_t k = 0; k < cols; ++k) CHECK(std::abs(r.singular_values[k] - target[k]) < 1e-8);
    }
}

TEST_CASE("tensor construction invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 2}), ShapeError);
    Tensor t({2});
    t[0] = std::nan("");
    CHECK_THROWS_AS(t.require_finite("test"), InputError);
    CHECK_THROWS_AS(t.cvalues(), TypeError);
}
