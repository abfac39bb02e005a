#include <cmath>

#include "doctest.h"
#include "oiqa/fourier.hpp"
#include "oiqa/spectral.hpp"
#include "test_util.hpp"

using namespace oiqa;
using testutil::random_tensor;

namespace {

Tensor identity_kernel(std::size_t c, double scale) {
    Tensor k({c, c, 1, 1});
    for (std::size_t i = 0; i < c; ++i) k[i * c + i] = scale;
    return k;
}

// y = idft2(W_f x_f) evaluated frequency by frequency.
Tensor fourier_conv(const Tensor& kernel, const Tensor& x) {
    const std::size_t co = kernel.dim(0), ci = kernel.dim(1), n = x.dim(1);
    const auto w = kernel_spectrum(kernel, n);
    const Tensor xh = dft2(x);
    Tensor yh({co, n, n}, DType::complex128);
    for (std::size_t f = 0; f < n * n; ++f)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < ci; ++i) yh.cvalues()[o * n * n + f] += w[f](o, i) * xh.cvalues()[i * n * n + f];
    return idft2(yh);
}

}  // namespace

TEST_CASE("identity kernels") {
    for (auto sem : {ConvSemantics::circular, ConvSemantics::materialized}) {
        const auto one = conv_spectrum(identity_kernel(1, 1.0), 4, sem);
        CHECK(std::abs(one.spectral_norm - 1.0) < 1e-12);
        CHECK(std::abs(norm2(one.top_vector) - 1.0) < 1e-12);
        CHECK(std::abs(conv_spectrum(identity_kernel(2, 2.0), 3, sem).spectral_norm - 2.0) < 1e-12);
    }
}

TEST_CASE("spatial circular convolution matches the per-frequency product") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t co = 1 + seed % 3, ci = 1 + (seed / 3) % 3, n = 2 + seed % 5;
        const Tensor k = random_tensor({co, ci, 3, 3}, seed);
        const Tensor x = random_tensor({ci, n, n}, 100 + seed);
        CHECK(max_abs_diff(circular_conv(k, x), fourier_conv(k, x)) < 1e-12);

        const ComplexMatrix m = materialize_circular_conv(k, n);
        std::vector<complex> xv(x.values().begin(), x.values().end());
        const auto y = m * std::span<const complex>(xv);
        const Tensor direct = circular_conv(k, x);
        double worst = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - direct[i]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("circular and materialized spectral norms agree") {
    Rng rng(9);
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        const std::size_t c = 1 + rng.below(3), n = 1 + rng.below(8);
        const Tensor k = random_tensor({c, c, 3, 3}, 500 + trial);
        const auto circ = conv_spectrum(k, n, ConvSemantics::circular);
        const auto mat = conv_spectrum(k, n, ConvSemantics::materialized);
        CHECK(std::abs(circ.spectral_norm - mat.spectral_norm) < 1e-8);
        CHECK(std::abs(circ.frobenius_norm - mat.frobenius_norm) < 1e-8);
        CHECK(circ.frobenius_norm >= circ.spectral_norm);
        // each kernel entry appears n² times in the operator
        if (n >= 3) CHECK(std::abs(mat.frobenius_norm / static_cast<double>(n) - norm2(k)) < 1e-8);
    }
    const Tensor k = random_tensor({2, 2, 3, 3}, 1);
    CHECK(std::abs(conv_spectrum(k, 6, ConvSemantics::circular).spectral_norm -
                   conv_spectrum(k, 6, ConvSemantics::materialized).spectral_norm) < 1e-8);
}

TEST_CASE("materialized path enforces the size cap") {
    CHECK_NOTHROW(materialize_circular_conv(Tensor({1, 1, 3, 3}), 64));
    CHECK_THROWS_AS(conv_spectrum(Tensor({2, 2, 3, 3}), 46, ConvSemantics::materialized), SizeError);
}

TEST_CASE("amplification along the top singular vector") {
    const ComplexMatrix diag(2, 2, {3.0, 0.0, 0.0, 1.0});
    const auto spec = matrix_spectrum(diag);
    auto apply = [&](const Tensor& d) {
        std::vector<complex> v(d.values().begin(), d.values().end());
        const auto y = diag * std::span<const complex>(v);
        return Tensor({2}, std::vector<double>{y[0].real(), y[1].real()});
    };
    const auto r = verify_amplification(apply, spec, 0.1);
    CHECK(r.amplifying);
    CHECK(std::abs(r.output_norm - 0.3) < 1e-14);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t c = 1 + seed % 3, n = 3 + seed % 6;
        Tensor k = random_tensor({c, c, 3, 3}, 40 + seed);
        k = (1.7 / conv_spectrum(k, n, ConvSemantics::circular).spectral_norm) * k;
        const auto s = conv_spectrum(k, n, ConvSemantics::circular);
        CHECK(std::abs(s.spectral_norm - 1.7) < 1e-12);
        const auto rep = verify_amplification([&](const Tensor& d) { return circular_conv(k, d); }, s, 0.05);
        CHECK(rep.amplifying);
        CHECK(std::abs(rep.ratio - 1.7) < 1e-8);
    }
}

TEST_CASE("orthogonal layers report unit spectrum and fail the amplification precondition") {
    const CayleyOperator op({random_tensor({3, 3, 3, 3}, 2), 5});
    const auto s = cayley_spectrum(op);
    CHECK(std::abs(s.spectral_norm - 1.0) < 1e-8);
    for (const auto& sv : s.frequency_singular_values)
        for (double v : sv) CHECK(std::abs(v - 1.0) < 1e-8);
    const auto r = verify_amplification([&](const Tensor& d) { return op.apply(d); }, s, 0.1);
    CHECK_FALSE(r.amplifying);
    CHECK(std::abs(r.ratio - 1.0) < 1e-8);
    CHECK(r.message.find("precondition") != std::string::npos);
}

TEST_CASE("constructed matrices carry the prescribed spectrum") {
    const std::vector<double> s{2.5, 1.0, 0.5};
    const auto w = matrix_with_spectrum(5, s, 3);
    const auto svd = svd_small(w);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(svd.singular_values[i] - s[i]) < 1e-12);
    for (auto v : w.entries()) CHECK(v.imag() == 0.0);
    const auto h = random_orthogonal(6, 4);
    CHECK(max_abs_diff(h.adjoint() * h, ComplexMatrix::identity(6)) < 1e-14);
}

TEST_CASE("lemma spectra meet the hypotheses or raise") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = sample_lemma_spectrum(12, 8, 1.3, seed);
        double f2 = 0.0;
        for (double v : s) f2 += v * v;
        CHECK(s[0] == doctest::Approx(1.3));
        CHECK(std::sqrt(f2) / s[0] > 1.5);
        CHECK(std::is_sorted(s.rbegin(), s.rend()));
    }
    CHECK_THROWS_AS(sample_lemma_spectrum(20, 2, 1.01, 0), ConstructionError);
    CHECK_THROWS_AS(sample_lemma_spectrum(8, 8, 1.0, 0), ConstructionError);
}

TEST_CASE("lemma instances") {
    // scalar case
    const ComplexMatrix w = [] {
        ComplexMatrix m = ComplexMatrix::identity(4);
        for (auto& v : m.entries()) v *= 2.0;
        return m;
    }();
    const std::vector<complex> delta{0.1, -0.2, 0.05, 0.0};
    CHECK(lemma1_holds(w, ComplexMatrix::identity(4), delta));

    // ||W||_F / ||W||_2 = sqrt(8) > 12/8 and ||W||_2 = 1.01 > 1, yet the gain is 1.01 < 1.5
    ComplexMatrix tall(12, 8);
    for (std::size_t i = 0; i < 8; ++i) tall(i, i) = 1.01;
    std::vector<complex> v1(8);
    v1[0] = 0.1;
    CHECK_FALSE(lemma1_holds(tall, ComplexMatrix::identity(8), v1));
}

TEST_CASE("lemma Monte-Carlo for square operators") {
    const auto r = verify_lemma1(200, 8, 8, 1);
    CHECK(r.trials == 200);
    CHECK(r.passes_wh == 200);
    CHECK(r.min_margin_wh > 0.0);
    CHECK(r.passes_w <= 200);
    const auto again = verify_lemma1(200, 8, 8, 1, 0.1, 4);
    CHECK(again.passes_w == r.passes_w);
    CHECK(again.min_margin_w == r.min_margin_w);
}

TEST_CASE("placement ratios") {
    CHECK(placement_ratio({3, 8, 8, 3, 8, 8}) == 1.0);
    CHECK(placement_ratio({3, 498, 498, 64, 249, 249}) == doctest::Approx(64.0 * 249 * 249 / (3.0 * 498 * 498)));
    CHECK(placement_ratio({3, 498, 498, 64, 249, 249}) == doctest::Approx(5.3333333333));

    const ModelGraph one = ModelBuilder({3, 8, 8}, 0).conv(3, 3, 1, 1).global_avg_pool().flatten().dense(1).build();
    const auto s1 = placement_scan(one);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0].ratio == 1.0);

    const std::vector<ConvShape> linearity{
        {3, 498, 664, 64, conv_out_size(498, 3, 1, 2, 1), conv_out_size(664, 3, 1, 2, 1)},
        {1024, 32, 42, 2048, conv_out_size(32, 3, 1, 2, 1), conv_out_size(42, 3, 1, 2, 1)},
    };
    const auto ls = placement_scan(linearity);
    CHECK(ls[1].ratio < ls[0].ratio);
    CHECK(recommend_placement(ls) == 1);
}

TEST_CASE("toy model recommends the deepest conv, independent of weight scale") {
    ModelGraph toy = make_toy_model({}, 5);
    const auto scores = placement_scan(toy);
    const auto convs = conv_layer_indices(toy);
    REQUIRE(scores.size() == convs.size());
    CHECK(recommend_placement(scores) == convs.back());
    for (std::size_t i = 1; i < scores.size(); ++i) CHECK(scores[i].ratio < scores[i - 1].ratio);
    for (auto& [id, t] : toy.params) t = 3.5 * t;
    CHECK(recommend_placement(placement_scan(toy)) == convs.back());
}
