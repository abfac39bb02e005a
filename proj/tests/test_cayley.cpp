#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oiqa/cayley.hpp"
#include "oiqa/network.hpp"
#include "test_util.hpp"

using namespace oiqa;
using testutil::random_tensor;

TEST_CASE("Cayley transform of a Hermitian matrix is the identity") {
    auto m = testutil::random_complex(3, 3, 1);
    const ComplexMatrix hermitian = m + m.adjoint();
    CHECK(max_abs_diff(cayley_orthogonalize(hermitian), ComplexMatrix::identity(3)) < 1e-15);
}

TEST_CASE("Cayley transform of the 2x2 rotation generator") {
    // W - W^H = [[0, 1], [-1, 0]]
    const ComplexMatrix w(2, 2, {0.0, 1.0, 0.0, 0.0});
    const ComplexMatrix expected(2, 2, {0.0, -1.0, 1.0, 0.0});
    CHECK(max_abs_diff(cayley_orthogonalize(w), expected) < 1e-15);
}

TEST_CASE("Cayley transform is unitary for random complex input") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto q = cayley_orthogonalize(testutil::random_complex(4, 4, seed));
        CHECK(max_abs_diff(q.adjoint() * q, ComplexMatrix::identity(4)) < 1e-9);
    }
}

TEST_CASE("zero kernel gives the identity operator") {
    const Tensor x = random_tensor({3, 5, 5}, 2);
    CHECK(max_abs_diff(orth_conv_forward({Tensor({3, 3, 3, 3}), 5}, x), x) < 1e-12);
}

TEST_CASE("orthogonal convolution preserves norms and perturbation distances") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c = 1 + rng.below(6), n = 1 + rng.below(10);
        const CayleyOperator op({random_tensor({c, c, 3, 3}, 100 + trial), n});
        CHECK(op.orthogonality_residual() < 1e-9);
        const Tensor x = random_tensor({c, n, n}, 200 + trial);
        const Tensor y = op.apply(x);
        CHECK(testutil::rel_err(norm2(y), norm2(x)) < 1e-8);

        Tensor delta = random_tensor({c, n, n}, 300 + trial);
        delta = (0.01 / norm2(delta)) * delta;
        CHECK(std::abs(norm2(op.apply(x + delta) - y) - 0.01) < 1e-8 * 0.01);
    }
}

TEST_CASE("orthogonal convolution rejects non-square inputs") {
    const CayleyOperator op({random_tensor({2, 2, 3, 3}, 1), 4});
    CHECK_THROWS_AS(op.apply(Tensor({2, 4, 5})), ShapeError);
}

TEST_CASE("orthogonal convolution gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t c = 2 + seed % 3, n = 3 + seed;
        const Tensor kernel = random_tensor({c, c, 3, 3}, 10 + seed);
        const Tensor x = random_tensor({c, n, n}, 20 + seed);
        const Tensor r = random_tensor({c, n, n}, 30 + seed);
        const CayleyOperator op({kernel, n});
        const auto grads = op.backward(x, r);
        CHECK(gradcheck::check([&](const Tensor& p) { return dot(op.apply(p), r); }, x, grads.input) < 1e-4);
        CHECK(gradcheck::check([&](const Tensor& k) { return dot(CayleyOperator({k, n}).apply(x), r); }, kernel,
                               grads.kernel) < 1e-4);
    }
}

TEST_CASE("robust block traced through a channel-selecting reduction") {
    const Tensor x = random_tensor({2, 4, 4}, 1);
    const auto spec = make_robust_block_spec(x.shape(), 0);
    CHECK(spec.mid_channels == 1);
    const Tensor select({1, 2}, std::vector<double>{1.0, 0.0});
    const CayleyOperator op({random_tensor({2, 2, 3, 3}, 2), 4});
    const Tensor y = robust_block_forward(spec, select, op, x);
    double channel0 = 0.0;
    for (std::size_t i = 0; i < 16; ++i) channel0 += x[i] * x[i];
    CHECK(testutil::rel_err(norm2(y), std::sqrt(channel0)) < 1e-8);

    CHECK(max_abs(robust_block_forward(spec, select, op, Tensor({2, 4, 4}))) == 0.0);
    CHECK_THROWS_AS(make_robust_block_spec({1, 4, 4}, 0), ConfigError);
}

TEST_CASE("robust block sensitivity is bounded by the reduction's spectral norm") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t c = 4, n = 6;
        const Tensor x = random_tensor({c, n, n}, seed);
        const auto spec = make_robust_block_spec(x.shape(), 0);
        const Tensor reduce = random_tensor({spec.mid_channels, c}, 50 + seed);
        ComplexMatrix r(spec.mid_channels, c);
        for (std::size_t i = 0; i < reduce.size(); ++i) r.entries()[i] = reduce[i];
        const double sigma1 = svd_small(r).singular_values[0];
        const CayleyOperator op({random_tensor({c, c, 3, 3}, 70 + seed), n});
        const Tensor delta = 1e-3 * random_tensor({c, n, n}, 90 + seed);
        const double ratio = norm2(robust_block_forward(spec, reduce, op, x + delta) -
                                   robust_block_forward(spec, reduce, op, x)) /
                             norm2(delta);
        CHECK(ratio <= sigma1 + 1e-6);
    }
}

TEST_CASE("insert_robust_block bookkeeping") {
    const ModelGraph base = make_toy_model({}, 3);
    const auto convs = conv_layer_indices(base);
    const std::size_t last = convs.back();
    const ModelGraph with = insert_robust_block(base, last, 11);
    const std::size_t c = infer_shapes(base)[last][0];
    CHECK(with.parameter_count() == base.parameter_count() + (c / 2) * c + c * c * 9);
    for (const auto& [id, t] : base.params) CHECK(with.param(id) == t);
    CHECK(with.layers[last].kind == LayerKind::robust_block);
    CHECK(with.layers[last].fresh);
    CHECK(infer_shapes(with).back() == infer_shapes(base).back());

    const ModelGraph front = insert_robust_block(base, 0, 12);
    CHECK(std::isfinite(forward(front, random_tensor({3, 32, 32}, 1, 0.0, 1.0))));

    CHECK_THROWS_AS(insert_robust_block(base, 1, 0), ConfigError);  // relu, not conv
}

TEST_CASE("inserted block changes scores on a paired forward comparison") {
    const ModelGraph base = make_toy_model({}, 3);
    const ModelGraph with = insert_robust_block(base, conv_layer_indices(base).back(), 11);
    int differing = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
        const Tensor x = random_tensor({3, 32, 32}, 40 + i, 0.0, 1.0);
        differing += forward(base, x) != forward(with, x);
    }
    CHECK(differing == 10);
}

TEST_CASE("insert, remove, re-insert yields an identical shape pass") {
    const ModelGraph base = make_toy_model({}, 3);
    const std::size_t pos = conv_layer_indices(base)[2];
    const ModelGraph once = insert_robust_block(base, pos, 1);
    const ModelGraph removed = remove_layer(once, pos);
    CHECK(infer_shapes(removed) == infer_shapes(base));
    const ModelGraph again = insert_robust_block(removed, pos, 2);
    CHECK(infer_shapes(again) == infer_shapes(once));
}

TEST_CASE("robust block inside a network passes gradient checks") {
    ModelGraph m = ModelBuilder({4, 5, 6}, 1).conv(4, 3, 1, 1).relu().conv(2, 3).global_avg_pool().flatten().dense(1).build();
    m = insert_robust_block(m, 2, 7);
    CHECK(infer_shapes(m)[3] == Shape{4, 5, 5});
    CHECK(gradcheck::check_model(m, random_tensor({4, 5, 6}, 3, 0.0, 1.0)) < 1e-4);
}
