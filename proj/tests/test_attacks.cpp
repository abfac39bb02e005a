#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oiqa/attacks.hpp"
#include "oiqa/network.hpp"
#include "test_util.hpp"

using namespace oiqa;
using testutil::random_tensor;

namespace {

ModelGraph linear_model(std::uint64_t seed) {
    return ModelBuilder({1, 4, 4}, seed).flatten().dense(1).build();
}

AttackConfig pgd(double eps, std::size_t steps, double step = 1.0 / 255.0) {
    AttackConfig c;
    c.kind = AttackKind::pgd;
    c.epsilon = eps;
    c.steps = steps;
    c.step_size = step;
    return c;
}

}  // namespace

TEST_CASE("pgd on a linear model follows the closed form") {
    const ModelGraph m = linear_model(1);
    const Tensor& w = m.param("L1.weight");
    const Tensor x = random_tensor({1, 4, 4}, 2, 0.3, 0.7);
    const double s = 1.0 / 255.0;
    double l1 = 0.0;
    for (double v : w.values()) l1 += std::abs(v);

    const auto one = pgd_attack(m, x, pgd(8.0 / 255.0, 1));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(one.perturbations[0][i] == s * (w[i] > 0 ? 1.0 : -1.0));
    const auto& o = one.images[0];
    CHECK(std::abs((o.attacked_score - o.clean_score) - s * l1) < 1e-12);

    const auto many = pgd_attack(m, x, pgd(4.0 / 255.0, 10));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(many.perturbations[0][i] - 4.0 / 255.0 * (w[i] > 0 ? 1.0 : -1.0)) < 1e-15);
}

TEST_CASE("zero budget leaves the image untouched") {
    const ModelGraph m = make_toy_model({}, 1);
    const Tensor x = random_tensor({3, 32, 32}, 3, 0.0, 1.0);
    const auto r = pgd_attack(m, x, pgd(0.0, 3));
    CHECK(r.attacked[0] == x);
    CHECK(r.images[0].attacked_score == r.images[0].clean_score);
    CHECK(r.images[0].linf == 0.0);
}

TEST_CASE("pgd respects the l-inf ball and the pixel range") {
    const ModelGraph m = make_toy_model({}, 4);
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Tensor x = random_tensor({3, 32, 32}, 10 + seed, 0.0, 1.0);
        for (std::size_t i = 0; i < x.size(); i += 7) x[i] = (i % 2) ? 1.0 : 0.0;
        AttackConfig c = pgd((2.0 + 2.0 * static_cast<double>(seed % 5)) / 255.0, 5, 2.0 / 255.0);
        c.random_start = seed % 2 == 1;
        c.seed = seed;
        const auto r = pgd_attack(m, x, c);
        CHECK(r.images[0].linf <= c.epsilon + 1e-12);
        for (double v : r.attacked[0].values()) CHECK((v >= 0.0 && v <= 1.0));
    }
}

TEST_CASE("pgd gain widens with the budget") {
    const ModelGraph lin = linear_model(5);
    const Tensor xl = random_tensor({1, 4, 4}, 6, 0.2, 0.8);
    const ModelGraph toy = make_toy_model({}, 6);
    const Tensor xt = random_tensor({3, 32, 32}, 7, 0.0, 1.0);
    for (const auto& [m, x] : {std::pair{&lin, &xl}, std::pair{&toy, &xt}}) {
        double previous = -1e300;
        for (int k = 2; k <= 10; k += 2) {
            const auto r = pgd_attack(*m, *x, pgd(k / 255.0, 10));
            const double gain = r.images[0].attacked_score - r.images[0].clean_score;
            CHECK(gain >= previous - 1e-9);
            previous = gain;
        }
    }
}

TEST_CASE("attacks are deterministic and thread-count independent") {
    const ModelGraph m = make_toy_model({}, 8);
    std::vector<Tensor> xs;
    for (std::uint64_t i = 0; i < 4; ++i) xs.push_back(random_tensor({3, 32, 32}, 20 + i, 0.0, 1.0));
    for (auto kind : {AttackKind::pgd, AttackKind::uap, AttackKind::stadv}) {
        AttackConfig c = default_attack_config(kind);
        c.steps = 3;
        const auto a = run_attack(m, xs, c, 1);
        const auto b = run_attack(m, xs, c, 4);
        CHECK(a.attacked == b.attacked);
        CHECK(a.perturbations == b.perturbations);
        for (std::size_t i = 0; i < xs.size(); ++i) CHECK(a.images[i].attacked_score == b.images[i].attacked_score);
    }
}

TEST_CASE("uap on one image equals pgd with the same schedule") {
    const ModelGraph m = make_toy_model({}, 9);
    const Tensor x = random_tensor({3, 32, 32}, 30, 0.2, 0.8);
    AttackConfig c = pgd(6.0 / 255.0, 10);
    c.select_best = false;
    const auto p = pgd_attack(m, x, c);
    c.kind = AttackKind::uap;
    const std::vector<Tensor> one{x};
    const auto u = uap_train(m, one, c);
    CHECK(u.perturbations[0] == p.perturbations[0]);
    CHECK(u.attacked[0] == p.attacked[0]);
}

TEST_CASE("uap closed form, zero budget and errors") {
    const ModelGraph m = linear_model(11);
    const Tensor& w = m.param("L1.weight");
    std::vector<Tensor> xs;
    for (std::uint64_t i = 0; i < 5; ++i) xs.push_back(random_tensor({1, 4, 4}, 40 + i, 0.0, 1.0));
    AttackConfig c = default_attack_config(AttackKind::uap);
    c.epsilon = 6.0 / 255.0;
    c.steps = 4;
    const auto r = uap_train(m, xs, c);
    REQUIRE(r.perturbations.size() == 1);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(r.perturbations[0][i] - 4.0 / 255.0 * (w[i] > 0 ? 1.0 : -1.0)) < 1e-15);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        CHECK(r.images[k].linf <= c.epsilon + 1e-12);
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(r.attacked[k][i] == std::clamp(xs[k][i] + r.perturbations[0][i], 0.0, 1.0));
    }

    c.epsilon = 0.0;
    const auto z = uap_train(m, xs, c);
    CHECK(max_abs(z.perturbations[0]) == 0.0);
    for (const auto& o : z.images) CHECK(o.attacked_score == o.clean_score);

    CHECK_THROWS_AS(uap_train(m, std::span<const Tensor>{}, c), InputError);
    c.kind = AttackKind::pgd;
    CHECK_THROWS_AS(uap_train(m, xs, c), ConfigError);
    c.step_size = 0.0;
    CHECK_THROWS_AS(pgd_attack(m, xs[0], c), ConfigError);
}

TEST_CASE("warp identities") {
    const Tensor x = random_tensor({3, 6, 7}, 1);
    CHECK(warp(x, Tensor({2, 6, 7})) == x);
    Tensor flat({2, 5, 5});
    for (auto& v : flat.values()) v = 0.37;
    const Tensor flow = random_tensor({2, 5, 5}, 2, -3.0, 3.0);
    CHECK(warp(flat, flow) == flat);
    // unit x-flow samples the right-hand neighbour, clamped at the edge
    Tensor shift({2, 6, 7});
    for (std::size_t p = 0; p < 42; ++p) shift[42 + p] = 1.0;
    const Tensor y = warp(x, shift);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 7; ++j) CHECK(y.at(c, i, j) == x.at(c, i, std::min<std::size_t>(j + 1, 6)));
}

TEST_CASE("warp and flow smoothness gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t h = 3 + seed % 4, w = 3 + seed % 5;
        const Tensor x = random_tensor({2, h, w}, 100 + seed);
        Tensor flow = random_tensor({2, h, w}, 200 + seed, 0.15, 0.85);
        // keep every sample point strictly inside, away from integer coordinates
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                if (i + 1 == h) flow.at(0, i, j) -= 1.0;
                if (j + 1 == w) flow.at(1, i, j) -= 1.0;
            }
        const Tensor r = random_tensor({2, h, w}, 300 + seed);
        const auto g = warp_backward(x, flow, r);
        CHECK(gradcheck::check([&](const Tensor& f) { return dot(warp(x, f), r); }, flow, g.flow) < 1e-4);
        CHECK(gradcheck::check([&](const Tensor& p) { return dot(warp(p, flow), r); }, x, g.input) < 1e-4);
        CHECK(gradcheck::check(flow_total_variation, flow, flow_total_variation_grad(flow)) < 1e-4);
    }
}

TEST_CASE("stadv ascends and leaves constant images alone") {
    const ModelGraph m = make_toy_model({}, 12);
    const AttackConfig c = default_attack_config(AttackKind::stadv);
    Tensor flat({3, 32, 32});
    for (auto& v : flat.values()) v = 0.5;
    const auto f = stadv_attack(m, flat, c);
    CHECK(f.attacked[0] == flat);
    CHECK(f.images[0].attacked_score == f.images[0].clean_score);

    int ascended = 0;
    for (std::uint64_t t = 0; t < 50; ++t) {
        const auto r = stadv_attack(m, random_tensor({3, 32, 32}, 500 + t, 0.0, 1.0), c);
        ascended += r.images[0].attacked_score >= r.images[0].clean_score;
        CHECK(r.max_flow <= std::sqrt(2.0) * c.steps * c.step_size + 1e-12);
    }
    CHECK(ascended >= 45);
}
