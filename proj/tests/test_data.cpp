#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oiqa/cayley.hpp"
#include "oiqa/dataset.hpp"
#include "oiqa/error.hpp"
#include "oiqa/metrics.hpp"
#include "oiqa/network.hpp"
#include "oiqa/serialize.hpp"
#include "test_util.hpp"

using namespace oiqa;
namespace fs = std::filesystem;
using testutil::random_tensor;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("oiqa_test_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and label-monotone") {
    const auto a = generate_dataset(500, 16, 42);
    const auto b = generate_dataset(500, 16, 42);
    REQUIRE(a.size() == 500);
    std::vector<double> labels, neg_severity;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].label == 1.0 - a[i].severity);
        CHECK((a[i].label >= 0.0 && a[i].label <= 1.0));
        for (double v : a[i].image.values()) CHECK((v >= 0.0 && v <= 1.0));
        labels.push_back(a[i].label);
        neg_severity.push_back(-a[i].severity);
    }
    CHECK(srocc(labels, neg_severity) == 1.0);
    CHECK(generate_dataset(5, 16, 43)[0].image != a[0].image);
    CHECK_THROWS(generate_dataset(1, 65, 0));
}

TEST_CASE("severity zero leaves the base image untouched") {
    const Tensor base = make_base_image(16, 3);
    for (auto k : {DistortionKind::gaussian_blur, DistortionKind::additive_noise, DistortionKind::contrast_crush})
        CHECK(apply_distortion(base, k, 0.0, 1) == base);
}

TEST_CASE("70/10/20 split is disjoint and exhaustive") {
    const auto s = split_dataset(1000, 5);
    CHECK(s.train.size() == 700);
    CHECK(s.val.size() == 100);
    CHECK(s.test.size() == 200);
    std::vector<int> seen(1000, 0);
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (auto i : *part) ++seen[i];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("ppm round trip and malformed files") {
    Rng rng(1);
    Tensor img({3, 5, 4});
    for (auto& v : img.values()) v = static_cast<double>(rng.below(256)) / 255.0;
    CHECK(decode_ppm(encode_ppm(img)) == img);
    Tensor gray({1, 3, 7});
    for (auto& v : gray.values()) v = static_cast<double>(rng.below(256)) / 255.0;
    CHECK(decode_ppm(encode_ppm(gray)) == gray);

    const std::string white = std::string("P6\n1 1\n255\n") + "\xff\xff\xff";
    const Tensor w = decode_ppm(white);
    CHECK(w.shape() == Shape{3, 1, 1});
    CHECK(w[0] == 1.0);

    try {
        decode_ppm("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06");
        FAIL("accepted maxval 65535");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\n\x01\x02"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n1 1 1"), FormatError);

    const fs::path dir = scratch("ppm");
    save_ppm(dir / "a.ppm", img);
    CHECK(load_ppm(dir / "a.ppm") == img);
}

TEST_CASE("dataset directory round trip") {
    const fs::path dir = scratch("dataset");
    const auto samples = generate_dataset(20, 8, 7);
    save_dataset(dir, samples, 9);
    const auto loaded = load_dataset(dir);
    REQUIRE(loaded.samples.size() == 20);
    const auto split = split_dataset(20, 9);
    CHECK(loaded.split.train == split.train);
    CHECK(loaded.split.test == split.test);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(loaded.samples[i].id == samples[i].id);
        CHECK(loaded.samples[i].label == samples[i].label);
        CHECK(loaded.samples[i].severity == samples[i].severity);
        CHECK(max_abs_diff(loaded.samples[i].image, samples[i].image) <= 0.5 / 255.0 + 1e-15);
    }
}

TEST_CASE("raw tensor cross-check file") {
    const std::string bytes = read_file(fs::path(OIQA_TEST_DATA_DIR) / "crosscheck_2x3.qten");
    const Tensor t = decode_tensor(bytes);
    CHECK(t.shape() == Shape{2, 3});
    const std::vector<double> expected{0.0, 1.0, -2.0, 0.5, 1.0 / 3.0, 1e-300};
    for (std::size_t i = 0; i < 6; ++i) CHECK(t[i] == expected[i]);
    CHECK(encode_tensor(t) == bytes);
    // 1.0 is 0x3ff0000000000000, stored least significant byte first
    CHECK(static_cast<unsigned char>(bytes[5 + 4 + 16 + 8 + 7]) == 0x3f);
    CHECK(static_cast<unsigned char>(bytes[5 + 4 + 16 + 8 + 6]) == 0xf0);

    CHECK_THROWS_AS(decode_tensor(bytes.substr(0, bytes.size() - 1)), FormatError);
    CHECK_THROWS_AS(decode_tensor("QTEN2" + bytes.substr(5)), FormatError);
    CHECK_THROWS_AS(encode_tensor(Tensor({2}, DType::complex128)), TypeError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    ModelGraph m = make_toy_model({}, 3);
    m.score_range = ScoreRange{-0.1234567890123, 1.0 / 3.0};
    m.layers[0].masked_channels = {1, 4};
    apply_masks(m);
    const std::string bytes = encode_checkpoint(m);
    CHECK(bytes.substr(0, 5) == "OIQA1");
    const ModelGraph back = decode_checkpoint(bytes);
    CHECK(back == m);
    CHECK(encode_checkpoint(back) == bytes);
    const Network a(m), b(back);
    for (std::uint64_t i = 0; i < 100; ++i) {
        const Tensor x = random_tensor({3, 32, 32}, i, 0.0, 1.0);
        CHECK(a.forward(x) == b.forward(x));
    }

    const fs::path dir = scratch("ckpt");
    save_checkpoint(m, dir / "m.ckpt");
    CHECK(load_checkpoint(dir / "m.ckpt") == m);
}

TEST_CASE("checkpoint corruption and version errors") {
    const ModelGraph m = make_toy_model({}, 4);
    const std::string bytes = encode_checkpoint(m);
    std::string flipped = bytes;
    flipped[flipped.size() - 17] ^= 0x01;
    try {
        decode_checkpoint(flipped);
        FAIL("corruption not detected");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("hash") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_checkpoint("OIQA2" + bytes.substr(5)), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 20)), FormatError);

    auto patch = [&](const std::string& from, const std::string& to) {
        std::string b = bytes;
        const auto pos = b.find(from);
        REQUIRE(pos != std::string::npos);
        REQUIRE(from.size() == to.size());
        b.replace(pos, from.size(), to);
        return b;
    };
    CHECK_THROWS_AS(decode_checkpoint(patch("\"version\":1", "\"version\":2")), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(patch("\"kind\":\"relu\"", "\"kind\":\"relx\"")), FormatError);
}

TEST_CASE("robust block survives reload with orthogonality intact") {
    const ModelGraph base = make_toy_model({}, 5);
    const ModelGraph m = insert_robust_block(base, conv_layer_indices(base).back(), 6);
    const ModelGraph back = decode_checkpoint(encode_checkpoint(m));
    const Network net(back);
    std::size_t blocks = 0;
    for (std::size_t i = 0; i < back.layers.size(); ++i)
        if (back.layers[i].kind == LayerKind::robust_block) {
            CHECK(net.cayley(i).orthogonality_residual() < 1e-9);
            ++blocks;
        }
    CHECK(blocks == 1);
}
