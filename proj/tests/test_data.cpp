#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sparseswin/data.hpp"

using namespace sparseswin;
using F = Tensor<float>;
using D = Tensor<double>;

namespace {

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_all_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

} // namespace

TEST_CASE("cifar10 files round-trip and match the byte layout exactly") {
    Dataset ds = synthetic_dataset(10, 10, 32, 99);
    const std::string path = "roundtrip10.bin";
    write_cifar(path, ds, "cifar10");

    const auto bytes = read_all_bytes(path);
    CHECK(bytes.size() == 30730); // 10 records x (1 + 3072)
    // record i: label byte at i*3073, pixel j at i*3073 + 1 + j
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& rec = ds.records[i];
        CHECK(bytes[i * 3073] == static_cast<std::uint8_t>(rec.label));
        for (std::size_t j : {std::size_t{0}, std::size_t{1}, std::size_t{1024}, std::size_t{3071}}) {
            CHECK(bytes[i * 3073 + 1 + j] == rec.pixels[j]);
        }
    }
    CHECK(bytes[0] == static_cast<std::uint8_t>(ds.records[0].label));

    Dataset back = read_cifar(path, "cifar10");
    CHECK(back.num_classes == 10);
    REQUIRE(back.records.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(back.records[i].label == ds.records[i].label);
        CHECK(back.records[i].height == 32);
        CHECK(back.records[i].width == 32);
        CHECK(back.records[i].pixels == ds.records[i].pixels);
    }
    std::remove(path.c_str());
}

TEST_CASE("cifar100 records carry a coarse byte and use the fine label") {
    Dataset ds = synthetic_dataset(100, 4, 32, 5);
    ds.records[2].label = 77;
    const std::string path = "roundtrip100.bin";
    write_cifar(path, ds, "cifar100");

    const auto bytes = read_all_bytes(path);
    CHECK(bytes.size() == 4 * 3074);
    CHECK(bytes[2 * 3074] == 0);      // coarse byte
    CHECK(bytes[2 * 3074 + 1] == 77); // fine label

    Dataset back = read_cifar(path, "cifar100");
    CHECK(back.num_classes == 100);
    REQUIRE(back.records.size() == 4);
    CHECK(back.records[2].label == 77);
    CHECK(back.records[3].pixels == ds.records[3].pixels);
    std::remove(path.c_str());
}

TEST_CASE("malformed cifar files are rejected") {
    Dataset ds = synthetic_dataset(10, 3, 32, 7);
    const std::string path = "broken.bin";
    write_cifar(path, ds, "cifar10");
    auto bytes = read_all_bytes(path);

    bytes.pop_back(); // truncated final record
    write_all_bytes(path, bytes);
    CHECK_THROWS_AS(read_cifar(path, "cifar10"), DataError);

    bytes.push_back(0);
    bytes[0] = 10; // label outside [0, 10)
    write_all_bytes(path, bytes);
    CHECK_THROWS_AS(read_cifar(path, "cifar10"), DataError);

    write_all_bytes(path, {});
    CHECK_THROWS_AS(read_cifar(path, "cifar10"), DataError);
    std::remove(path.c_str());

    CHECK_THROWS_AS(read_cifar("no-such-file.bin", "cifar10"), DataError);
    CHECK_THROWS_AS(read_cifar(path, "cifar20"), ConfigError);
}

TEST_CASE("synthetic data is deterministic, balanced, and separable") {
    Dataset a = synthetic_dataset(4, 12, 32, 123);
    Dataset b = synthetic_dataset(4, 12, 32, 123);
    REQUIRE(a.records.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(a.records[i].label == static_cast<std::int32_t>(i % 4)); // round-robin
        CHECK(a.records[i].pixels == b.records[i].pixels);
    }
    Dataset c = synthetic_dataset(4, 12, 32, 124);
    CHECK(a.records[0].pixels != c.records[0].pixels);

    // nearest-centroid on per-channel means classifies every record
    const auto base = [](std::int32_t label, int ch) {
        return static_cast<double>(32 + (label * 67 + ch * 97) % 160);
    };
    Dataset big = synthetic_dataset(4, 64, 32, 9);
    for (const auto& rec : big.records) {
        double mean[3];
        for (int ch = 0; ch < 3; ++ch) {
            double s = 0;
            for (std::int64_t p = 0; p < 32 * 32; ++p) s += rec.pixels[ch * 1024 + p];
            mean[ch] = s / 1024.0;
        }
        int best = -1;
        double best_d = 1e300;
        for (int k = 0; k < 4; ++k) {
            double d = 0;
            for (int ch = 0; ch < 3; ++ch) d += (mean[ch] - base(k, ch)) * (mean[ch] - base(k, ch));
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        CHECK(best == rec.label);
    }

    CHECK_THROWS_AS(synthetic_dataset(1, 4, 32, 0), ConfigError);
    CHECK_THROWS_AS(synthetic_dataset(4, 0, 32, 0), ConfigError);
}

TEST_CASE("bilinear resize follows the half-pixel convention") {
    D img = D::from({1, 2, 2}, {0, 2, 4, 6});
    CHECK(bilinear_resize(img, 1, 1).item() == doctest::Approx(3.0).epsilon(1e-12));

    D up = bilinear_resize(img, 4, 4);
    REQUIRE(up.shape() == Shape{1, 4, 4});
    CHECK(up.data()[0] == doctest::Approx(0.0));          // clamped corner
    CHECK(up.data()[1 * 4 + 1] == doctest::Approx(1.5));  // wy = wx = 0.25
    CHECK(up.data()[3 * 4 + 3] == doctest::Approx(6.0));  // clamped corner
    CHECK(up.data()[1 * 4 + 2] == doctest::Approx(2.5));  // wx = 0.75 toward the right column

    // same-size resize is the identity
    Rng rng(3);
    D noise = D::randn({3, 5, 7}, rng);
    D same = bilinear_resize(noise, 5, 7);
    for (std::int64_t i = 0; i < noise.numel(); ++i) CHECK(same.data()[i] == noise.data()[i]);

    CHECK_THROWS_AS(bilinear_resize(D::zeros({2, 2}), 4, 4), ShapeError);
}

TEST_CASE("hflip mirrors columns and is an involution") {
    D img = D::from({1, 1, 3}, {1, 2, 3});
    D f = hflip(img);
    CHECK(f.data()[0] == 3.0);
    CHECK(f.data()[1] == 2.0);
    CHECK(f.data()[2] == 1.0);

    Rng rng(5);
    D noise = D::randn({3, 4, 6}, rng);
    D twice = hflip(hflip(noise));
    for (std::int64_t i = 0; i < noise.numel(); ++i) CHECK(twice.data()[i] == noise.data()[i]);
}

TEST_CASE("eval transform normalizes into the configured range") {
    Dataset ds = synthetic_dataset(4, 2, 32, 11);
    AugmentConfig cfg;
    cfg.target_size = 32;
    F out = eval_transform<float>(ds.records[0], cfg);
    REQUIRE(out.shape() == Shape{3, 32, 32});
    for (float v : out.data()) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }

    // a constant record stays constant at the normalized value
    ImageRecord flat;
    flat.label = 0;
    flat.height = 16;
    flat.width = 16;
    flat.pixels.assign(3 * 16 * 16, 128);
    cfg.target_size = 24;
    D up = eval_transform<double>(flat, cfg);
    const double expect = (128.0 / 255.0 - 0.5) / 0.5;
    REQUIRE(up.shape() == Shape{3, 24, 24});
    for (double v : up.data()) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("augmentation streams are pure functions of (seed, index, epoch)") {
    Dataset ds = synthetic_dataset(4, 6, 32, 13);
    AugmentConfig cfg;
    cfg.target_size = 32;
    cfg.crop = "pad_crop";
    cfg.hflip_prob = 0.5;

    Rng r1 = augment_rng(42, 3, 1);
    Rng r2 = augment_rng(42, 3, 1);
    F a = augment<float>(ds.records[3], cfg, r1);
    F b = augment<float>(ds.records[3], cfg, r2);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

    // across epochs the stream changes eventually
    bool any_diff = false;
    for (std::int64_t epoch = 2; epoch < 8 && !any_diff; ++epoch) {
        Rng r3 = augment_rng(42, 3, epoch);
        F c = augment<float>(ds.records[3], cfg, r3);
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            if (a.data()[i] != c.data()[i]) {
                any_diff = true;
                break;
            }
        }
    }
    CHECK(any_diff);

    // with all randomness disabled, training equals the eval pipeline
    AugmentConfig plain;
    plain.target_size = 32;
    plain.crop = "none";
    plain.hflip_prob = 0.0;
    Rng r4 = augment_rng(1, 0, 0);
    F train_img = augment<float>(ds.records[0], plain, r4);
    F eval_img = eval_transform<float>(ds.records[0], plain);
    for (std::int64_t i = 0; i < train_img.numel(); ++i)
        CHECK(train_img.data()[i] == eval_img.data()[i]);

    AugmentConfig bad;
    bad.hflip_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = AugmentConfig{};
    bad.crop = "center";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = AugmentConfig{};
    bad.scale_min = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("shuffles are reproducible permutations that vary by epoch") {
    auto p0 = shuffle_indices(100, 7, 0);
    auto p0_again = shuffle_indices(100, 7, 0);
    CHECK(p0 == p0_again);

    auto sorted = p0;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::int64_t> iota(100);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);

    CHECK(shuffle_indices(100, 7, 1) != p0);
    CHECK(shuffle_indices(100, 8, 0) != p0);
    CHECK(shuffle_indices(1, 7, 0) == std::vector<std::int64_t>{0});
}

TEST_CASE("batches stack records in index order") {
    Dataset ds = synthetic_dataset(4, 10, 32, 17);
    AugmentConfig cfg;
    cfg.target_size = 32;
    cfg.crop = "none";
    cfg.hflip_prob = 0.0;

    auto [full, labels] = make_batch<float>(ds, {0, 1, 2, 3}, cfg, 1, 0, /*train=*/false);
    REQUIRE(full.shape() == Shape{4, 3, 32, 32});
    REQUIRE(labels.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(labels[i] == ds.records[i].label);

    auto [tail, tail_labels] = make_batch<float>(ds, {8, 9}, cfg, 1, 0, false);
    CHECK(tail.shape() == Shape{2, 3, 32, 32});
    CHECK(tail_labels[1] == ds.records[9].label);

    // each slot equals the standalone transform of its record
    F single = eval_transform<float>(ds.records[2], cfg);
    for (std::int64_t i = 0; i < single.numel(); ++i)
        CHECK(full.data()[2 * single.numel() + i] == single.data()[i]);

    CHECK_THROWS_AS(make_batch<float>(ds, {}, cfg, 1, 0, false), DataError);
    CHECK_THROWS_AS(make_batch<float>(ds, {10}, cfg, 1, 0, false), DataError);
}
