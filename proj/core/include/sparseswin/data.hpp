#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sparseswin/tensor.hpp"

namespace sparseswin {

struct ImageRecord {
    std::int32_t label = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> pixels; // planar RGB: R plane, G plane, B plane
};

struct Dataset {
    std::int64_t num_classes = 0;
    std::vector<ImageRecord> records;
};

/// CIFAR binary batch files. cifar10 record: 1 label byte + 3072 pixel
/// bytes (32x32, planar RGB). cifar100 record: 2 label bytes (coarse then
/// fine; the fine label is used) + 3072 pixel bytes.
Dataset read_cifar(const std::string& path, const std::string& variant);
void write_cifar(const std::string& path, const Dataset& ds, const std::string& variant);

/// Linearly separable stand-in data: class k images are a fixed base color
/// pattern plus bounded per-pixel noise; labels assigned round-robin.
Dataset synthetic_dataset(std::int64_t classes, std::int64_t n, std::int64_t size, std::uint64_t seed);

struct AugmentConfig {
    std::int64_t target_size = 224;
    double hflip_prob = 0.5;
    std::string crop = "random_resized"; // random_resized | pad_crop | none
    double scale_min = 0.08;
    double scale_max = 1.0;
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> std{0.5, 0.5, 0.5};

    void validate() const;
};

/// Training pipeline: crop -> bilinear resize to target -> maybe hflip ->
/// scale to [0,1] -> per-channel normalize. Output [3, S, S].
template <typename T>
Tensor<T> augment(const ImageRecord& rec, const AugmentConfig& cfg, Rng& rng);

/// Deterministic eval pipeline: resize + normalize only.
template <typename T>
Tensor<T> eval_transform(const ImageRecord& rec, const AugmentConfig& cfg);

/// Bilinear interpolation with the half-pixel (align-corners=false)
/// convention and edge clamping. img is [C, H, W].
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, std::int64_t out_h, std::int64_t out_w);

template <typename T>
Tensor<T> hflip(const Tensor<T>& img); // [C, H, W]

/// Fisher-Yates permutation of [0, n); a pure function of (seed, epoch).
std::vector<std::int64_t> shuffle_indices(std::int64_t n, std::uint64_t seed, std::int64_t epoch);

/// Augmentation stream for one record: a pure function of
/// (seed, record index, epoch), so any record can be re-derived in isolation.
Rng augment_rng(std::uint64_t seed, std::int64_t index, std::int64_t epoch);

/// Stacks the listed records into ([B, 3, S, S], labels); train selects the
/// stochastic pipeline, eval the deterministic one.
template <typename T>
std::pair<Tensor<T>, std::vector<std::int32_t>> make_batch(const Dataset& ds,
                                                           const std::vector<std::int64_t>& indices,
                                                           const AugmentConfig& cfg, std::uint64_t seed,
                                                           std::int64_t epoch, bool train);

} // namespace sparseswin
