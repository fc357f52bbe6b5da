#include "sparseswin/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace sparseswin {

namespace {

constexpr std::int64_t kCifarSide = 32;
constexpr std::int64_t kCifarPixels = 3 * kCifarSide * kCifarSide;

constexpr std::uint64_t kSyntheticTag = 0x53594e5448ULL;
constexpr std::uint64_t kShuffleTag = 0x53485546ULL;
constexpr std::uint64_t kAugmentTag = 0x41554754ULL;

struct CifarLayout {
    std::int64_t label_bytes;
    std::int64_t classes;
};

CifarLayout cifar_layout(const std::string& variant) {
    if (variant == "cifar10") {
        return {1, 10};
    }
    if (variant == "cifar100") {
        return {2, 100};
    }
    throw ConfigError("unknown CIFAR variant \"" + variant + "\" (expected cifar10 or cifar100)");
}

} // namespace

Dataset read_cifar(const std::string& path, const std::string& variant) {
    const CifarLayout layout = cifar_layout(variant);
    const std::int64_t record_size = layout.label_bytes + kCifarPixels;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open CIFAR file: " + path);
    }
    in.seekg(0, std::ios::end);
    const std::int64_t size = static_cast<std::int64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (size == 0 || size % record_size != 0) {
        throw DataError("CIFAR file " + path + " has size " + std::to_string(size) +
                        ", not a positive multiple of the record size " + std::to_string(record_size));
    }
    Dataset ds;
    ds.num_classes = layout.classes;
    const std::int64_t count = size / record_size;
    ds.records.resize(static_cast<std::size_t>(count));
    std::vector<char> buf(static_cast<std::size_t>(record_size));
    for (std::int64_t i = 0; i < count; ++i) {
        in.read(buf.data(), record_size);
        if (!in) {
            throw DataError("short read in CIFAR file " + path);
        }
        auto& rec = ds.records[static_cast<std::size_t>(i)];
        const auto label = static_cast<std::int32_t>(
            static_cast<std::uint8_t>(buf[static_cast<std::size_t>(layout.label_bytes - 1)]));
        if (label >= layout.classes) {
            throw DataError("CIFAR record " + std::to_string(i) + " has label " + std::to_string(label) +
                            ", outside [0, " + std::to_string(layout.classes) + ")");
        }
        rec.label = label;
        rec.height = kCifarSide;
        rec.width = kCifarSide;
        rec.pixels.assign(buf.begin() + layout.label_bytes, buf.end());
    }
    return ds;
}

void write_cifar(const std::string& path, const Dataset& ds, const std::string& variant) {
    const CifarLayout layout = cifar_layout(variant);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open CIFAR file for writing: " + path);
    }
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& rec = ds.records[i];
        if (rec.height != kCifarSide || rec.width != kCifarSide ||
            rec.pixels.size() != static_cast<std::size_t>(kCifarPixels)) {
            throw DataError("record " + std::to_string(i) + " is not 32x32 RGB; cannot write CIFAR format");
        }
        if (rec.label < 0 || rec.label >= layout.classes) {
            throw DataError("record " + std::to_string(i) + " label " + std::to_string(rec.label) +
                            " outside [0, " + std::to_string(layout.classes) + ")");
        }
        if (layout.label_bytes == 2) {
            out.put(0); // coarse label: unused by the reader
        }
        out.put(static_cast<char>(rec.label));
        out.write(reinterpret_cast<const char*>(rec.pixels.data()),
                  static_cast<std::streamsize>(rec.pixels.size()));
    }
    if (!out) {
        throw DataError("write failed for CIFAR file " + path);
    }
}

Dataset synthetic_dataset(std::int64_t classes, std::int64_t n, std::int64_t size, std::uint64_t seed) {
    if (classes < 2) {
        throw ConfigError("synthetic_dataset requires classes >= 2, got " + std::to_string(classes));
    }
    if (n < 1 || size < 1) {
        throw ConfigError("synthetic_dataset requires n >= 1 and size >= 1");
    }
    Dataset ds;
    ds.num_classes = classes;
    ds.records.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        auto& rec = ds.records[static_cast<std::size_t>(i)];
        rec.label = static_cast<std::int32_t>(i % classes);
        rec.height = size;
        rec.width = size;
        rec.pixels.resize(static_cast<std::size_t>(3 * size * size));
        Rng rng(Rng::mix(Rng::mix(seed, kSyntheticTag), static_cast<std::uint64_t>(i)));
        for (int c = 0; c < 3; ++c) {
            const std::int64_t base = 32 + (rec.label * 67 + c * 97) % 160;
            std::uint8_t* plane = rec.pixels.data() + c * size * size;
            for (std::int64_t p = 0; p < size * size; ++p) {
                const std::int64_t noise = rng.uniform_int(41) - 20;
                plane[p] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(base + noise, 0, 255));
            }
        }
    }
    return ds;
}

void AugmentConfig::validate() const {
    if (target_size < 1) {
        throw ConfigError("augment.target_size must be >= 1, got " + std::to_string(target_size));
    }
    if (hflip_prob < 0 || hflip_prob > 1) {
        throw ConfigError("augment.hflip_prob must lie in [0, 1], got " + std::to_string(hflip_prob));
    }
    if (crop != "random_resized" && crop != "pad_crop" && crop != "none") {
        throw ConfigError("augment.crop must be one of random_resized, pad_crop, none; got \"" + crop +
                          "\"");
    }
    if (!(scale_min > 0) || scale_min > scale_max || scale_max > 1) {
        throw ConfigError("augment.scale_range must satisfy 0 < min <= max <= 1");
    }
    for (double s : std) {
        if (s <= 0) {
            throw ConfigError("augment.std entries must be positive");
        }
    }
}

namespace {

template <typename T>
Tensor<T> record_to_tensor(const ImageRecord& rec) {
    std::vector<T> v(rec.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<T>(rec.pixels[i]);
    }
    return Tensor<T>::from({3, rec.height, rec.width}, std::move(v));
}

template <typename T>
Tensor<T> crop_region(const Tensor<T>& img, std::int64_t top, std::int64_t left, std::int64_t side) {
    const std::int64_t h = img.dim(1);
    const std::int64_t w = img.dim(2);
    auto out = Tensor<T>::zeros({3, side, side});
    const auto src = img.data();
    auto dst = out.mutable_data();
    for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < side; ++y) {
            std::memcpy(dst.data() + (c * side + y) * side, src.data() + (c * h + top + y) * w + left,
                        sizeof(T) * static_cast<std::size_t>(side));
        }
    }
    return out;
}

template <typename T>
Tensor<T> pad_then_crop(const Tensor<T>& img, std::int64_t pad, std::int64_t top, std::int64_t left) {
    const std::int64_t h = img.dim(1);
    const std::int64_t w = img.dim(2);
    auto out = Tensor<T>::zeros({3, h, w});
    const auto src = img.data();
    auto dst = out.mutable_data();
    for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = y + top - pad; // coordinate in the unpadded image
            if (sy < 0 || sy >= h) {
                continue; // zero padding
            }
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t sx = x + left - pad;
                if (sx < 0 || sx >= w) {
                    continue;
                }
                dst[(c * h + y) * w + x] = src[(c * h + sy) * w + sx];
            }
        }
    }
    return out;
}

template <typename T>
void normalize_inplace(Tensor<T>& img, const AugmentConfig& cfg) {
    const std::int64_t plane = img.dim(1) * img.dim(2);
    auto v = img.mutable_data();
    for (std::int64_t c = 0; c < 3; ++c) {
        const T mean = static_cast<T>(cfg.mean[static_cast<std::size_t>(c)]);
        const T inv_std = static_cast<T>(1.0 / cfg.std[static_cast<std::size_t>(c)]);
        T* p = v.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            p[i] = (p[i] / T(255) - mean) * inv_std;
        }
    }
}

} // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, std::int64_t out_h, std::int64_t out_w) {
    if (img.rank() != 3) {
        throw ShapeError("bilinear_resize expects [C, H, W], got " + shape_str(img.shape()));
    }
    const std::int64_t c = img.dim(0);
    const std::int64_t h = img.dim(1);
    const std::int64_t w = img.dim(2);
    auto out = Tensor<T>::zeros({c, out_h, out_w});
    const auto src = img.data();
    auto dst = out.mutable_data();
    const double sh = static_cast<double>(h) / static_cast<double>(out_h);
    const double sw = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::int64_t y = 0; y < out_h; ++y) {
        double sy = (static_cast<double>(y) + 0.5) * sh - 0.5;
        if (sy < 0) {
            sy = 0;
        }
        std::int64_t y0 = static_cast<std::int64_t>(sy);
        if (y0 > h - 1) {
            y0 = h - 1;
        }
        const std::int64_t y1 = std::min(y0 + 1, h - 1);
        const double wy = sy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < out_w; ++x) {
            double sx = (static_cast<double>(x) + 0.5) * sw - 0.5;
            if (sx < 0) {
                sx = 0;
            }
            std::int64_t x0 = static_cast<std::int64_t>(sx);
            if (x0 > w - 1) {
                x0 = w - 1;
            }
            const std::int64_t x1 = std::min(x0 + 1, w - 1);
            const double wx = sx - static_cast<double>(x0);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const T* plane = src.data() + ch * h * w;
                const double top = static_cast<double>(plane[y0 * w + x0]) * (1.0 - wx) +
                                   static_cast<double>(plane[y0 * w + x1]) * wx;
                const double bot = static_cast<double>(plane[y1 * w + x0]) * (1.0 - wx) +
                                   static_cast<double>(plane[y1 * w + x1]) * wx;
                dst[(ch * out_h + y) * out_w + x] = static_cast<T>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& img) {
    if (img.rank() != 3) {
        throw ShapeError("hflip expects [C, H, W], got " + shape_str(img.shape()));
    }
    const std::int64_t c = img.dim(0);
    const std::int64_t h = img.dim(1);
    const std::int64_t w = img.dim(2);
    auto out = Tensor<T>::zeros(img.shape());
    const auto src = img.data();
    auto dst = out.mutable_data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < h; ++y) {
            const T* srow = src.data() + (ch * h + y) * w;
            T* drow = dst.data() + (ch * h + y) * w;
            for (std::int64_t x = 0; x < w; ++x) {
                drow[x] = srow[w - 1 - x];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> augment(const ImageRecord& rec, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    auto img = record_to_tensor<T>(rec);
    if (cfg.crop == "random_resized") {
        const double area = cfg.scale_min + rng.uniform() * (cfg.scale_max - cfg.scale_min);
        const std::int64_t limit = std::min(rec.height, rec.width);
        std::int64_t side = static_cast<std::int64_t>(std::sqrt(area) * static_cast<double>(limit));
        side = std::clamp<std::int64_t>(side, 1, limit);
        const std::int64_t top = rng.uniform_int(rec.height - side + 1);
        const std::int64_t left = rng.uniform_int(rec.width - side + 1);
        img = crop_region(img, top, left, side);
    } else if (cfg.crop == "pad_crop") {
        const std::int64_t pad = 4;
        const std::int64_t top = rng.uniform_int(2 * pad + 1);
        const std::int64_t left = rng.uniform_int(2 * pad + 1);
        img = pad_then_crop(img, pad, top, left);
    }
    if (img.dim(1) != cfg.target_size || img.dim(2) != cfg.target_size) {
        img = bilinear_resize(img, cfg.target_size, cfg.target_size);
    }
    if (rng.uniform() < cfg.hflip_prob) {
        img = hflip(img);
    }
    normalize_inplace(img, cfg);
    return img;
}

template <typename T>
Tensor<T> eval_transform(const ImageRecord& rec, const AugmentConfig& cfg) {
    cfg.validate();
    auto img = record_to_tensor<T>(rec);
    if (img.dim(1) != cfg.target_size || img.dim(2) != cfg.target_size) {
        img = bilinear_resize(img, cfg.target_size, cfg.target_size);
    }
    normalize_inplace(img, cfg);
    return img;
}

std::vector<std::int64_t> shuffle_indices(std::int64_t n, std::uint64_t seed, std::int64_t epoch) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    Rng rng(Rng::mix(Rng::mix(seed, kShuffleTag), static_cast<std::uint64_t>(epoch)));
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = rng.uniform_int(i + 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

Rng augment_rng(std::uint64_t seed, std::int64_t index, std::int64_t epoch) {
    return Rng(Rng::mix(Rng::mix(Rng::mix(seed, kAugmentTag), static_cast<std::uint64_t>(index)),
                        static_cast<std::uint64_t>(epoch)));
}

template <typename T>
std::pair<Tensor<T>, std::vector<std::int32_t>> make_batch(const Dataset& ds,
                                                           const std::vector<std::int64_t>& indices,
                                                           const AugmentConfig& cfg, std::uint64_t seed,
                                                           std::int64_t epoch, bool train) {
    if (indices.empty()) {
        throw DataError("empty batch");
    }
    const std::int64_t b = static_cast<std::int64_t>(indices.size());
    const std::int64_t s = cfg.target_size;
    auto images = Tensor<T>::zeros({b, 3, s, s});
    std::vector<std::int32_t> labels(static_cast<std::size_t>(b));
    auto dst = images.mutable_data();
    const std::int64_t stride = 3 * s * s;
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t idx = indices[static_cast<std::size_t>(i)];
        if (idx < 0 || idx >= static_cast<std::int64_t>(ds.records.size())) {
            throw DataError("batch index " + std::to_string(idx) + " out of range");
        }
        const auto& rec = ds.records[static_cast<std::size_t>(idx)];
        Tensor<T> img;
        if (train) {
            Rng rng = augment_rng(seed, idx, epoch);
            img = augment<T>(rec, cfg, rng);
        } else {
            img = eval_transform<T>(rec, cfg);
        }
        std::memcpy(dst.data() + i * stride, img.data().data(),
                    sizeof(T) * static_cast<std::size_t>(stride));
        labels[static_cast<std::size_t>(i)] = rec.label;
    }
    return {std::move(images), std::move(labels)};
}

#define SPARSESWIN_INSTANTIATE_DATA(T)                                                                       \
    template Tensor<T> augment(const ImageRecord&, const AugmentConfig&, Rng&);                              \
    template Tensor<T> eval_transform(const ImageRecord&, const AugmentConfig&);                             \
    template Tensor<T> bilinear_resize(const Tensor<T>&, std::int64_t, std::int64_t);                        \
    template Tensor<T> hflip(const Tensor<T>&);                                                              \
    template std::pair<Tensor<T>, std::vector<std::int32_t>> make_batch(                                     \
        const Dataset&, const std::vector<std::int64_t>&, const AugmentConfig&, std::uint64_t,               \
        std::int64_t, bool);

SPARSESWIN_INSTANTIATE_DATA(float)
SPARSESWIN_INSTANTIATE_DATA(double)

#undef SPARSESWIN_INSTANTIATE_DATA

} // namespace sparseswin
