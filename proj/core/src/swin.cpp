#include "sparseswin/swin.hpp"

namespace sparseswin {

void StageConfig::validate() const {
    if (depth < 2 || depth % 2 != 0) {
        throw ConfigError("stage depth must be a positive even number, got " + std::to_string(depth));
    }
    if (dim < 1 || heads < 1 || dim % heads != 0) {
        throw ConfigError("stage dim " + std::to_string(dim) + " must be divisible by heads " +
                          std::to_string(heads));
    }
    if (window < 1) {
        throw ConfigError("window size must be >= 1, got " + std::to_string(window));
    }
    if (shift < 0 || shift >= window) {
        throw ConfigError("shift " + std::to_string(shift) + " must lie in [0, window=" +
                          std::to_string(window) + ")");
    }
}

std::vector<std::int32_t> rel_pos_index(std::int64_t window) {
    const std::int64_t n = window * window;
    const std::int64_t span = 2 * window - 1;
    std::vector<std::int32_t> index(static_cast<std::size_t>(n * n));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t ri = i / window;
        const std::int64_t ci = i % window;
        for (std::int64_t j = 0; j < n; ++j) {
            const std::int64_t dr = ri - j / window + window - 1;
            const std::int64_t dc = ci - j % window + window - 1;
            index[static_cast<std::size_t>(i * n + j)] = static_cast<std::int32_t>(dr * span + dc);
        }
    }
    return index;
}

template <typename T>
RelPosBias<T> make_rel_pos_bias(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t window,
                                std::int64_t heads, Rng& rng) {
    RelPosBias<T> b;
    const std::int64_t buckets = (2 * window - 1) * (2 * window - 1);
    b.table = reg.add(prefix + ".table", Tensor<T>::trunc_normal({buckets, heads}, rng, kInitStd<T>));
    b.index = rel_pos_index(window);
    return b;
}

namespace {

void check_window_divisible(std::int64_t h, std::int64_t w, std::int64_t m) {
    if (m < 1 || h % m != 0 || w % m != 0) {
        throw ConfigError("spatial extents " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by window " + std::to_string(m));
    }
}

} // namespace

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::int64_t window) {
    if (x.rank() != 4) {
        throw ShapeError("window_partition expects [B, H, W, C], got " + shape_str(x.shape()));
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t h = x.dim(1);
    const std::int64_t w = x.dim(2);
    const std::int64_t c = x.dim(3);
    check_window_divisible(h, w, window);
    auto x6 = reshape(x, {b, h / window, window, w / window, window, c});
    auto xp = permute(x6, {0, 1, 3, 2, 4, 5});
    return reshape(xp, {b * (h / window) * (w / window), window * window, c});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::int64_t window, std::int64_t b, std::int64_t h,
                         std::int64_t w) {
    if (windows.rank() != 3) {
        throw ShapeError("window_reverse expects [nW, M*M, C], got " + shape_str(windows.shape()));
    }
    check_window_divisible(h, w, window);
    const std::int64_t c = windows.dim(2);
    if (windows.dim(0) != b * (h / window) * (w / window) || windows.dim(1) != window * window) {
        throw ShapeError("window_reverse: " + shape_str(windows.shape()) + " does not tile " +
                         std::to_string(h) + "x" + std::to_string(w) + " with window " +
                         std::to_string(window));
    }
    auto x6 = reshape(windows, {b, h / window, w / window, window, window, c});
    auto xp = permute(x6, {0, 1, 3, 2, 4, 5});
    return reshape(xp, {b, h, w, c});
}

template <typename T>
Tensor<T> shift_mask(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift) {
    check_window_divisible(h, w, window);
    if (shift < 0 || shift >= window) {
        throw ConfigError("shift " + std::to_string(shift) + " must lie in [0, window=" +
                          std::to_string(window) + ")");
    }
    // Region id per cell of the shifted canvas: the three bands [0, L-M),
    // [L-M, L-s), [L-s, L) per axis separate cells whose pre-shift sources
    // are not contiguous. Cells sharing a label may attend to each other.
    const auto band = [&](std::int64_t i, std::int64_t len) {
        if (i < len - window) {
            return 0;
        }
        return i < len - shift ? 1 : 2;
    };
    const std::int64_t m2 = window * window;
    const std::int64_t wins_h = h / window;
    const std::int64_t wins_w = w / window;
    auto mask = Tensor<T>::zeros({wins_h * wins_w, m2, m2});
    auto mv = mask.mutable_data();
    std::vector<int> label(static_cast<std::size_t>(m2));
    for (std::int64_t wi = 0; wi < wins_h; ++wi) {
        for (std::int64_t wj = 0; wj < wins_w; ++wj) {
            for (std::int64_t i = 0; i < m2; ++i) {
                const std::int64_t r = wi * window + i / window;
                const std::int64_t c = wj * window + i % window;
                label[static_cast<std::size_t>(i)] = band(r, h) * 3 + band(c, w);
            }
            T* dst = mv.data() + (wi * wins_w + wj) * m2 * m2;
            for (std::int64_t i = 0; i < m2; ++i) {
                for (std::int64_t j = 0; j < m2; ++j) {
                    dst[i * m2 + j] =
                        label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)]
                            ? T(0)
                            : T(-1e9);
                }
            }
        }
    }
    return mask;
}

template <typename T>
AttentionOut<T> window_msa(const Tensor<T>& windows, const MultiHeadAttention<T>& attn,
                           const RelPosBias<T>& bias, const Tensor<T>* mask) {
    return attn.forward(windows, &bias.table, &bias.index, mask);
}

template <typename T>
Tensor<T> PatchEmbed<T>::forward(const Tensor<T>& img) const {
    if (img.rank() != 4) {
        throw ShapeError("patch_embed expects [B, C, H, W], got " + shape_str(img.shape()));
    }
    if (img.dim(2) % patch != 0 || img.dim(3) % patch != 0) {
        throw ConfigError("image extents " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(3)) +
                          " not divisible by patch " + std::to_string(patch));
    }
    return conv.forward(img);
}

template <typename T>
PatchEmbed<T> make_patch_embed(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                               std::int64_t dim, std::int64_t patch, Rng& rng) {
    PatchEmbed<T> e;
    e.conv = make_conv2d(reg, prefix + ".conv", in_channels, dim, patch, patch, 0, rng);
    e.patch = patch;
    return e;
}

template <typename T>
Tensor<T> PatchMerging<T>::forward(const Tensor<T>& x) const {
    auto h = permute(x, {0, 2, 3, 1});
    h = merge2x2(h);
    h = norm.forward(h);
    h = reduce.forward(h);
    return permute(h, {0, 3, 1, 2});
}

template <typename T>
PatchMerging<T> make_patch_merging(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_dim,
                                   std::int64_t out_dim, Rng& rng) {
    PatchMerging<T> m;
    m.norm = make_layer_norm(reg, prefix + ".norm", 4 * in_dim);
    m.reduce = make_linear(reg, prefix + ".reduce", 4 * in_dim, out_dim, /*bias=*/false, rng);
    return m;
}

template <typename T>
Tensor<T> SwinBlock<T>::forward(const Tensor<T>& x, const Tensor<T>* mask) const {
    const std::int64_t b = x.dim(0);
    const std::int64_t h = x.dim(1);
    const std::int64_t w = x.dim(2);
    auto y = norm1.forward(x);
    if (shift > 0) {
        y = roll2d(y, -shift, -shift);
    }
    auto windows = window_partition(y, window);
    auto att = window_msa(windows, attn, rel, shift > 0 ? mask : nullptr);
    y = window_reverse(att.out, window, b, h, w);
    if (shift > 0) {
        y = roll2d(y, shift, shift);
    }
    auto z = add(x, y);
    return add(z, mlp.forward(norm2.forward(z)));
}

template <typename T>
SwinBlock<T> make_swin_block(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t dim,
                             std::int64_t heads, std::int64_t window, std::int64_t shift, Rng& rng) {
    SwinBlock<T> blk;
    blk.norm1 = make_layer_norm(reg, prefix + ".norm1", dim);
    blk.attn = make_attention(reg, prefix + ".attn", dim, heads, /*qkv_bias=*/true, rng);
    blk.rel = make_rel_pos_bias(reg, prefix + ".attn.rel_pos", window, heads, rng);
    blk.norm2 = make_layer_norm(reg, prefix + ".norm2", dim);
    blk.mlp = make_mlp(reg, prefix + ".mlp", dim, 4 * dim, rng);
    blk.window = window;
    blk.shift = shift;
    return blk;
}

template <typename T>
Tensor<T> SwinStage<T>::forward(const Tensor<T>& x) const {
    if (x.rank() != 4) {
        throw ShapeError("swin_stage expects [B, C, H, W], got " + shape_str(x.shape()));
    }
    auto h = permute(x, {0, 2, 3, 1});
    Tensor<T> mask;
    const Tensor<T>* mask_ptr = nullptr;
    for (const auto& block : blocks) {
        if (block.shift > 0 && mask_ptr == nullptr) {
            mask = shift_mask<T>(h.dim(1), h.dim(2), window, shift);
            mask_ptr = &mask;
        }
        h = block.forward(h, block.shift > 0 ? mask_ptr : nullptr);
    }
    return permute(h, {0, 3, 1, 2});
}

template <typename T>
SwinStage<T> make_swin_stage(ParamRegistry<T>& reg, const std::string& prefix, const StageConfig& cfg,
                             Rng& rng) {
    cfg.validate();
    SwinStage<T> stage;
    stage.window = cfg.window;
    stage.shift = cfg.shift;
    stage.blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (std::int64_t j = 0; j < cfg.depth; ++j) {
        const std::int64_t shift = (j % 2 == 1) ? cfg.shift : 0;
        stage.blocks.push_back(make_swin_block(reg, prefix + ".block" + std::to_string(j), cfg.dim,
                                               cfg.heads, cfg.window, shift, rng));
    }
    return stage;
}

#define SPARSESWIN_INSTANTIATE_SWIN(T)                                                                       \
    template RelPosBias<T> make_rel_pos_bias(ParamRegistry<T>&, const std::string&, std::int64_t,            \
                                             std::int64_t, Rng&);                                            \
    template Tensor<T> window_partition(const Tensor<T>&, std::int64_t);                                     \
    template Tensor<T> window_reverse(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t,            \
                                      std::int64_t);                                                         \
    template Tensor<T> shift_mask(std::int64_t, std::int64_t, std::int64_t, std::int64_t);                   \
    template AttentionOut<T> window_msa(const Tensor<T>&, const MultiHeadAttention<T>&,                      \
                                        const RelPosBias<T>&, const Tensor<T>*);                             \
    template struct PatchEmbed<T>;                                                                           \
    template PatchEmbed<T> make_patch_embed(ParamRegistry<T>&, const std::string&, std::int64_t,             \
                                            std::int64_t, std::int64_t, Rng&);                               \
    template struct PatchMerging<T>;                                                                         \
    template PatchMerging<T> make_patch_merging(ParamRegistry<T>&, const std::string&, std::int64_t,         \
                                                std::int64_t, Rng&);                                         \
    template struct SwinBlock<T>;                                                                            \
    template SwinBlock<T> make_swin_block(ParamRegistry<T>&, const std::string&, std::int64_t,               \
                                          std::int64_t, std::int64_t, std::int64_t, Rng&);                   \
    template struct SwinStage<T>;                                                                            \
    template SwinStage<T> make_swin_stage(ParamRegistry<T>&, const std::string&, const StageConfig&, Rng&);

SPARSESWIN_INSTANTIATE_SWIN(float)
SPARSESWIN_INSTANTIATE_SWIN(double)

#undef SPARSESWIN_INSTANTIATE_SWIN

} // namespace sparseswin
