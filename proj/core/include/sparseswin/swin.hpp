#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseswin/nn.hpp"

namespace sparseswin {

/// Per-stage hyperparameters. depth must be even (W-MSA/SW-MSA pairs),
/// dim divisible by heads, shift in [0, window).
struct StageConfig {
    std::int64_t depth = 2;
    std::int64_t dim = 96;
    std::int64_t heads = 3;
    std::int64_t window = 7;
    std::int64_t shift = 3;

    void validate() const;
};

/// Relative-coordinate bucket lookup for an M x M window: index[i*M*M + j] =
/// (dr + M - 1) * (2M - 1) + (dc + M - 1) where (dr, dc) is the coordinate
/// offset between positions i and j. Values lie in [0, (2M-1)^2).
std::vector<std::int32_t> rel_pos_index(std::int64_t window);

template <typename T>
struct RelPosBias {
    Tensor<T> table; // [(2M-1)^2, heads]
    std::vector<std::int32_t> index;
};

template <typename T>
RelPosBias<T> make_rel_pos_bias(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t window,
                                std::int64_t heads, Rng& rng);

/// [B, H, W, C] -> [B*(H/M)*(W/M), M*M, C]; windows ordered row-major over
/// the window grid, tokens row-major within a window.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::int64_t window);

/// Exact inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::int64_t window, std::int64_t b, std::int64_t h,
                         std::int64_t w);

/// Additive attention mask for shifted windows on an H x W grid: entry is 0
/// where two positions of a window originate from the same pre-shift region
/// and -1e9 otherwise. Constant (never tracked by a graph).
template <typename T>
Tensor<T> shift_mask(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift);

/// Window attention over partitioned tokens [nWindows, M*M, C]; mask is
/// nullptr for W-MSA. Returns outputs plus post-softmax attention weights.
template <typename T>
AttentionOut<T> window_msa(const Tensor<T>& windows, const MultiHeadAttention<T>& attn,
                           const RelPosBias<T>& bias, const Tensor<T>* mask = nullptr);

template <typename T>
struct PatchEmbed {
    Conv2d<T> conv; // kernel = stride = patch
    std::int64_t patch = 4;

    Tensor<T> forward(const Tensor<T>& img) const;
};

template <typename T>
PatchEmbed<T> make_patch_embed(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                               std::int64_t dim, std::int64_t patch, Rng& rng);

/// Concatenate 2x2 neighborhoods (4C), layer-normalize, project 4C -> out_dim
/// without bias. BCHW at the boundary.
template <typename T>
struct PatchMerging {
    LayerNorm<T> norm;
    Linear<T> reduce;

    Tensor<T> forward(const Tensor<T>& x) const;
};

template <typename T>
PatchMerging<T> make_patch_merging(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_dim,
                                   std::int64_t out_dim, Rng& rng);

/// One Swin block: x + window-MSA(LN(x)) then x + MLP(LN(x)), ratio-4 MLP.
/// shift > 0 selects the shifted variant (cyclic roll plus mask).
template <typename T>
struct SwinBlock {
    LayerNorm<T> norm1;
    MultiHeadAttention<T> attn;
    RelPosBias<T> rel;
    LayerNorm<T> norm2;
    Mlp<T> mlp;
    std::int64_t window = 7;
    std::int64_t shift = 0;

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* mask) const; // x: [B, H, W, C]
};

template <typename T>
SwinBlock<T> make_swin_block(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t dim,
                             std::int64_t heads, std::int64_t window, std::int64_t shift, Rng& rng);

/// depth blocks alternating W-MSA (even index) and SW-MSA (odd index).
/// BCHW at the stage boundary, BHWC between blocks.
template <typename T>
struct SwinStage {
    std::vector<SwinBlock<T>> blocks;
    std::int64_t window = 7;
    std::int64_t shift = 3;

    Tensor<T> forward(const Tensor<T>& x) const;
};

template <typename T>
SwinStage<T> make_swin_stage(ParamRegistry<T>& reg, const std::string& prefix, const StageConfig& cfg,
                             Rng& rng);

} // namespace sparseswin
