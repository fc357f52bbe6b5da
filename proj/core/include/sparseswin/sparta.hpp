#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseswin/nn.hpp"

namespace sparseswin {

struct SparTaConfig {
    std::int64_t t = 49;     // latent token count
    std::int64_t e = 512;    // embedding dim
    std::int64_t heads = 16;
    std::int64_t mlp_ratio = 4;
    std::int64_t loops = 2;
    bool qkv_bias = true;
    std::int64_t conv_kernel = 3;
    std::int64_t conv_stride = 1;
    std::int64_t in_features = 49; // h*w entering the spatial linear map
    bool share_weights = false;    // one block applied `loops` times

    void validate() const;
};

/// Latent tokens plus the post-softmax attention weights captured from each
/// loop, in loop order. Gradients flow back through the captured tensors.
template <typename T>
struct SparTaState {
    Tensor<T> tokens;               // [B, t, e]
    std::vector<Tensor<T>> attn;    // loops x [B, heads, t, t]
};

/// conv2d C -> e (stride 1, padding kernel/2, spatial-preserving), flatten
/// spatial, shared linear h*w -> t along the spatial axis, transpose to
/// [B, t, e].
template <typename T>
struct SparseTokenConverter {
    Conv2d<T> conv;
    Linear<T> linear; // [t, h*w] weight, [t] bias
    std::int64_t t = 49;
    std::int64_t e = 512;
    std::int64_t in_features = 49;

    Tensor<T> forward(const Tensor<T>& x) const; // x: [B, C, h, w]
};

template <typename T>
SparseTokenConverter<T> make_sparse_token_converter(ParamRegistry<T>& reg, const std::string& prefix,
                                                    std::int64_t in_channels, const SparTaConfig& cfg,
                                                    Rng& rng);

/// z_hat = MSA(LN(s)) + s; z = MLP(LN(z_hat)) + z_hat. Returns z plus the
/// post-softmax attention weights.
template <typename T>
struct TransformerBlock {
    LayerNorm<T> norm1;
    MultiHeadAttention<T> attn;
    LayerNorm<T> norm2;
    Mlp<T> mlp;

    AttentionOut<T> forward(const Tensor<T>& s) const; // s: [B, t, e]
};

template <typename T>
TransformerBlock<T> make_transformer_block(ParamRegistry<T>& reg, const std::string& prefix,
                                           const SparTaConfig& cfg, Rng& rng);

template <typename T>
struct SparTa {
    SparseTokenConverter<T> converter;
    std::vector<TransformerBlock<T>> blocks; // size loops, or 1 when weights are shared
    SparTaConfig cfg;

    SparTaState<T> forward(const Tensor<T>& x) const; // x: [B, C, h, w]
};

template <typename T>
SparTa<T> make_sparta(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                      const SparTaConfig& cfg, Rng& rng);

} // namespace sparseswin
