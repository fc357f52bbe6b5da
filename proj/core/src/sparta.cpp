#include "sparseswin/sparta.hpp"

namespace sparseswin {

void SparTaConfig::validate() const {
    if (t < 1 || e < 1 || loops < 1) {
        throw ConfigError("sparta t, e, and loops must all be >= 1");
    }
    if (heads < 1 || e % heads != 0) {
        throw ConfigError("sparta embedding dim " + std::to_string(e) + " must be divisible by heads " +
                          std::to_string(heads));
    }
    if (mlp_ratio < 1) {
        throw ConfigError("sparta mlp_ratio must be >= 1, got " + std::to_string(mlp_ratio));
    }
    if (conv_kernel < 1 || conv_stride < 1) {
        throw ConfigError("sparta conv kernel and stride must be >= 1");
    }
    if (in_features < 1) {
        throw ConfigError("sparta linear in_features must be >= 1, got " + std::to_string(in_features));
    }
}

template <typename T>
Tensor<T> SparseTokenConverter<T>::forward(const Tensor<T>& x) const {
    if (x.rank() != 4) {
        throw ShapeError("sparse_token_converter expects [B, C, h, w], got " + shape_str(x.shape()));
    }
    auto y = conv.forward(x); // [B, e, h', w']
    const std::int64_t b = y.dim(0);
    const std::int64_t hw = y.dim(2) * y.dim(3);
    if (hw != in_features) {
        throw ConfigError("sparse_token_converter: spatial size " + std::to_string(hw) +
                          " does not match configured linear in_features " + std::to_string(in_features));
    }
    auto flat = reshape(y, {b, e, hw});
    auto tokens = linear.forward(flat); // [B, e, t]
    return permute(tokens, {0, 2, 1}); // [B, t, e]
}

template <typename T>
SparseTokenConverter<T> make_sparse_token_converter(ParamRegistry<T>& reg, const std::string& prefix,
                                                    std::int64_t in_channels, const SparTaConfig& cfg,
                                                    Rng& rng) {
    SparseTokenConverter<T> c;
    c.conv = make_conv2d(reg, prefix + ".conv", in_channels, cfg.e, cfg.conv_kernel, cfg.conv_stride,
                         cfg.conv_kernel / 2, rng);
    c.linear = make_linear(reg, prefix + ".linear", cfg.in_features, cfg.t, /*bias=*/true, rng);
    c.t = cfg.t;
    c.e = cfg.e;
    c.in_features = cfg.in_features;
    return c;
}

template <typename T>
AttentionOut<T> TransformerBlock<T>::forward(const Tensor<T>& s) const {
    auto msa = attn.forward(norm1.forward(s));
    auto z_hat = add(msa.out, s);
    auto z = add(mlp.forward(norm2.forward(z_hat)), z_hat);
    return {z, msa.attn};
}

template <typename T>
TransformerBlock<T> make_transformer_block(ParamRegistry<T>& reg, const std::string& prefix,
                                           const SparTaConfig& cfg, Rng& rng) {
    TransformerBlock<T> blk;
    blk.norm1 = make_layer_norm(reg, prefix + ".norm1", cfg.e);
    blk.attn = make_attention(reg, prefix + ".attn", cfg.e, cfg.heads, cfg.qkv_bias, rng);
    blk.norm2 = make_layer_norm(reg, prefix + ".norm2", cfg.e);
    blk.mlp = make_mlp(reg, prefix + ".mlp", cfg.e, cfg.mlp_ratio * cfg.e, rng);
    return blk;
}

template <typename T>
SparTaState<T> SparTa<T>::forward(const Tensor<T>& x) const {
    SparTaState<T> state;
    state.tokens = converter.forward(x);
    state.attn.reserve(static_cast<std::size_t>(cfg.loops));
    for (std::int64_t i = 0; i < cfg.loops; ++i) {
        const auto& block = cfg.share_weights ? blocks[0] : blocks[static_cast<std::size_t>(i)];
        auto out = block.forward(state.tokens);
        state.tokens = out.out;
        state.attn.push_back(out.attn);
    }
    return state;
}

template <typename T>
SparTa<T> make_sparta(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                      const SparTaConfig& cfg, Rng& rng) {
    cfg.validate();
    SparTa<T> s;
    s.cfg = cfg;
    s.converter = make_sparse_token_converter(reg, prefix + ".converter", in_channels, cfg, rng);
    const std::int64_t block_count = cfg.share_weights ? 1 : cfg.loops;
    s.blocks.reserve(static_cast<std::size_t>(block_count));
    for (std::int64_t i = 0; i < block_count; ++i) {
        s.blocks.push_back(make_transformer_block(reg, prefix + ".block" + std::to_string(i), cfg, rng));
    }
    return s;
}

#define SPARSESWIN_INSTANTIATE_SPARTA(T)                                                                     \
    template struct SparseTokenConverter<T>;                                                                 \
    template SparseTokenConverter<T> make_sparse_token_converter(ParamRegistry<T>&, const std::string&,      \
                                                                 std::int64_t, const SparTaConfig&, Rng&);   \
    template struct TransformerBlock<T>;                                                                     \
    template TransformerBlock<T> make_transformer_block(ParamRegistry<T>&, const std::string&,               \
                                                        const SparTaConfig&, Rng&);                          \
    template struct SparTa<T>;                                                                               \
    template SparTa<T> make_sparta(ParamRegistry<T>&, const std::string&, std::int64_t,                      \
                                   const SparTaConfig&, Rng&);

SPARSESWIN_INSTANTIATE_SPARTA(float)
SPARSESWIN_INSTANTIATE_SPARTA(double)

#undef SPARSESWIN_INSTANTIATE_SPARTA

} // namespace sparseswin
