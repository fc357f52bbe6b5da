#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparseswin/ops.hpp"
#include "sparseswin/tensor.hpp"

namespace sparseswin {

/// Named parameter table. Iteration order is creation order, which is fixed
/// by the model builder, so optimizer updates and RNG consumption are
/// deterministic. Names use dot paths ("stage1.block0.attn.qkv.weight").
template <typename T>
class ParamRegistry {
  public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (index_.count(name) != 0) {
            throw std::logic_error("duplicate parameter name: " + name);
        }
        t.set_requires_grad(true);
        index_.emplace(name, items_.size());
        items_.emplace_back(name, std::move(t));
        return items_.back().second;
    }

    Tensor<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &items_[it->second].second;
    }
    const Tensor<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
    std::size_t size() const { return items_.size(); }

  private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
inline constexpr T kInitStd = T(0.02);

template <typename T>
struct Linear {
    Tensor<T> weight; // [out, in]
    Tensor<T> bias;   // [out], undefined when has_bias == false
    bool has_bias = true;

    Tensor<T> forward(const Tensor<T>& x) const {
        auto y = matmul(x, weight, /*transpose_b=*/true);
        return has_bias ? add_bias(y, bias) : y;
    }
};

template <typename T>
Linear<T> make_linear(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in, std::int64_t out,
                      bool bias, Rng& rng) {
    Linear<T> l;
    l.weight = reg.add(prefix + ".weight", Tensor<T>::trunc_normal({out, in}, rng, kInitStd<T>));
    l.has_bias = bias;
    if (bias) {
        l.bias = reg.add(prefix + ".bias", Tensor<T>::zeros({out}));
    }
    return l;
}

template <typename T>
struct LayerNorm {
    Tensor<T> gain;
    Tensor<T> bias;
    T eps = T(1e-5);

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
};

template <typename T>
LayerNorm<T> make_layer_norm(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t d) {
    LayerNorm<T> n;
    n.gain = reg.add(prefix + ".gain", Tensor<T>::full({d}, T(1)));
    n.bias = reg.add(prefix + ".bias", Tensor<T>::zeros({d}));
    return n;
}

template <typename T>
struct Conv2d {
    Tensor<T> weight; // [out, in, k, k]
    Tensor<T> bias;   // [out]
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

template <typename T>
Conv2d<T> make_conv2d(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t in, std::int64_t out,
                      std::int64_t kernel, std::int64_t stride, std::int64_t padding, Rng& rng) {
    Conv2d<T> c;
    c.weight = reg.add(prefix + ".weight", Tensor<T>::trunc_normal({out, in, kernel, kernel}, rng, kInitStd<T>));
    c.bias = reg.add(prefix + ".bias", Tensor<T>::zeros({out}));
    c.stride = stride;
    c.padding = padding;
    return c;
}

template <typename T>
struct Mlp {
    Linear<T> fc1;
    Linear<T> fc2;

    Tensor<T> forward(const Tensor<T>& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

template <typename T>
Mlp<T> make_mlp(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t dim, std::int64_t hidden,
                Rng& rng) {
    Mlp<T> m;
    m.fc1 = make_linear(reg, prefix + ".fc1", dim, hidden, /*bias=*/true, rng);
    m.fc2 = make_linear(reg, prefix + ".fc2", hidden, dim, /*bias=*/true, rng);
    return m;
}

template <typename T>
struct AttentionOut {
    Tensor<T> out;  // same shape as the input tokens
    Tensor<T> attn; // [G, heads, N, N] post-softmax weights
};

/// Scaled dot-product multi-head attention over token groups [G, N, dim],
/// with optional additive relative-position bias and window mask applied to
/// the logits before softmax. Scale is (dim/heads)^(-1/2) on the queries.
template <typename T>
struct MultiHeadAttention {
    Linear<T> qkv;  // dim -> 3*dim
    Linear<T> proj; // dim -> dim
    std::int64_t heads = 1;

    AttentionOut<T> forward(const Tensor<T>& x, const Tensor<T>* rel_table = nullptr,
                            const std::vector<std::int32_t>* rel_index = nullptr,
                            const Tensor<T>* mask = nullptr) const {
        if (x.rank() != 3) {
            throw ShapeError("attention expects [G, N, dim] tokens, got " + shape_str(x.shape()));
        }
        const std::int64_t g = x.dim(0);
        const std::int64_t n = x.dim(1);
        const std::int64_t dim = x.dim(2);
        if (dim % heads != 0) {
            throw ShapeError("attention dim " + std::to_string(dim) + " not divisible by heads " +
                             std::to_string(heads));
        }
        const std::int64_t hd = dim / heads;
        auto qkv3 = qkv.forward(x); // [G, N, 3*dim]
        auto split = [&](std::int64_t offset) {
            auto part = slice_last(qkv3, offset, dim);
            return permute(reshape(part, {g, n, heads, hd}), {0, 2, 1, 3}); // [G, heads, N, hd]
        };
        auto q = scale(split(0), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
        auto k = split(dim);
        auto v = split(2 * dim);
        auto logits = matmul(q, k, /*transpose_b=*/true); // [G, heads, N, N]
        if (rel_table != nullptr) {
            logits = add_rel_pos_bias(logits, *rel_table, *rel_index);
        }
        if (mask != nullptr) {
            logits = add_window_mask(logits, *mask);
        }
        auto attn = softmax(logits, -1);
        auto ctx = matmul(attn, v); // [G, heads, N, hd]
        auto out = reshape(permute(ctx, {0, 2, 1, 3}), {g, n, dim});
        out = proj.forward(out);
        return {out, attn};
    }
};

template <typename T>
MultiHeadAttention<T> make_attention(ParamRegistry<T>& reg, const std::string& prefix, std::int64_t dim,
                                     std::int64_t heads, bool qkv_bias, Rng& rng) {
    MultiHeadAttention<T> a;
    a.qkv = make_linear(reg, prefix + ".qkv", dim, 3 * dim, qkv_bias, rng);
    a.proj = make_linear(reg, prefix + ".proj", dim, dim, /*bias=*/true, rng);
    a.heads = heads;
    return a;
}

} // namespace sparseswin
