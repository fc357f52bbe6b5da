#pragma once

#include <cstdint>
#include <vector>

#include "sparseswin/tensor.hpp"

namespace sparseswin {

// Differentiable kernels. Every op is a pure function of its inputs; when a
// Graph is active and any input is tracked, the op records a backward node
// onto it. All loops run in a fixed order, so identical inputs give
// bit-identical outputs.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c);

template <typename T>
Tensor<T> absval(const Tensor<T>& x);

/// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);

/// Mean over one axis; the axis is removed from the shape.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes);

/// Cyclic shift over axes 1 and 2 of a rank-4 tensor (torch.roll semantics:
/// the element at index i moves to index i+shift, wrapping).
template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, std::int64_t shift_h, std::int64_t shift_w);

/// Contiguous slice along the last axis.
template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::int64_t start, std::int64_t len);

/// Broadcast add of a length-d vector over the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// Batched matrix product. a is [..., m, k]; b is either rank-2 (shared across
/// the batch) or has identical leading dims. With transpose_b, b is stored
/// [..., n, k] and used as its transpose.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Cross-correlation with square kernel, plus per-channel bias.
/// x: [B, Cin, H, W], w: [Cout, Cin, k, k], bias: [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t padding);

/// Standardize over the last axis, then affine: gain * xhat + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

/// Max-subtracted softmax along the given axis (negative axis counts from the
/// end).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Exact Gaussian-error-function GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Mean cross-entropy of logits [B, K] against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int32_t>& labels);

/// Gather each 2x2 neighborhood of a [B, H, W, C] tensor into 4C channels:
/// output [B, H/2, W/2, 4C], quadrant order (0,0), (0,1), (1,0), (1,1).
template <typename T>
Tensor<T> merge2x2(const Tensor<T>& x);

/// Add a learned relative-position bias to attention logits.
/// logits: [windows, heads, N, N], table: [buckets, heads],
/// index: N*N bucket lookups. Gradient flows into the table.
template <typename T>
Tensor<T> add_rel_pos_bias(const Tensor<T>& logits, const Tensor<T>& table,
                           const std::vector<std::int32_t>& index);

/// Add a constant per-window mask to attention logits. logits are
/// [B*num_windows, heads, N, N]; mask is [num_windows, N, N] and repeats over
/// the batch and head axes.
template <typename T>
Tensor<T> add_window_mask(const Tensor<T>& logits, const Tensor<T>& mask);

/// Row-wise argmax of [B, K] logits (first index wins ties). Not recorded.
template <typename T>
std::vector<std::int32_t> argmax_rows(const Tensor<T>& x);

} // namespace sparseswin
