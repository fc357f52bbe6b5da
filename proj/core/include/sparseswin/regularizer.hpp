#pragma once

#include <string>
#include <vector>

#include "sparseswin/tensor.hpp"

namespace sparseswin {

struct RegConfig {
    std::string kind = "none"; // none | l1 | l2
    double lambda = 0.0;
    bool average = false; // divide by total attention element count

    void validate() const;
};

/// Penalty on the captured post-softmax attention weights, summed over every
/// loop: l1 -> lambda * sum|a|, l2 -> lambda * sum a^2, none -> 0.
/// Differentiable; participates in backward when the inputs are tracked.
template <typename T>
Tensor<T> penalty(const std::vector<Tensor<T>>& attn, const RegConfig& cfg);

} // namespace sparseswin
