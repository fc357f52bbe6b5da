#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sparseswin/sparta.hpp"
#include "sparseswin/swin.hpp"

namespace sparseswin {

struct SparseSwinConfig {
    std::int64_t input_size = 224;
    std::int64_t patch = 4;
    std::array<std::int64_t, 3> stage_dims{96, 192, 384};
    std::array<std::int64_t, 3> stage_depths{2, 2, 6};
    std::array<std::int64_t, 3> stage_heads{3, 6, 12};
    std::int64_t window = 7;
    std::int64_t shift = 3;
    std::int64_t sparta_in_dim = 0; // 0 = derive as 2 * stage_dims[2]
    SparTaConfig sparta;
    std::int64_t num_classes = 100;
    std::string head_pool = "mean_token";

    /// Channels entering the SparTa block (after the final merge).
    std::int64_t sparta_channels() const { return sparta_in_dim > 0 ? sparta_in_dim : 2 * stage_dims[2]; }
    /// Spatial extent of the grid entering SparTa: input / (patch * 8).
    std::int64_t final_grid(std::int64_t input) const { return input / (patch * 8); }

    void validate() const; // throws ConfigError naming the offending field
};

/// Published 100-class total (17.58 M) the report is compared against; the
/// delta is reported, exact agreement is not expected (the original count's
/// breakdown is not public).
inline constexpr std::int64_t kPublishedParamTotal = 17'580'000;

struct ParamReport {
    std::vector<std::pair<std::string, std::int64_t>> params; // registry order
    std::map<std::string, std::int64_t> subtotals;            // by top-level group
    std::int64_t total = 0;

    std::string to_json() const; // flat, lexicographically ordered keys
};

/// Multiply-accumulate counts for one forward pass of a single image.
struct FlopReport {
    std::int64_t backbone = 0;
    std::int64_t sparta_converter = 0;
    std::int64_t sparta_msa = 0;
    std::int64_t sparta_mlp = 0;
    std::int64_t head = 0;

    std::int64_t total() const { return backbone + sparta_converter + sparta_msa + sparta_mlp + head; }
    std::string to_json() const;
};

using FreezeMask = std::map<std::string, bool>; // name -> trainable

template <typename T>
struct Model {
    SparseSwinConfig cfg;
    ParamRegistry<T> params;
    PatchEmbed<T> embed;
    std::array<SwinStage<T>, 3> stages;
    std::array<PatchMerging<T>, 3> merges;
    SparTa<T> sparta;
    LayerNorm<T> head_norm;
    Linear<T> head_fc;

    /// images: [B, 3, S, S] -> logits [B, num_classes]. When state is given,
    /// the SparTa tokens and captured attention weights are stored there.
    Tensor<T> forward(const Tensor<T>& images, SparTaState<T>* state = nullptr) const;

    /// Feature map entering SparTa: [B, C, S/32, S/32].
    Tensor<T> backbone_forward(const Tensor<T>& images) const;
};

template <typename T>
Model<T> build(const SparseSwinConfig& cfg, std::uint64_t seed);

template <typename T>
ParamReport count_params(const Model<T>& model);

/// Pure config arithmetic; input_size may differ from cfg.input_size.
FlopReport count_flops(const SparseSwinConfig& cfg, std::int64_t input_size);

/// Marks parameters under the listed groups non-trainable and everything
/// else trainable. Valid group names: stage1, stage2, stage3, sparta, head.
template <typename T>
FreezeMask freeze(Model<T>& model, const std::set<std::string>& groups);

/// Human-readable shape chain for the configured input size, one entry per
/// architectural step (embed, stages, merges, sparta, head).
std::vector<std::pair<std::string, std::string>> describe(const SparseSwinConfig& cfg);

} // namespace sparseswin
