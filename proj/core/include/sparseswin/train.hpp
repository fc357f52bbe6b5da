#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sparseswin/data.hpp"
#include "sparseswin/model.hpp"
#include "sparseswin/regularizer.hpp"

namespace sparseswin {

struct TrainConfig {
    std::string optimizer = "adam"; // adam | adamw
    double lr = 1e-4;
    double weight_decay = 0.0; // adamw only; must be 0 under adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t batch = 128;
    std::int64_t steps = 100;
    std::uint64_t seed = 42;
    std::vector<int> freeze_stages; // stage numbers in {1, 2, 3}
    RegConfig reg;

    void validate() const;
};

/// First/second moment buffers per trainable parameter plus the step count.
/// Frozen parameters carry no state.
template <typename T>
struct OptimState {
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
    std::int64_t step = 0;
};

struct StepMetrics {
    std::int64_t step = 0;
    double loss = 0;    // ce + penalty (the optimized objective)
    double ce = 0;
    double penalty = 0;
    double acc = 0;     // training-batch accuracy before the update
};

/// One Adam/AdamW update over every trainable parameter, consuming the
/// gradients currently stored on them (absent gradient = zero). AdamW adds
/// decoupled decay, skipping biases, layer-norm parameters, and
/// relative-position tables.
template <typename T>
void optimizer_step(ParamRegistry<T>& params, OptimState<T>& state, const TrainConfig& cfg);

/// Runs n optimization steps starting from state.step. Applies the
/// configured stage freeze, derives every batch and augmentation from
/// (seed, epoch, step), and aborts with a diagnostic on non-finite loss.
template <typename T>
std::vector<StepMetrics> train_steps(Model<T>& model, const Dataset& ds, const TrainConfig& cfg,
                                     const AugmentConfig& aug, OptimState<T>& state, std::int64_t n);

/// (top-1 accuracy, mean cross-entropy) under the deterministic eval
/// pipeline; the regularization penalty is excluded.
template <typename T>
std::pair<double, double> evaluate(const Model<T>& model, const Dataset& ds, std::int64_t batch,
                                   const AugmentConfig& aug);

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& history);

struct CheckpointMeta {
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::string config_json;
};

/// Binary checkpoint: magic "SSWN", u32 version, u64 entry count, then
/// lexicographically sorted entries of (u32 name length, name, u8 dtype,
/// u32 ndim, u64 dims, u64 byte length, raw little-endian data). Holds
/// param.<name>, optim.{m,v}.<name>, meta.{step,seed,config}.
template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const OptimState<T>& state,
                     std::uint64_t seed, const std::string& config_json);

/// Restores parameters into the model and moments into state; returns the
/// stored metadata. Shape or dtype mismatches and unknown entries are errors.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, Model<T>& model, OptimState<T>& state);

} // namespace sparseswin
