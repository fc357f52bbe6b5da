#pragma once

#include <string>

#include "sparseswin/data.hpp"
#include "sparseswin/model.hpp"
#include "sparseswin/train.hpp"

namespace sparseswin {

struct DataConfig {
    std::string source = "synthetic"; // synthetic | cifar10 | cifar100
    std::string path;                 // training batch file (cifar sources)
    std::string eval_path;            // evaluation batch file (cifar sources)
    std::int64_t classes = 100;       // must match model.num_classes
    std::int64_t train_count = 512;   // synthetic record counts
    std::int64_t eval_count = 128;
    std::uint64_t data_seed = 7;      // synthetic generation stream
    AugmentConfig augment;            // target_size mirrors model.input_size

    void validate() const;
};

struct RunConfig {
    SparseSwinConfig model;
    TrainConfig train;
    DataConfig data;

    void validate() const;
};

/// Parses the JSON run description. Every key is optional with the defaults
/// above; unknown keys and type mismatches are errors naming the path.
RunConfig parse_run_config(const std::string& json_text);

RunConfig load_run_config(const std::string& path);

/// Canonical echo: every field explicit, keys lexicographically ordered.
/// parse(echo(cfg)) reproduces cfg.
std::string run_config_to_json(const RunConfig& cfg);

/// (training set, evaluation set) per data.source. Synthetic sets are
/// disjoint streams derived from data_seed.
std::pair<Dataset, Dataset> load_datasets(const DataConfig& data);

} // namespace sparseswin
