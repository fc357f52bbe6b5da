#include "sparseswin/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sparseswin {

using nlohmann::json;

void DataConfig::validate() const {
    if (source != "synthetic" && source != "cifar10" && source != "cifar100") {
        throw ConfigError("data.source must be \"synthetic\", \"cifar10\", or \"cifar100\", got \"" +
                          source + "\"");
    }
    if (classes < 2) throw ConfigError("data.classes must be at least 2");
    if (source == "synthetic") {
        if (train_count < 1) throw ConfigError("data.train_count must be at least 1");
        if (eval_count < 1) throw ConfigError("data.eval_count must be at least 1");
    } else {
        if (path.empty()) throw ConfigError("data.path is required for source \"" + source + "\"");
        const std::int64_t fixed = source == "cifar10" ? 10 : 100;
        if (classes != fixed) {
            throw ConfigError("data.classes must be " + std::to_string(fixed) + " for source \"" +
                              source + "\"");
        }
    }
    augment.validate();
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    data.validate();
    if (data.classes != model.num_classes) {
        throw ConfigError("data.classes (" + std::to_string(data.classes) +
                          ") must match model.num_classes (" + std::to_string(model.num_classes) + ")");
    }
}

namespace {

[[noreturn]] void bad_type(const std::string& path, const char* expected) {
    throw ConfigError("config key " + path + " must be " + std::string(expected));
}

void check_object(const json& j, const std::string& path) {
    if (!j.is_object()) bad_type(path, "an object");
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown config key " + path + "." + item.key());
    }
}

void get_i64(const json& j, const std::string& path, const char* key, std::int64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) bad_type(path + "." + key, "an integer");
    out = v.get<std::int64_t>();
}

void get_u64(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
        bad_type(path + "." + key, "a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void get_f64(const json& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) bad_type(path + "." + key, "a number");
    out = v.get<double>();
}

void get_bool(const json& j, const std::string& path, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_boolean()) bad_type(path + "." + key, "a boolean");
    out = v.get<bool>();
}

void get_str(const json& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_string()) bad_type(path + "." + key, "a string");
    out = v.get<std::string>();
}

template <typename T, std::size_t N>
void get_array(const json& j, const std::string& path, const char* key, std::array<T, N>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != N) {
        bad_type(path + "." + key, ("an array of " + std::to_string(N) + " numbers").c_str());
    }
    for (std::size_t i = 0; i < N; ++i) {
        if (!v[i].is_number()) bad_type(path + "." + key, "an array of numbers");
        out[i] = v[i].get<T>();
    }
}

void parse_sparta(const json& j, const std::string& path, SparTaConfig& out) {
    check_object(j, path);
    check_keys(j, path,
               {"t", "e", "heads", "mlp_ratio", "loops", "qkv_bias", "conv_kernel", "conv_stride",
                "in_features", "share_weights"});
    get_i64(j, path, "t", out.t);
    get_i64(j, path, "e", out.e);
    get_i64(j, path, "heads", out.heads);
    get_i64(j, path, "mlp_ratio", out.mlp_ratio);
    get_i64(j, path, "loops", out.loops);
    get_bool(j, path, "qkv_bias", out.qkv_bias);
    get_i64(j, path, "conv_kernel", out.conv_kernel);
    get_i64(j, path, "conv_stride", out.conv_stride);
    get_i64(j, path, "in_features", out.in_features);
    get_bool(j, path, "share_weights", out.share_weights);
}

void parse_model(const json& j, SparseSwinConfig& out) {
    const std::string path = "model";
    check_object(j, path);
    check_keys(j, path,
               {"input_size", "patch", "stage_dims", "stage_depths", "stage_heads", "window", "shift",
                "sparta_in_dim", "sparta", "num_classes", "head_pool"});
    get_i64(j, path, "input_size", out.input_size);
    get_i64(j, path, "patch", out.patch);
    get_array(j, path, "stage_dims", out.stage_dims);
    get_array(j, path, "stage_depths", out.stage_depths);
    get_array(j, path, "stage_heads", out.stage_heads);
    get_i64(j, path, "window", out.window);
    get_i64(j, path, "shift", out.shift);
    get_i64(j, path, "sparta_in_dim", out.sparta_in_dim);
    if (j.contains("sparta")) parse_sparta(j.at("sparta"), "model.sparta", out.sparta);
    get_i64(j, path, "num_classes", out.num_classes);
    get_str(j, path, "head_pool", out.head_pool);
}

void parse_reg(const json& j, RegConfig& out) {
    const std::string path = "train.reg";
    check_object(j, path);
    check_keys(j, path, {"kind", "lambda", "average"});
    get_str(j, path, "kind", out.kind);
    get_f64(j, path, "lambda", out.lambda);
    get_bool(j, path, "average", out.average);
}

void parse_train(const json& j, TrainConfig& out) {
    const std::string path = "train";
    check_object(j, path);
    check_keys(j, path,
               {"optimizer", "lr", "weight_decay", "beta1", "beta2", "eps", "batch", "steps", "seed",
                "freeze_stages", "reg"});
    get_str(j, path, "optimizer", out.optimizer);
    get_f64(j, path, "lr", out.lr);
    get_f64(j, path, "weight_decay", out.weight_decay);
    get_f64(j, path, "beta1", out.beta1);
    get_f64(j, path, "beta2", out.beta2);
    get_f64(j, path, "eps", out.eps);
    get_i64(j, path, "batch", out.batch);
    get_i64(j, path, "steps", out.steps);
    get_u64(j, path, "seed", out.seed);
    if (j.contains("freeze_stages")) {
        const auto& v = j.at("freeze_stages");
        if (!v.is_array()) bad_type("train.freeze_stages", "an array of integers");
        out.freeze_stages.clear();
        for (const auto& e : v) {
            if (!e.is_number_integer() && !e.is_number_unsigned()) {
                bad_type("train.freeze_stages", "an array of integers");
            }
            out.freeze_stages.push_back(e.get<int>());
        }
    }
    if (j.contains("reg")) parse_reg(j.at("reg"), out.reg);
}

void parse_augment(const json& j, AugmentConfig& out) {
    const std::string path = "data.augment";
    check_object(j, path);
    check_keys(j, path, {"hflip_prob", "crop", "scale_min", "scale_max", "mean", "std"});
    get_f64(j, path, "hflip_prob", out.hflip_prob);
    get_str(j, path, "crop", out.crop);
    get_f64(j, path, "scale_min", out.scale_min);
    get_f64(j, path, "scale_max", out.scale_max);
    get_array(j, path, "mean", out.mean);
    get_array(j, path, "std", out.std);
}

void parse_data(const json& j, DataConfig& out) {
    const std::string path = "data";
    check_object(j, path);
    check_keys(j, path,
               {"source", "path", "eval_path", "classes", "train_count", "eval_count", "data_seed",
                "augment"});
    get_str(j, path, "source", out.source);
    get_str(j, path, "path", out.path);
    get_str(j, path, "eval_path", out.eval_path);
    get_i64(j, path, "classes", out.classes);
    get_i64(j, path, "train_count", out.train_count);
    get_i64(j, path, "eval_count", out.eval_count);
    get_u64(j, path, "data_seed", out.data_seed);
    if (j.contains("augment")) parse_augment(j.at("augment"), out.augment);
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_object(j, "config");
    check_keys(j, "config", {"model", "train", "data"});
    RunConfig cfg;
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("data")) parse_data(j.at("data"), cfg.data);
    cfg.data.augment.target_size = cfg.model.input_size;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    json& m = j["model"];
    m["input_size"] = cfg.model.input_size;
    m["patch"] = cfg.model.patch;
    m["stage_dims"] = cfg.model.stage_dims;
    m["stage_depths"] = cfg.model.stage_depths;
    m["stage_heads"] = cfg.model.stage_heads;
    m["window"] = cfg.model.window;
    m["shift"] = cfg.model.shift;
    m["sparta_in_dim"] = cfg.model.sparta_in_dim;
    m["num_classes"] = cfg.model.num_classes;
    m["head_pool"] = cfg.model.head_pool;
    json& sp = m["sparta"];
    sp["t"] = cfg.model.sparta.t;
    sp["e"] = cfg.model.sparta.e;
    sp["heads"] = cfg.model.sparta.heads;
    sp["mlp_ratio"] = cfg.model.sparta.mlp_ratio;
    sp["loops"] = cfg.model.sparta.loops;
    sp["qkv_bias"] = cfg.model.sparta.qkv_bias;
    sp["conv_kernel"] = cfg.model.sparta.conv_kernel;
    sp["conv_stride"] = cfg.model.sparta.conv_stride;
    sp["in_features"] = cfg.model.sparta.in_features;
    sp["share_weights"] = cfg.model.sparta.share_weights;
    json& t = j["train"];
    t["optimizer"] = cfg.train.optimizer;
    t["lr"] = cfg.train.lr;
    t["weight_decay"] = cfg.train.weight_decay;
    t["beta1"] = cfg.train.beta1;
    t["beta2"] = cfg.train.beta2;
    t["eps"] = cfg.train.eps;
    t["batch"] = cfg.train.batch;
    t["steps"] = cfg.train.steps;
    t["seed"] = cfg.train.seed;
    t["freeze_stages"] = cfg.train.freeze_stages;
    json& r = t["reg"];
    r["kind"] = cfg.train.reg.kind;
    r["lambda"] = cfg.train.reg.lambda;
    r["average"] = cfg.train.reg.average;
    json& d = j["data"];
    d["source"] = cfg.data.source;
    d["path"] = cfg.data.path;
    d["eval_path"] = cfg.data.eval_path;
    d["classes"] = cfg.data.classes;
    d["train_count"] = cfg.data.train_count;
    d["eval_count"] = cfg.data.eval_count;
    d["data_seed"] = cfg.data.data_seed;
    json& a = d["augment"];
    a["hflip_prob"] = cfg.data.augment.hflip_prob;
    a["crop"] = cfg.data.augment.crop;
    a["scale_min"] = cfg.data.augment.scale_min;
    a["scale_max"] = cfg.data.augment.scale_max;
    a["mean"] = cfg.data.augment.mean;
    a["std"] = cfg.data.augment.std;
    return j.dump(2);
}

std::pair<Dataset, Dataset> load_datasets(const DataConfig& data) {
    data.validate();
    if (data.source == "synthetic") {
        const std::int64_t size = data.augment.target_size;
        Dataset train = synthetic_dataset(data.classes, data.train_count, size,
                                          Rng::mix(data.data_seed, 0x747261696eULL));
        Dataset eval = synthetic_dataset(data.classes, data.eval_count, size,
                                         Rng::mix(data.data_seed, 0x6576616cULL));
        return {std::move(train), std::move(eval)};
    }
    Dataset train = read_cifar(data.path, data.source);
    Dataset eval = read_cifar(data.eval_path.empty() ? data.path : data.eval_path, data.source);
    return {std::move(train), std::move(eval)};
}

} // namespace sparseswin
