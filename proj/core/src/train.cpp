#include "sparseswin/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sparseswin/ops.hpp"

namespace sparseswin {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void TrainConfig::validate() const {
    if (optimizer != "adam" && optimizer != "adamw") {
        throw ConfigError("train.optimizer must be \"adam\" or \"adamw\", got \"" + optimizer + "\"");
    }
    if (!(lr > 0)) throw ConfigError("train.lr must be positive");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
    if (optimizer == "adam" && weight_decay != 0) {
        throw ConfigError("train.weight_decay requires optimizer \"adamw\"");
    }
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("train.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta2 must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("train.eps must be positive");
    if (batch < 1) throw ConfigError("train.batch must be at least 1");
    if (steps < 0) throw ConfigError("train.steps must be non-negative");
    for (int s : freeze_stages) {
        if (s < 1 || s > 3) {
            throw ConfigError("train.freeze_stages entries must be stage numbers 1..3, got " +
                              std::to_string(s));
        }
    }
    reg.validate();
}

// Decoupled decay skips biases, layer-norm parameters, and relative-position
// bias tables.
static bool decay_applies(const std::string& name) {
    return !(name.ends_with(".bias") || name.ends_with(".gain") || name.ends_with(".table"));
}

template <typename T>
void optimizer_step(ParamRegistry<T>& params, OptimState<T>& state, const TrainConfig& cfg) {
    cfg.validate();
    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(cfg.beta1, t);
    const double corr2 = 1.0 - std::pow(cfg.beta2, t);
    const bool decoupled = cfg.optimizer == "adamw" && cfg.weight_decay != 0;
    for (auto& [name, param] : params.items()) {
        if (!param.requires_grad()) continue;
        const std::int64_t n = param.numel();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(static_cast<std::size_t>(n), T(0));
        if (v.empty()) v.assign(static_cast<std::size_t>(n), T(0));
        if (static_cast<std::int64_t>(m.size()) != n || static_cast<std::int64_t>(v.size()) != n) {
            throw ShapeError("optimizer state size mismatch for " + name);
        }
        const T* g = param.has_grad() ? param.grad().data() : nullptr;
        T* theta = param.mutable_data().data();
        const bool decay = decoupled && decay_applies(name);
        for (std::int64_t i = 0; i < n; ++i) {
            const double gi = g ? static_cast<double>(g[i]) : 0.0;
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / corr1;
            const double vhat = vi / corr2;
            double next = static_cast<double>(theta[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (decay) next -= cfg.lr * cfg.weight_decay * static_cast<double>(theta[i]);
            theta[i] = static_cast<T>(next);
        }
    }
}

template <typename T>
std::vector<StepMetrics> train_steps(Model<T>& model, const Dataset& ds, const TrainConfig& cfg,
                                     const AugmentConfig& aug, OptimState<T>& state, std::int64_t n) {
    cfg.validate();
    aug.validate();
    if (ds.records.empty()) throw DataError("training dataset is empty");
    std::set<std::string> frozen;
    for (int s : cfg.freeze_stages) frozen.insert("stage" + std::to_string(s));
    freeze(model, frozen);

    const std::int64_t total = static_cast<std::int64_t>(ds.records.size());
    const std::int64_t steps_per_epoch = (total + cfg.batch - 1) / cfg.batch;
    std::int64_t cached_epoch = -1;
    std::vector<std::int64_t> perm;

    std::vector<StepMetrics> history;
    history.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t done = state.step;
        const std::int64_t epoch = done / steps_per_epoch;
        const std::int64_t pos = done % steps_per_epoch;
        if (epoch != cached_epoch) {
            perm = shuffle_indices(total, cfg.seed, epoch);
            cached_epoch = epoch;
        }
        const std::int64_t lo = pos * cfg.batch;
        const std::int64_t hi = std::min(lo + cfg.batch, total);
        const std::vector<std::int64_t> indices(perm.begin() + lo, perm.begin() + hi);
        auto [images, labels] = make_batch<T>(ds, indices, aug, cfg.seed, epoch, /*train=*/true);

        Graph<T> graph;
        typename Graph<T>::Scope scope(graph);
        SparTaState<T> sparta_state;
        Tensor<T> logits = model.forward(images, &sparta_state);
        Tensor<T> ce = cross_entropy(logits, labels);
        Tensor<T> pen = penalty<T>(sparta_state.attn, cfg.reg);
        Tensor<T> loss = add(ce, pen);
        const double loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
            throw NumericError("non-finite loss at step " + std::to_string(done + 1) + "; " +
                               graph.first_nonfinite());
        }
        const auto preds = argmax_rows(logits);
        std::int64_t correct = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (preds[i] == labels[i]) ++correct;
        }
        graph.backward(loss);
        optimizer_step(model.params, state, cfg);
        for (auto& [name, param] : model.params.items()) param.drop_grad();

        StepMetrics metrics;
        metrics.step = state.step;
        metrics.loss = loss_value;
        metrics.ce = static_cast<double>(ce.item());
        metrics.penalty = static_cast<double>(pen.item());
        metrics.acc = static_cast<double>(correct) / static_cast<double>(labels.size());
        history.push_back(metrics);
    }
    return history;
}

template <typename T>
std::pair<double, double> evaluate(const Model<T>& model, const Dataset& ds, std::int64_t batch,
                                   const AugmentConfig& aug) {
    aug.validate();
    if (batch < 1) throw ConfigError("eval batch size must be at least 1");
    if (ds.records.empty()) throw DataError("evaluation dataset is empty");
    const std::int64_t total = static_cast<std::int64_t>(ds.records.size());
    std::int64_t correct = 0;
    double ce_sum = 0;
    for (std::int64_t lo = 0; lo < total; lo += batch) {
        const std::int64_t hi = std::min(lo + batch, total);
        std::vector<std::int64_t> indices(static_cast<std::size_t>(hi - lo));
        for (std::int64_t i = lo; i < hi; ++i) indices[static_cast<std::size_t>(i - lo)] = i;
        auto [images, labels] = make_batch<T>(ds, indices, aug, /*seed=*/0, /*epoch=*/0, /*train=*/false);
        Tensor<T> logits = model.forward(images, nullptr);
        Tensor<T> ce = cross_entropy(logits, labels);
        ce_sum += static_cast<double>(ce.item()) * static_cast<double>(labels.size());
        const auto preds = argmax_rows(logits);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (preds[i] == labels[i]) ++correct;
        }
    }
    return {static_cast<double>(correct) / static_cast<double>(total),
            ce_sum / static_cast<double>(total)};
}

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write metrics file: " + path);
    out << "step,loss,ce,penalty,acc\n";
    char line[256];
    for (const auto& m : history) {
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(m.step), m.loss, m.ce, m.penalty, m.acc);
        out << line;
    }
    if (!out) throw DataError("error while writing metrics file: " + path);
}

namespace {

// Checkpoint entry dtype codes.
enum : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2, kI32 = 3, kI64 = 4, kU64 = 5 };

template <typename T>
constexpr std::uint8_t dtype_code() {
    if constexpr (std::is_same_v<T, float>) return kF32;
    else return kF64;
}

struct Entry {
    std::string name;
    std::uint8_t dtype = 0;
    std::vector<std::uint64_t> dims;
    std::vector<char> bytes;
};

void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename U>
void put_scalar(std::ofstream& out, U value) {
    put_bytes(out, &value, sizeof(U));
}

void get_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw DataError("truncated checkpoint while reading " + what);
    }
}

template <typename U>
U get_scalar(std::ifstream& in, const std::string& what) {
    U value{};
    get_bytes(in, &value, sizeof(U), what);
    return value;
}

void write_entries(const std::string& path, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.name < b.name; });
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    put_bytes(out, "SSWN", 4);
    put_scalar<std::uint32_t>(out, 1); // version
    put_scalar<std::uint64_t>(out, entries.size());
    for (const auto& e : entries) {
        put_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        put_bytes(out, e.name.data(), e.name.size());
        put_scalar<std::uint8_t>(out, e.dtype);
        put_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
        for (std::uint64_t d : e.dims) put_scalar<std::uint64_t>(out, d);
        put_scalar<std::uint64_t>(out, e.bytes.size());
        put_bytes(out, e.bytes.data(), e.bytes.size());
    }
    if (!out) throw DataError("error while writing checkpoint: " + path);
}

std::map<std::string, Entry> read_entries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    get_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, "SSWN", 4) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const auto version = get_scalar<std::uint32_t>(in, "version");
    if (version != 1) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = get_scalar<std::uint64_t>(in, "entry count");
    std::map<std::string, Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        const auto name_len = get_scalar<std::uint32_t>(in, "name length");
        if (name_len == 0 || name_len > (1u << 20)) {
            throw DataError("corrupt checkpoint entry name length");
        }
        e.name.resize(name_len);
        get_bytes(in, e.name.data(), name_len, "entry name");
        e.dtype = get_scalar<std::uint8_t>(in, e.name + " dtype");
        const auto ndim = get_scalar<std::uint32_t>(in, e.name + " rank");
        if (ndim > 16) throw DataError("corrupt checkpoint entry rank for " + e.name);
        e.dims.resize(ndim);
        for (auto& d : e.dims) d = get_scalar<std::uint64_t>(in, e.name + " dims");
        const auto byte_len = get_scalar<std::uint64_t>(in, e.name + " byte length");
        e.bytes.resize(byte_len);
        get_bytes(in, e.bytes.data(), byte_len, e.name + " data");
        if (!entries.emplace(e.name, std::move(e)).second) {
            throw DataError("duplicate checkpoint entry: " + e.name);
        }
    }
    return entries;
}

std::vector<std::uint64_t> dims_of(const Shape& shape) {
    std::vector<std::uint64_t> dims;
    dims.reserve(shape.size());
    for (auto d : shape) dims.push_back(static_cast<std::uint64_t>(d));
    return dims;
}

template <typename T>
Entry tensor_entry(const std::string& name, const Shape& shape, const T* data, std::int64_t n) {
    Entry e;
    e.name = name;
    e.dtype = dtype_code<T>();
    e.dims = dims_of(shape);
    e.bytes.resize(static_cast<std::size_t>(n) * sizeof(T));
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    return e;
}

template <typename T>
void check_tensor_entry(const Entry& e, const Shape& shape, std::int64_t n) {
    if (e.dtype != dtype_code<T>()) {
        throw DataError("checkpoint dtype mismatch for " + e.name);
    }
    if (e.dims != dims_of(shape)) {
        throw DataError("checkpoint shape mismatch for " + e.name + ": file has " +
                        std::to_string(e.dims.size()) + " dims");
    }
    if (e.bytes.size() != static_cast<std::size_t>(n) * sizeof(T)) {
        throw DataError("checkpoint size mismatch for " + e.name);
    }
}

} // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const OptimState<T>& state,
                     std::uint64_t seed, const std::string& config_json) {
    std::vector<Entry> entries;
    for (const auto& [name, param] : model.params.items()) {
        entries.push_back(tensor_entry("param." + name, param.shape(), param.data().data(),
                                       param.numel()));
    }
    for (const char* which : {"m", "v"}) {
        const auto& moments = std::string(which) == "m" ? state.m : state.v;
        for (const auto& [name, values] : moments) {
            const Tensor<T>* param = model.params.find(name);
            if (!param) throw DataError("optimizer state for unknown parameter: " + name);
            entries.push_back(tensor_entry("optim." + std::string(which) + "." + name,
                                           param->shape(), values.data(),
                                           static_cast<std::int64_t>(values.size())));
        }
    }
    {
        Entry e;
        e.name = "meta.step";
        e.dtype = kI64;
        e.bytes.resize(sizeof(std::int64_t));
        std::memcpy(e.bytes.data(), &state.step, sizeof(std::int64_t));
        entries.push_back(std::move(e));
    }
    {
        Entry e;
        e.name = "meta.seed";
        e.dtype = kU64;
        e.bytes.resize(sizeof(std::uint64_t));
        std::memcpy(e.bytes.data(), &seed, sizeof(std::uint64_t));
        entries.push_back(std::move(e));
    }
    {
        Entry e;
        e.name = "meta.config";
        e.dtype = kU8;
        e.dims = {static_cast<std::uint64_t>(config_json.size())};
        e.bytes.assign(config_json.begin(), config_json.end());
        entries.push_back(std::move(e));
    }
    write_entries(path, std::move(entries));
}

template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, Model<T>& model, OptimState<T>& state) {
    auto entries = read_entries(path);
    state.m.clear();
    state.v.clear();

    for (auto& [name, param] : model.params.items()) {
        auto it = entries.find("param." + name);
        if (it == entries.end()) throw DataError("checkpoint missing parameter: " + name);
        check_tensor_entry<T>(it->second, param.shape(), param.numel());
        std::memcpy(param.mutable_data().data(), it->second.bytes.data(), it->second.bytes.size());
        entries.erase(it);
    }

    CheckpointMeta meta;
    {
        auto it = entries.find("meta.step");
        if (it == entries.end()) throw DataError("checkpoint missing meta.step");
        if (it->second.dtype != kI64 || it->second.bytes.size() != sizeof(std::int64_t)) {
            throw DataError("corrupt meta.step entry");
        }
        std::memcpy(&meta.step, it->second.bytes.data(), sizeof(std::int64_t));
        entries.erase(it);
    }
    {
        auto it = entries.find("meta.seed");
        if (it == entries.end()) throw DataError("checkpoint missing meta.seed");
        if (it->second.dtype != kU64 || it->second.bytes.size() != sizeof(std::uint64_t)) {
            throw DataError("corrupt meta.seed entry");
        }
        std::memcpy(&meta.seed, it->second.bytes.data(), sizeof(std::uint64_t));
        entries.erase(it);
    }
    {
        auto it = entries.find("meta.config");
        if (it == entries.end()) throw DataError("checkpoint missing meta.config");
        if (it->second.dtype != kU8) throw DataError("corrupt meta.config entry");
        meta.config_json.assign(it->second.bytes.begin(), it->second.bytes.end());
        entries.erase(it);
    }

    for (auto& [name, e] : entries) {
        std::string param_name;
        std::map<std::string, std::vector<T>>* target = nullptr;
        if (name.starts_with("optim.m.")) {
            param_name = name.substr(8);
            target = &state.m;
        } else if (name.starts_with("optim.v.")) {
            param_name = name.substr(8);
            target = &state.v;
        } else {
            throw DataError("unexpected checkpoint entry: " + name);
        }
        const Tensor<T>* param = model.params.find(param_name);
        if (!param) throw DataError("checkpoint optimizer state for unknown parameter: " + param_name);
        check_tensor_entry<T>(e, param->shape(), param->numel());
        std::vector<T> values(static_cast<std::size_t>(param->numel()));
        std::memcpy(values.data(), e.bytes.data(), e.bytes.size());
        (*target)[param_name] = std::move(values);
    }

    state.step = meta.step;
    return meta;
}

#define SPARSESWIN_INSTANTIATE_TRAIN(T)                                                            \
    template void optimizer_step<T>(ParamRegistry<T>&, OptimState<T>&, const TrainConfig&);        \
    template std::vector<StepMetrics> train_steps<T>(Model<T>&, const Dataset&, const TrainConfig&,\
                                                     const AugmentConfig&, OptimState<T>&,         \
                                                     std::int64_t);                                \
    template std::pair<double, double> evaluate<T>(const Model<T>&, const Dataset&, std::int64_t,  \
                                                   const AugmentConfig&);                          \
    template void save_checkpoint<T>(const std::string&, const Model<T>&, const OptimState<T>&,    \
                                     std::uint64_t, const std::string&);                           \
    template CheckpointMeta load_checkpoint<T>(const std::string&, Model<T>&, OptimState<T>&);

SPARSESWIN_INSTANTIATE_TRAIN(float)
SPARSESWIN_INSTANTIATE_TRAIN(double)

#undef SPARSESWIN_INSTANTIATE_TRAIN

} // namespace sparseswin
