#include "sparseswin/model.hpp"

#include <json.hpp>

namespace sparseswin {

void SparseSwinConfig::validate() const {
    if (patch < 1) {
        throw ConfigError("model.patch must be >= 1, got " + std::to_string(patch));
    }
    const std::int64_t div = patch * 8;
    if (input_size < div || input_size % div != 0) {
        throw ConfigError("model.input_size " + std::to_string(input_size) +
                          " must be a positive multiple of " + std::to_string(div) +
                          " (patch embedding plus three 2x downsamples)");
    }
    for (int i = 0; i < 3; ++i) {
        StageConfig sc{stage_depths[static_cast<std::size_t>(i)], stage_dims[static_cast<std::size_t>(i)],
                       stage_heads[static_cast<std::size_t>(i)], window, shift};
        try {
            sc.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("model.stage" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    for (int i = 0; i < 2; ++i) {
        if (stage_dims[static_cast<std::size_t>(i + 1)] != 2 * stage_dims[static_cast<std::size_t>(i)]) {
            throw ConfigError("model.stage_dims must double between stages (patch merging maps 4C -> 2C); "
                              "got " +
                              std::to_string(stage_dims[static_cast<std::size_t>(i)]) + " -> " +
                              std::to_string(stage_dims[static_cast<std::size_t>(i + 1)]));
        }
    }
    std::int64_t grid = input_size / patch;
    for (int i = 0; i < 3; ++i) {
        if (grid % window != 0) {
            throw ConfigError("model: stage " + std::to_string(i + 1) + " grid " + std::to_string(grid) +
                              " not divisible by window " + std::to_string(window));
        }
        if (grid % 2 != 0) {
            throw ConfigError("model: stage " + std::to_string(i + 1) + " grid " + std::to_string(grid) +
                              " must be even for patch merging");
        }
        grid /= 2;
    }
    if (sparta_in_dim < 0) {
        throw ConfigError("model.sparta_in_dim must be >= 0 (0 derives 2 * stage_dims[2])");
    }
    sparta.validate();
    const std::int64_t fg = final_grid(input_size);
    if (sparta.in_features != fg * fg) {
        throw ConfigError("model.sparta.in_features " + std::to_string(sparta.in_features) +
                          " does not match the feature grid entering the SparTa block: (" +
                          std::to_string(input_size) + "/" + std::to_string(patch * 8) + ")^2 = " +
                          std::to_string(fg * fg));
    }
    if (num_classes < 2) {
        throw ConfigError("model.num_classes must be >= 2, got " + std::to_string(num_classes));
    }
    if (head_pool != "mean_token") {
        throw ConfigError("model.head_pool must be \"mean_token\", got \"" + head_pool + "\"");
    }
}

template <typename T>
Tensor<T> Model<T>::backbone_forward(const Tensor<T>& images) const {
    if (images.rank() != 4 || images.dim(1) != 3) {
        throw ShapeError("forward expects [B, 3, S, S] images, got " + shape_str(images.shape()));
    }
    if (images.dim(2) != cfg.input_size || images.dim(3) != cfg.input_size) {
        throw ShapeError("forward: image size " + std::to_string(images.dim(2)) + "x" +
                         std::to_string(images.dim(3)) + " does not match configured input_size " +
                         std::to_string(cfg.input_size));
    }
    auto x = embed.forward(images);
    for (int i = 0; i < 3; ++i) {
        x = stages[static_cast<std::size_t>(i)].forward(x);
        x = merges[static_cast<std::size_t>(i)].forward(x);
    }
    return x;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, SparTaState<T>* state) const {
    auto features = backbone_forward(images);
    auto st = sparta.forward(features);
    auto h = head_norm.forward(st.tokens);
    h = mean_axis(h, 1);
    auto logits = head_fc.forward(h);
    if (state != nullptr) {
        *state = std::move(st);
    }
    return logits;
}

template <typename T>
Model<T> build(const SparseSwinConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;
    Rng rng(seed);
    m.embed = make_patch_embed(m.params, "stage1.embed", 3, cfg.stage_dims[0], cfg.patch, rng);
    for (int i = 0; i < 3; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::string prefix = "stage" + std::to_string(i + 1);
        StageConfig sc{cfg.stage_depths[idx], cfg.stage_dims[idx], cfg.stage_heads[idx], cfg.window,
                       cfg.shift};
        m.stages[idx] = make_swin_stage(m.params, prefix, sc, rng);
        const std::int64_t out_dim = i < 2 ? cfg.stage_dims[idx + 1] : cfg.sparta_channels();
        m.merges[idx] = make_patch_merging(m.params, prefix + ".downsample", cfg.stage_dims[idx], out_dim,
                                           rng);
    }
    m.sparta = make_sparta(m.params, "sparta", cfg.sparta_channels(), cfg.sparta, rng);
    m.head_norm = make_layer_norm(m.params, "head.norm", cfg.sparta.e);
    m.head_fc = make_linear(m.params, "head.fc", cfg.sparta.e, cfg.num_classes, /*bias=*/true, rng);
    return m;
}

template <typename T>
ParamReport count_params(const Model<T>& model) {
    ParamReport report;
    for (const auto& [name, tensor] : model.params.items()) {
        const std::int64_t n = tensor.numel();
        report.params.emplace_back(name, n);
        report.subtotals[name.substr(0, name.find('.'))] += n;
        report.total += n;
    }
    return report;
}

std::string ParamReport::to_json() const {
    nlohmann::json j;
    for (const auto& [name, n] : params) {
        j["param." + name] = n;
    }
    for (const auto& [group, n] : subtotals) {
        j["subtotal." + group] = n;
    }
    j["total"] = total;
    j["published_total"] = kPublishedParamTotal;
    j["published_delta"] = total - kPublishedParamTotal;
    return j.dump(2);
}

std::string FlopReport::to_json() const {
    nlohmann::json j;
    j["backbone"] = backbone;
    j["head"] = head;
    j["sparta_converter"] = sparta_converter;
    j["sparta_mlp"] = sparta_mlp;
    j["sparta_msa"] = sparta_msa;
    j["total"] = total();
    return j.dump(2);
}

FlopReport count_flops(const SparseSwinConfig& cfg, std::int64_t input_size) {
    const std::int64_t div = cfg.patch * 8;
    if (input_size < div || input_size % div != 0) {
        throw ConfigError("flops input_size " + std::to_string(input_size) +
                          " must be a positive multiple of " + std::to_string(div));
    }
    FlopReport r;
    std::int64_t grid = input_size / cfg.patch;
    // Patch embedding: one MAC per kernel tap per output element.
    r.backbone += grid * grid * cfg.stage_dims[0] * (3 * cfg.patch * cfg.patch);
    const std::int64_t win_tokens = cfg.window * cfg.window;
    for (int i = 0; i < 3; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (grid % cfg.window != 0) {
            throw ConfigError("flops: stage " + std::to_string(i + 1) + " grid " + std::to_string(grid) +
                              " not divisible by window " + std::to_string(cfg.window));
        }
        const std::int64_t n = grid * grid;
        const std::int64_t c = cfg.stage_dims[idx];
        const std::int64_t msa = 4 * n * c * c + 2 * win_tokens * n * c;
        const std::int64_t mlp = 2 * n * c * (4 * c);
        r.backbone += cfg.stage_depths[idx] * (msa + mlp);
        const std::int64_t out_dim = i < 2 ? cfg.stage_dims[idx + 1] : cfg.sparta_channels();
        r.backbone += (n / 4) * (4 * c) * out_dim;
        grid /= 2;
    }
    // grid is now the SparTa input extent.
    const std::int64_t k = cfg.sparta.conv_kernel;
    const std::int64_t conv_out = (grid + 2 * (k / 2) - k) / cfg.sparta.conv_stride + 1;
    const std::int64_t hw = conv_out * conv_out;
    r.sparta_converter = hw * cfg.sparta.e * (cfg.sparta_channels() * k * k) + cfg.sparta.e * hw * cfg.sparta.t;
    const std::int64_t t = cfg.sparta.t;
    const std::int64_t e = cfg.sparta.e;
    r.sparta_msa = cfg.sparta.loops * (4 * t * e * e + 2 * t * t * e);
    r.sparta_mlp = cfg.sparta.loops * (2 * t * e * (cfg.sparta.mlp_ratio * e));
    r.head = e * cfg.num_classes;
    return r;
}

template <typename T>
FreezeMask freeze(Model<T>& model, const std::set<std::string>& groups) {
    static const std::set<std::string> kValid{"stage1", "stage2", "stage3", "sparta", "head"};
    for (const auto& g : groups) {
        if (kValid.count(g) == 0) {
            throw ConfigError("freeze: unknown stage name \"" + g + "\"");
        }
    }
    FreezeMask mask;
    for (auto& [name, tensor] : model.params.items()) {
        const std::string group = name.substr(0, name.find('.'));
        const bool trainable = groups.count(group) == 0;
        tensor.set_requires_grad(trainable);
        mask[name] = trainable;
    }
    return mask;
}

std::vector<std::pair<std::string, std::string>> describe(const SparseSwinConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::string>> chain;
    const auto spatial = [](std::int64_t c, std::int64_t g) {
        return std::to_string(c) + "x" + std::to_string(g) + "x" + std::to_string(g);
    };
    chain.emplace_back("input", spatial(3, cfg.input_size));
    std::int64_t grid = cfg.input_size / cfg.patch;
    chain.emplace_back("stage1.embed", spatial(cfg.stage_dims[0], grid));
    for (int i = 0; i < 3; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::string prefix = "stage" + std::to_string(i + 1);
        chain.emplace_back(prefix, spatial(cfg.stage_dims[idx], grid));
        grid /= 2;
        const std::int64_t out_dim = i < 2 ? cfg.stage_dims[idx + 1] : cfg.sparta_channels();
        chain.emplace_back(prefix + ".downsample", spatial(out_dim, grid));
    }
    chain.emplace_back("sparta", "(" + std::to_string(cfg.sparta.t) + ", " + std::to_string(cfg.sparta.e) +
                                     ")");
    chain.emplace_back("head", "logits[" + std::to_string(cfg.num_classes) + "]");
    return chain;
}

#define SPARSESWIN_INSTANTIATE_MODEL(T)                                                                      \
    template struct Model<T>;                                                                                \
    template Model<T> build(const SparseSwinConfig&, std::uint64_t);                                         \
    template ParamReport count_params(const Model<T>&);                                                      \
    template FreezeMask freeze(Model<T>&, const std::set<std::string>&);

SPARSESWIN_INSTANTIATE_MODEL(float)
SPARSESWIN_INSTANTIATE_MODEL(double)

#undef SPARSESWIN_INSTANTIATE_MODEL

} // namespace sparseswin
