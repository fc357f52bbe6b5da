#include "sparseswin/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "sparseswin/ops.hpp"
#include "sparseswin/regularizer.hpp"
#include "sparseswin/sparta.hpp"
#include "sparseswin/swin.hpp"

namespace sparseswin {

double grad_rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1e-6, std::abs(analytic), std::abs(numeric)});
}

template <typename T>
Tensor<T> finite_diff_grad(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                           double h) {
    Tensor<T> probe = x.clone();
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    auto data = probe.mutable_data();
    auto g = out.mutable_data();
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T saved = data[i];
        data[i] = saved + static_cast<T>(h);
        const double fp = static_cast<double>(f(probe).item());
        data[i] = saved - static_cast<T>(h);
        const double fm = static_cast<double>(f(probe).item());
        data[i] = saved;
        g[i] = static_cast<T>((fp - fm) / (2.0 * h));
    }
    return out;
}

template <typename T>
double check_gradients(std::vector<Tensor<T>> inputs, const std::function<Tensor<T>()>& forward,
                       double h, double perturb_first, int* worst_input) {
    if (inputs.empty()) throw ShapeError("check_gradients requires at least one input");
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.drop_grad();
    }
    {
        Graph<T> graph;
        typename Graph<T>::Scope scope(graph);
        Tensor<T> loss = forward();
        graph.backward(loss);
    }
    std::vector<std::vector<T>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) {
        if (t.has_grad()) {
            auto g = t.grad();
            analytic.emplace_back(g.begin(), g.end());
        } else {
            analytic.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
        }
        t.drop_grad();
        t.set_requires_grad(false);
    }
    if (perturb_first != 0.0 && !analytic[0].empty()) {
        analytic[0][0] += static_cast<T>(perturb_first);
    }
    double worst = 0;
    if (worst_input) *worst_input = 0;
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
        auto data = inputs[idx].mutable_data();
        for (std::int64_t i = 0; i < inputs[idx].numel(); ++i) {
            const T saved = data[i];
            data[i] = saved + static_cast<T>(h);
            const double fp = static_cast<double>(forward().item());
            data[i] = saved - static_cast<T>(h);
            const double fm = static_cast<double>(forward().item());
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = grad_rel_err(static_cast<double>(analytic[idx][i]), numeric);
            if (err > worst) {
                worst = err;
                if (worst_input) *worst_input = static_cast<int>(idx);
            }
        }
    }
    return worst;
}

template Tensor<float> finite_diff_grad<float>(const std::function<Tensor<float>(const Tensor<float>&)>&,
                                               const Tensor<float>&, double);
template Tensor<double> finite_diff_grad<double>(
    const std::function<Tensor<double>(const Tensor<double>&)>&, const Tensor<double>&, double);
template double check_gradients<float>(std::vector<Tensor<float>>,
                                       const std::function<Tensor<float>()>&, double, double, int*);
template double check_gradients<double>(std::vector<Tensor<double>>,
                                        const std::function<Tensor<double>()>&, double, double, int*);

namespace {

using D = Tensor<double>;

struct CheckCase {
    std::vector<D> inputs;
    std::function<D()> forward;
};

// Bounded losses keep central-difference cancellation noise far below the
// pass tolerance: project onto a fixed random direction and take the mean.
D proj_loss(const D& y, const D& p) {
    return scale(sum_all(mul(y, p)), 1.0 / static_cast<double>(y.numel()));
}

// |x| >= 0.2 keeps every +-h probe on one side of the absval kink.
D away_from_zero(const Shape& shape, Rng& rng) {
    D t = D::zeros(shape);
    for (auto& v : t.mutable_data()) {
        const double mag = 0.2 + rng.uniform();
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

CheckCase make_add(Rng& rng) {
    D x = D::randn({3, 5}, rng), y = D::randn({3, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x, y}, [=] { return proj_loss(add(x, y), p); }};
}

CheckCase make_sub(Rng& rng) {
    D x = D::randn({3, 5}, rng), y = D::randn({3, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x, y}, [=] { return proj_loss(sub(x, y), p); }};
}

CheckCase make_mul(Rng& rng) {
    D x = D::randn({3, 5}, rng), y = D::randn({3, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x, y}, [=] { return proj_loss(mul(x, y), p); }};
}

CheckCase make_scale_shift(Rng& rng) {
    D x = D::randn({3, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x}, [=] { return proj_loss(add_scalar(scale(x, 1.7), 0.3), p); }};
}

CheckCase make_absval(Rng& rng) {
    D x = away_from_zero({3, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x}, [=] { return proj_loss(absval(x), p); }};
}

CheckCase make_sum_all(Rng& rng) {
    D x = D::randn({2, 6}, rng);
    return {{x}, [=] { return scale(sum_all(x), 0.25); }};
}

CheckCase make_mean_axis(Rng& rng) {
    D x = D::randn({3, 4, 5}, rng), p = D::randn({3, 5}, rng);
    return {{x}, [=] { return proj_loss(mean_axis(x, 1), p); }};
}

CheckCase make_reshape_permute(Rng& rng) {
    D x = D::randn({2, 3, 4}, rng), p = D::randn({4, 6}, rng);
    return {{x}, [=] { return proj_loss(reshape(permute(x, {2, 0, 1}), {4, 6}), p); }};
}

CheckCase make_roll2d(Rng& rng) {
    D x = D::randn({2, 4, 4, 3}, rng), p = D::randn({2, 4, 4, 3}, rng);
    return {{x}, [=] { return proj_loss(roll2d(x, 1, -2), p); }};
}

CheckCase make_slice_last(Rng& rng) {
    D x = D::randn({2, 3, 6}, rng), p = D::randn({2, 3, 3}, rng);
    return {{x}, [=] { return proj_loss(slice_last(x, 2, 3), p); }};
}

CheckCase make_add_bias(Rng& rng) {
    D x = D::randn({2, 3, 4}, rng), b = D::randn({4}, rng), p = D::randn({2, 3, 4}, rng);
    return {{x, b}, [=] { return proj_loss(add_bias(x, b), p); }};
}

CheckCase make_matmul(Rng& rng) {
    D a = D::randn({3, 4}, rng), b = D::randn({4, 5}, rng), p = D::randn({3, 5}, rng);
    return {{a, b}, [=] { return proj_loss(matmul(a, b), p); }};
}

CheckCase make_matmul_transposed(Rng& rng) {
    D a = D::randn({3, 4}, rng), b = D::randn({5, 4}, rng), p = D::randn({3, 5}, rng);
    return {{a, b}, [=] { return proj_loss(matmul(a, b, /*transpose_b=*/true), p); }};
}

CheckCase make_matmul_batched(Rng& rng) {
    D a = D::randn({2, 3, 4}, rng), b = D::randn({2, 4, 5}, rng), p = D::randn({2, 3, 5}, rng);
    return {{a, b}, [=] { return proj_loss(matmul(a, b), p); }};
}

CheckCase make_matmul_shared(Rng& rng) {
    D a = D::randn({2, 3, 4}, rng), b = D::randn({4, 5}, rng), p = D::randn({2, 3, 5}, rng);
    return {{a, b}, [=] { return proj_loss(matmul(a, b), p); }};
}

CheckCase make_conv2d(Rng& rng) {
    D x = D::randn({1, 2, 5, 5}, rng), w = D::randn({3, 2, 3, 3}, rng), b = D::randn({3}, rng);
    D p = D::randn({1, 3, 3, 3}, rng);
    return {{x, w, b}, [=] { return proj_loss(conv2d(x, w, b, 2, 1), p); }};
}

CheckCase make_layer_norm(Rng& rng) {
    D x = D::randn({2, 3, 8}, rng);
    D gain = D::zeros({8});
    for (auto& v : gain.mutable_data()) v = 1.0 + 0.2 * rng.normal();
    D bias = D::randn({8}, rng), p = D::randn({2, 3, 8}, rng);
    return {{x, gain, bias}, [=] { return proj_loss(layer_norm(x, gain, bias, 1e-5), p); }};
}

CheckCase make_softmax(Rng& rng) {
    D x = D::randn({2, 4, 5}, rng), p = D::randn({2, 4, 5}, rng);
    return {{x}, [=] { return proj_loss(softmax(x, -1), p); }};
}

CheckCase make_gelu(Rng& rng) {
    D x = D::randn({3, 4}, rng), p = D::randn({3, 4}, rng);
    return {{x}, [=] { return proj_loss(gelu(x), p); }};
}

CheckCase make_cross_entropy(Rng& rng) {
    D logits = D::randn({4, 7}, rng);
    const std::vector<std::int32_t> labels = {0, 3, 6, 2};
    return {{logits}, [=] { return cross_entropy(logits, labels); }};
}

CheckCase make_merge2x2(Rng& rng) {
    D x = D::randn({1, 4, 4, 3}, rng), p = D::randn({1, 2, 2, 12}, rng);
    return {{x}, [=] { return proj_loss(merge2x2(x), p); }};
}

CheckCase make_rel_pos(Rng& rng) {
    D logits = D::randn({2, 2, 4, 4}, rng), table = D::randn({9, 2}, rng);
    D p = D::randn({2, 2, 4, 4}, rng);
    const std::vector<std::int32_t> index = rel_pos_index(2);
    return {{logits, table}, [=] { return proj_loss(add_rel_pos_bias(logits, table, index), p); }};
}

CheckCase make_window_mask(Rng& rng) {
    D logits = D::randn({8, 2, 4, 4}, rng), p = D::randn({8, 2, 4, 4}, rng);
    D mask = shift_mask<double>(4, 4, 2, 1);
    return {{logits}, [=] { return proj_loss(softmax(add_window_mask(logits, mask), -1), p); }};
}

CheckCase make_conv_ln_matmul(Rng& rng) {
    D x = D::randn({1, 2, 6, 6}, rng), w = D::randn({4, 2, 3, 3}, rng), b = D::randn({4}, rng);
    D gain = D::zeros({4});
    for (auto& v : gain.mutable_data()) v = 1.0 + 0.2 * rng.normal();
    D bias = D::randn({4}, rng), w2 = D::randn({4, 3}, rng), p = D::randn({36, 3}, rng);
    return {{x, w, b, gain, bias, w2}, [=] {
                auto y = conv2d(x, w, b, 1, 1);                         // [1, 4, 6, 6]
                auto tokens = reshape(permute(y, {0, 2, 3, 1}), {36, 4});
                return proj_loss(matmul(layer_norm(tokens, gain, bias, 1e-5), w2), p);
            }};
}

std::vector<D> with_params(const D& x, ParamRegistry<double>& reg) {
    std::vector<D> inputs = {x};
    for (auto& [name, t] : reg.items()) inputs.push_back(t);
    return inputs;
}

CheckCase make_patch_embed(Rng& rng) {
    ParamRegistry<double> reg;
    auto embed = make_patch_embed(reg, "embed", 3, 6, 2, rng);
    D x = D::randn({1, 3, 4, 4}, rng), p = D::randn({1, 6, 2, 2}, rng);
    return {with_params(x, reg), [=] { return proj_loss(embed.forward(x), p); }};
}

CheckCase make_window_partition(Rng& rng) {
    D x = D::randn({1, 4, 4, 2}, rng), p = D::randn({4, 4, 2}, rng);
    return {{x}, [=] { return proj_loss(window_partition(x, 2), p); }};
}

CheckCase make_window_attention(Rng& rng) {
    ParamRegistry<double> reg;
    auto attn = make_attention(reg, "attn", 8, 2, /*qkv_bias=*/true, rng);
    auto rel = make_rel_pos_bias(reg, "rel", 2, 2, rng);
    D x = D::randn({2, 4, 8}, rng), p = D::randn({2, 4, 8}, rng);
    return {with_params(x, reg), [=] { return proj_loss(window_msa(x, attn, rel).out, p); }};
}

CheckCase make_shifted_window_attention(Rng& rng) {
    ParamRegistry<double> reg;
    auto attn = make_attention(reg, "attn", 8, 2, /*qkv_bias=*/true, rng);
    auto rel = make_rel_pos_bias(reg, "rel", 2, 2, rng);
    D mask = shift_mask<double>(4, 4, 2, 1);
    D x = D::randn({4, 4, 8}, rng), p = D::randn({4, 4, 8}, rng);
    return {with_params(x, reg), [=] { return proj_loss(window_msa(x, attn, rel, &mask).out, p); }};
}

CheckCase make_swin_block(Rng& rng) {
    ParamRegistry<double> reg;
    auto block = make_swin_block(reg, "block", 8, 2, 2, 1, rng);
    D mask = shift_mask<double>(4, 4, 2, 1);
    D x = D::randn({1, 4, 4, 8}, rng), p = D::randn({1, 4, 4, 8}, rng);
    return {with_params(x, reg), [=] { return proj_loss(block.forward(x, &mask), p); }};
}

CheckCase make_patch_merging(Rng& rng) {
    ParamRegistry<double> reg;
    auto merging = make_patch_merging(reg, "merge", 4, 8, rng);
    D x = D::randn({1, 4, 4, 4}, rng), p = D::randn({1, 8, 2, 2}, rng);
    return {with_params(x, reg), [=] { return proj_loss(merging.forward(x), p); }};
}

CheckCase make_swin_stage(Rng& rng) {
    ParamRegistry<double> reg;
    StageConfig cfg;
    cfg.depth = 2;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.window = 2;
    cfg.shift = 1;
    auto stage = make_swin_stage(reg, "stage", cfg, rng);
    D x = D::randn({1, 8, 4, 4}, rng), p = D::randn({1, 8, 4, 4}, rng);
    return {with_params(x, reg), [=] { return proj_loss(stage.forward(x), p); }};
}

SparTaConfig tiny_sparta_config() {
    SparTaConfig cfg;
    cfg.t = 4;
    cfg.e = 8;
    cfg.heads = 2;
    cfg.mlp_ratio = 4;
    cfg.loops = 2;
    cfg.qkv_bias = true;
    cfg.conv_kernel = 3;
    cfg.conv_stride = 1;
    cfg.in_features = 9;
    return cfg;
}

CheckCase make_token_converter(Rng& rng) {
    ParamRegistry<double> reg;
    SparTaConfig cfg = tiny_sparta_config();
    cfg.t = 2;
    cfg.e = 6;
    auto converter = make_sparse_token_converter(reg, "converter", 4, cfg, rng);
    D x = D::randn({1, 4, 3, 3}, rng), p = D::randn({1, 2, 6}, rng);
    return {with_params(x, reg), [=] { return proj_loss(converter.forward(x), p); }};
}

CheckCase make_transformer_block(Rng& rng) {
    ParamRegistry<double> reg;
    auto block = make_transformer_block(reg, "block", tiny_sparta_config(), rng);
    D s = D::randn({1, 4, 8}, rng), p = D::randn({1, 4, 8}, rng);
    return {with_params(s, reg), [=] { return proj_loss(block.forward(s).out, p); }};
}

CheckCase make_sparta_forward(Rng& rng) {
    ParamRegistry<double> reg;
    auto sparta = make_sparta(reg, "sparta", 4, tiny_sparta_config(), rng);
    D x = D::randn({1, 4, 3, 3}, rng), p = D::randn({1, 4, 8}, rng);
    return {with_params(x, reg), [=] { return proj_loss(sparta.forward(x).tokens, p); }};
}

CheckCase make_penalty(Rng& rng, const char* kind) {
    ParamRegistry<double> reg;
    auto sparta = make_sparta(reg, "sparta", 4, tiny_sparta_config(), rng);
    D x = D::randn({1, 4, 3, 3}, rng);
    RegConfig reg_cfg;
    reg_cfg.kind = kind;
    reg_cfg.lambda = 0.5;
    // Mean reduction keeps |loss| small: the raw L1 penalty is constant
    // (row-stochastic attention), so its gradient check is purely a noise
    // measurement against the 1e-6 denominator floor.
    reg_cfg.average = true;
    return {with_params(x, reg), [=] { return penalty(sparta.forward(x).attn, reg_cfg); }};
}

CheckCase make_penalty_l1(Rng& rng) { return make_penalty(rng, "l1"); }
CheckCase make_penalty_l2(Rng& rng) { return make_penalty(rng, "l2"); }

CheckCase make_token_head_ce(Rng& rng) {
    ParamRegistry<double> reg;
    auto sparta = make_sparta(reg, "sparta", 4, tiny_sparta_config(), rng);
    auto head = make_linear(reg, "head", 8, 5, /*bias=*/true, rng);
    D x = D::randn({2, 4, 3, 3}, rng);
    const std::vector<std::int32_t> labels = {1, 3};
    return {with_params(x, reg), [=] {
                auto tokens = sparta.forward(x).tokens;
                return cross_entropy(head.forward(mean_axis(tokens, 1)), labels);
            }};
}

struct Check {
    const char* name;
    const char* module;
    CheckCase (*make)(Rng&);
};

constexpr Check kChecks[] = {
    {"add", "tensor", make_add},
    {"sub", "tensor", make_sub},
    {"mul", "tensor", make_mul},
    {"scale_shift", "tensor", make_scale_shift},
    {"absval", "tensor", make_absval},
    {"sum_all", "tensor", make_sum_all},
    {"mean_axis", "tensor", make_mean_axis},
    {"reshape_permute", "tensor", make_reshape_permute},
    {"roll2d", "tensor", make_roll2d},
    {"slice_last", "tensor", make_slice_last},
    {"add_bias", "tensor", make_add_bias},
    {"matmul", "tensor", make_matmul},
    {"matmul_transposed", "tensor", make_matmul_transposed},
    {"matmul_batched", "tensor", make_matmul_batched},
    {"matmul_shared", "tensor", make_matmul_shared},
    {"conv2d", "tensor", make_conv2d},
    {"layer_norm", "tensor", make_layer_norm},
    {"softmax", "tensor", make_softmax},
    {"gelu", "tensor", make_gelu},
    {"cross_entropy", "tensor", make_cross_entropy},
    {"merge2x2", "tensor", make_merge2x2},
    {"rel_pos_bias", "tensor", make_rel_pos},
    {"window_mask", "tensor", make_window_mask},
    {"conv_ln_matmul", "tensor", make_conv_ln_matmul},
    {"patch_embed", "backbone", make_patch_embed},
    {"window_partition", "backbone", make_window_partition},
    {"window_attention", "backbone", make_window_attention},
    {"shifted_window_attention", "backbone", make_shifted_window_attention},
    {"swin_block", "backbone", make_swin_block},
    {"patch_merging", "backbone", make_patch_merging},
    {"swin_stage", "backbone", make_swin_stage},
    {"token_converter", "sparta", make_token_converter},
    {"transformer_block", "sparta", make_transformer_block},
    {"sparta_forward", "sparta", make_sparta_forward},
    {"penalty_l1", "sparta", make_penalty_l1},
    {"penalty_l2", "sparta", make_penalty_l2},
    {"token_head_ce", "sparta", make_token_head_ce},
};

} // namespace

std::vector<GradCheckResult> run_gradchecks(const std::string& module, int seeds, double tol) {
    if (module != "all" && module != "tensor" && module != "backbone" && module != "sparta") {
        throw ConfigError("unknown gradcheck module \"" + module +
                          "\" (expected all, tensor, backbone, or sparta)");
    }
    if (seeds < 1) throw ConfigError("gradcheck seed count must be at least 1");
    if (!(tol > 0)) throw ConfigError("gradcheck tolerance must be positive");
    const char* perturb_env = std::getenv("SPARSESWIN_GRADCHECK_PERTURB");
    const std::string perturb_name = perturb_env ? perturb_env : "";

    std::vector<GradCheckResult> results;
    std::uint64_t index = 0;
    for (const auto& check : kChecks) {
        ++index;
        if (module != "all" && module != check.module) continue;
        const double perturb = perturb_name == check.name ? 1e-2 : 0.0;
        double worst = 0;
        int worst_input = 0;
        for (int s = 0; s < seeds; ++s) {
            Rng rng(Rng::mix(Rng::mix(0x6772616463686bULL, index), static_cast<std::uint64_t>(s)));
            CheckCase cc = check.make(rng);
            int input_idx = 0;
            const double err = check_gradients<double>(cc.inputs, cc.forward, 1e-5, perturb, &input_idx);
            if (err > worst) {
                worst = err;
                worst_input = input_idx;
            }
        }
        results.push_back({check.name, check.module, worst, worst_input, worst <= tol});
    }
    return results;
}

} // namespace sparseswin
