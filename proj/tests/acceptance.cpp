// Release acceptance harness. Each criterion below is verified end to end
// against an independent oracle (closed forms, brute-force references, byte
// inspection, or exact replay) and reported as a single PASS/FAIL line.
// The process exits 0 only when every criterion holds.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sparseswin/gradcheck.hpp"
#include "sparseswin/train.hpp"

namespace {

using namespace sparseswin;
using D = Tensor<double>;
using F = Tensor<float>;

struct Outcome {
    bool pass = false;
    std::string detail;
};

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
    return a.numel() == b.numel() &&
           std::memcmp(a.data().data(), b.data().data(),
                       sizeof(T) * static_cast<std::size_t>(a.numel())) == 0;
}

template <typename T>
void zero_matching(ParamRegistry<T>& reg, const std::vector<std::string>& needles) {
    for (auto& [name, tensor] : reg.items()) {
        for (const auto& needle : needles) {
            if (name.find(needle) != std::string::npos) {
                for (auto& v : tensor.mutable_data()) v = T(0);
            }
        }
    }
}

std::vector<std::uint8_t> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 64px three-stage model compressing into 16 latent tokens; small enough to
// train on a desk CPU in seconds.
SparseSwinConfig tiny_cfg() {
    SparseSwinConfig cfg;
    cfg.input_size = 64;
    cfg.patch = 4;
    cfg.stage_dims = {8, 16, 32};
    cfg.stage_depths = {2, 2, 2};
    cfg.stage_heads = {2, 4, 8};
    cfg.window = 4;
    cfg.shift = 2;
    cfg.sparta.t = 16;
    cfg.sparta.e = 32;
    cfg.sparta.heads = 4;
    cfg.sparta.loops = 2;
    cfg.sparta.in_features = 4;
    cfg.num_classes = 4;
    return cfg;
}

// Even smaller 32px variant for the sweep/determinism criteria.
SparseSwinConfig micro_cfg() {
    SparseSwinConfig cfg;
    cfg.input_size = 32;
    cfg.patch = 4;
    cfg.stage_dims = {4, 8, 16};
    cfg.stage_depths = {2, 2, 2};
    cfg.stage_heads = {1, 2, 4};
    cfg.window = 2;
    cfg.shift = 1;
    cfg.sparta.t = 2;
    cfg.sparta.e = 8;
    cfg.sparta.heads = 2;
    cfg.sparta.mlp_ratio = 2;
    cfg.sparta.loops = 2;
    cfg.sparta.in_features = 1;
    cfg.num_classes = 3;
    return cfg;
}

AugmentConfig aug_for(std::int64_t target) {
    AugmentConfig aug;
    aug.target_size = target;
    aug.crop = "pad_crop";
    aug.hflip_prob = 0.5;
    return aug;
}

// Closed-form parameter count derived from the architecture alone,
// independent of the registry bookkeeping inside count_params.
std::int64_t analytic_params(const SparseSwinConfig& cfg) {
    const auto swin_block = [&](std::int64_t d, std::int64_t h, std::int64_t m) {
        std::int64_t n = 0;
        n += 2 * d;                             // pre-attention norm
        n += 3 * d * d + 3 * d;                 // fused qkv with bias
        n += d * d + d;                         // output projection
        n += (2 * m - 1) * (2 * m - 1) * h;     // relative-position table
        n += 2 * d;                             // pre-mlp norm
        n += 4 * d * d + 4 * d + 4 * d * d + d; // ratio-4 mlp
        return n;
    };
    std::int64_t total = cfg.stage_dims[0] * 3 * cfg.patch * cfg.patch + cfg.stage_dims[0];
    for (std::size_t i = 0; i < 3; ++i) {
        const std::int64_t d = cfg.stage_dims[i];
        total += cfg.stage_depths[i] * swin_block(d, cfg.stage_heads[i], cfg.window);
        const std::int64_t out = i < 2 ? cfg.stage_dims[i + 1] : cfg.sparta_channels();
        total += 2 * 4 * d + out * 4 * d; // merge norm + bias-free reduction
    }
    const std::int64_t e = cfg.sparta.e;
    const std::int64_t r = cfg.sparta.mlp_ratio;
    const std::int64_t k = cfg.sparta.conv_kernel;
    total += e * cfg.sparta_channels() * k * k + e;                // converter conv
    total += cfg.sparta.t * cfg.sparta.in_features + cfg.sparta.t; // spatial linear
    const std::int64_t blocks = cfg.sparta.share_weights ? 1 : cfg.sparta.loops;
    total += blocks * (2 * e + 3 * e * e + 3 * e + e * e + e + 2 * e + r * e * e + r * e +
                       r * e * e + e);
    total += 2 * e + cfg.num_classes * e + cfg.num_classes; // head norm + classifier
    return total;
}

// Labels a shifted-canvas coordinate by which contiguous band of the source
// canvas it was rolled out of.
int source_band(std::int64_t r, std::int64_t len, std::int64_t window, std::int64_t shift) {
    const std::int64_t src = (r + shift) % len;
    if (src >= shift && src < len - window + shift) return 0;
    if (src >= len - window + shift) return 1;
    return 2;
}

bool mask_matches_oracle(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift,
                         std::string& detail) {
    const D mask = shift_mask<double>(h, w, window, shift);
    const std::int64_t m2 = window * window;
    const std::int64_t wins_w = w / window;
    if (mask.shape() != Shape{(h / window) * wins_w, m2, m2}) {
        detail = "unexpected mask shape";
        return false;
    }
    for (std::int64_t win = 0; win < mask.dim(0); ++win) {
        const std::int64_t wi = win / wins_w;
        const std::int64_t wj = win % wins_w;
        for (std::int64_t i = 0; i < m2; ++i) {
            const int ri = source_band(wi * window + i / window, h, window, shift);
            const int ci = source_band(wj * window + i % window, w, window, shift);
            for (std::int64_t j = 0; j < m2; ++j) {
                const int rj = source_band(wi * window + j / window, h, window, shift);
                const int cj = source_band(wj * window + j % window, w, window, shift);
                const double want = (ri == rj && ci == cj) ? 0.0 : -1e9;
                const double got = mask.data()[(win * m2 + i) * m2 + j];
                if (got != want) {
                    std::ostringstream ss;
                    ss << "mask(" << h << "x" << w << ") window " << win << " entry (" << i << ","
                       << j << ") = " << got << ", oracle " << want;
                    detail = ss.str();
                    return false;
                }
            }
        }
    }
    return true;
}

double mean_of(const std::vector<StepMetrics>& hist, std::size_t begin, std::size_t end) {
    double sum = 0;
    for (std::size_t i = begin; i < end; ++i) sum += hist[i].loss;
    return sum / static_cast<double>(end - begin);
}

// --- criteria ---------------------------------------------------------

Outcome criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_gradchecks("all", 10, 1e-4);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const GradCheckResult* worst = nullptr;
    bool all_pass = !results.empty();
    for (const auto& r : results) {
        if (!worst || r.max_rel_err > worst->max_rel_err) worst = &r;
        all_pass = all_pass && r.pass;
    }
    std::ostringstream ss;
    ss << results.size() << " checks, worst " << (worst ? worst->name : "none") << " "
       << (worst ? worst->max_rel_err : 0.0) << ", " << secs << " s";
    return {all_pass && secs < 120.0, ss.str()};
}

Outcome criterion_residual_identity() {
    SparTaConfig sc;
    sc.t = 4;
    sc.e = 8;
    sc.heads = 2;
    sc.loops = 2;
    sc.in_features = 16;

    ParamRegistry<float> breg;
    Rng brng(3);
    auto block = make_transformer_block(breg, "blk", sc, brng);
    zero_matching(breg, {".attn.proj.", ".mlp.fc2."});
    Rng srng(5);
    F s = F::randn({2, 4, 8}, srng);
    const bool block_identity = same_bits(block.forward(s).out, s);

    ParamRegistry<float> sreg;
    Rng srng2(4);
    auto sparta = make_sparta(sreg, "sparta", 12, sc, srng2);
    zero_matching(sreg, {".attn.proj.", ".mlp.fc2."});
    F x = F::randn({2, 12, 4, 4}, srng2);
    const auto state = sparta.forward(x);
    const bool sparta_identity = same_bits(state.tokens, sparta.converter.forward(x));

    std::ostringstream ss;
    ss << "block identity " << (block_identity ? "exact" : "BROKEN") << ", module identity "
       << (sparta_identity ? "exact" : "BROKEN");
    return {block_identity && sparta_identity, ss.str()};
}

Outcome criterion_token_budget() {
    const SparseSwinConfig cfg; // default 224px configuration
    const FlopReport a = count_flops(cfg, 224);
    const FlopReport b = count_flops(cfg, 448);
    const bool ok = a.sparta_msa == b.sparta_msa && a.sparta_mlp == b.sparta_mlp &&
                    b.backbone > a.backbone;
    std::ostringstream ss;
    ss << "msa " << a.sparta_msa << "==" << b.sparta_msa << ", mlp " << a.sparta_mlp << "=="
       << b.sparta_mlp << ", backbone " << a.backbone << " -> " << b.backbone;
    return {ok, ss.str()};
}

Outcome criterion_param_count() {
    const SparseSwinConfig tiny = tiny_cfg();
    const SparseSwinConfig def; // default 100-class configuration
    const std::int64_t tiny_total = count_params(build<float>(tiny, 3)).total;
    const std::int64_t def_total = count_params(build<float>(def, 3)).total;
    const std::int64_t tiny_oracle = analytic_params(tiny);
    const std::int64_t def_oracle = analytic_params(def);
    const bool ok = tiny_total == tiny_oracle && def_total == def_oracle;
    std::ostringstream ss;
    ss << "tiny " << tiny_total << " (oracle " << tiny_oracle << "), default " << def_total
       << " (oracle " << def_oracle << "); published total 17580000, delta "
       << (def_total - kPublishedParamTotal);
    return {ok, ss.str()};
}

Outcome criterion_attention_capture() {
    auto model = build<double>(tiny_cfg(), 11);
    Rng rng(2);
    D images = D::randn({2, 3, 64, 64}, rng);
    SparTaState<double> state;
    model.forward(images, &state);

    double worst_row = 0;
    std::int64_t rows = 0;
    for (const auto& a : state.attn) {
        const std::int64_t t = a.dim(3);
        for (std::int64_t r = 0; r < a.numel() / t; ++r) {
            double sum = 0;
            for (std::int64_t j = 0; j < t; ++j) sum += a.data()[r * t + j];
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
            ++rows;
        }
    }

    RegConfig rc;
    rc.kind = "l1";
    rc.lambda = 0.37;
    const double got = penalty(state.attn, rc).item();
    const double want = 0.37 * static_cast<double>(rows); // rows = B*heads*loops*t
    const double rel = std::abs(got - want) / want;
    std::ostringstream ss;
    ss << rows << " rows, worst |sum-1| " << worst_row << "; L1 " << got << " vs lambda*rows "
       << want << " (rel " << rel << ")";
    return {worst_row <= 1e-6 && rel <= 1e-6, ss.str()};
}

Outcome criterion_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const SparseSwinConfig cfg = tiny_cfg();
    const Dataset ds = synthetic_dataset(4, 256, 32, 42);
    const AugmentConfig aug = aug_for(64);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 16;
    tc.seed = 42;

    auto model = build<float>(cfg, 42);
    OptimState<float> state;
    const auto hist = train_steps(model, ds, tc, aug, state, 200);
    const auto [acc, ce] = evaluate(model, ds, tc.batch, aug);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Same seed, fresh model: the first 20 steps must replay bitwise.
    auto model2 = build<float>(cfg, 42);
    OptimState<float> state2;
    const auto hist2 = train_steps(model2, ds, tc, aug, state2, 20);
    bool deterministic = hist2.size() == 20;
    for (std::size_t i = 0; deterministic && i < hist2.size(); ++i) {
        deterministic = hist2[i].loss == hist[i].loss && hist2[i].acc == hist[i].acc;
    }

    std::ostringstream ss;
    ss << "train acc " << acc << " (ce " << ce << ") after 200 steps, " << secs
       << " s, 20-step replay " << (deterministic ? "identical" : "DIVERGED");
    return {acc >= 0.95 && secs < 600.0 && deterministic, ss.str()};
}

Outcome criterion_cifar_smoke() {
    const Dataset train_src = synthetic_dataset(10, 512, 32, 5);
    const Dataset eval_src = synthetic_dataset(10, 256, 32, 6);
    write_cifar("cifar_smoke_train.bin", train_src, "cifar10");
    write_cifar("cifar_smoke_eval.bin", eval_src, "cifar10");

    // Byte-offset oracle: record i starts at i*3073 with the label byte,
    // pixel j lives at i*3073 + 1 + j.
    const auto bytes = file_bytes("cifar_smoke_train.bin");
    if (bytes.size() != 512u * 3073u) return {false, "train file has wrong size"};
    for (std::size_t i = 0; i < 512; ++i) {
        const auto& rec = train_src.records[i];
        if (bytes[i * 3073] != static_cast<std::uint8_t>(rec.label)) {
            return {false, "label byte mismatch at record " + std::to_string(i)};
        }
        for (const std::size_t j : {std::size_t{0}, std::size_t{1}, std::size_t{1024},
                                    std::size_t{3071}}) {
            if (bytes[i * 3073 + 1 + j] != rec.pixels[j]) {
                return {false, "pixel byte mismatch at record " + std::to_string(i)};
            }
        }
    }
    const Dataset rt = read_cifar("cifar_smoke_train.bin", "cifar10");
    if (rt.records.size() != 512) return {false, "reader returned wrong record count"};
    for (std::size_t i = 0; i < 512; ++i) {
        if (rt.records[i].label != train_src.records[i].label ||
            rt.records[i].pixels != train_src.records[i].pixels) {
            return {false, "reader round trip mismatch at record " + std::to_string(i)};
        }
    }

    SparseSwinConfig cfg = tiny_cfg();
    cfg.num_classes = 10;
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 16;
    tc.seed = 42;
    auto model = build<float>(cfg, 42);
    OptimState<float> state;
    const auto hist = train_steps(model, rt, tc, aug_for(64), state, 100);
    const double first = mean_of(hist, 0, 10);
    const double last = mean_of(hist, 90, 100);
    std::ostringstream ss;
    ss << "reader exact; loss " << first << " -> " << last << " ("
       << 100.0 * (first - last) / first << "% drop)";
    return {last <= 0.8 * first, ss.str()};
}

Outcome criterion_sweep() {
    const SparseSwinConfig cfg = micro_cfg();
    const Dataset ds = synthetic_dataset(3, 24, 32, 11);
    const AugmentConfig aug = aug_for(32);
    struct Cell {
        const char* tag;
        const char* kind;
        double lambda;
    };
    const Cell cells[] = {{"none", "none", 0.0},
                          {"l1_1e-4", "l1", 1e-4},
                          {"l1_1e-5", "l1", 1e-5},
                          {"l2_1e-4", "l2", 1e-4},
                          {"l2_1e-5", "l2", 1e-5}};
    std::ostringstream ss;
    for (const Cell& cell : cells) {
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.batch = 6;
        tc.seed = 17;
        tc.reg.kind = cell.kind;
        tc.reg.lambda = cell.lambda;
        auto model = build<float>(cfg, 17);
        OptimState<float> state;
        const auto hist = train_steps(model, ds, tc, aug, state, 10);
        const std::string file = "metrics_" + std::string(cell.tag) + ".csv";
        write_metrics_csv(file, hist);
        if (file_bytes(file).empty()) return {false, file + " missing"};
        for (const auto& m : hist) {
            const bool want_zero = std::string(cell.kind) == "none";
            if (want_zero && m.penalty != 0.0) return {false, file + " has nonzero penalty"};
            if (!want_zero && !(m.penalty > 0.0)) return {false, file + " has no penalty"};
        }
        ss << cell.tag << " final penalty " << hist.back().penalty << "; ";
    }
    return {true, ss.str()};
}

Outcome criterion_determinism() {
    const SparseSwinConfig cfg = micro_cfg();
    const Dataset ds = synthetic_dataset(3, 24, 32, 11);
    const AugmentConfig aug = aug_for(32);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 6;
    tc.seed = 21;

    const auto run10 = [&]() {
        auto model = build<float>(cfg, 21);
        OptimState<float> state;
        return train_steps(model, ds, tc, aug, state, 10);
    };
    const auto a = run10();
    const auto b = run10();
    write_metrics_csv("determinism_a.csv", a);
    write_metrics_csv("determinism_b.csv", b);
    const bool csv_identical = file_bytes("determinism_a.csv") == file_bytes("determinism_b.csv");

    // 5 steps, checkpoint, resume into a differently-seeded shell for 5 more.
    auto seg_model = build<float>(cfg, 21);
    OptimState<float> seg_state;
    train_steps(seg_model, ds, tc, aug, seg_state, 5);
    save_checkpoint("resume.sswn", seg_model, seg_state, tc.seed, "{}");

    auto resumed = build<float>(cfg, 99);
    OptimState<float> resumed_state;
    const CheckpointMeta meta = load_checkpoint("resume.sswn", resumed, resumed_state);
    const auto tail = train_steps(resumed, ds, tc, aug, resumed_state, 5);
    const bool resume_exact = meta.step == 5 && resumed_state.step == 10 &&
                              tail.back().loss == a.back().loss;

    save_checkpoint("round_a.sswn", resumed, resumed_state, tc.seed, "{}");
    auto shell = build<float>(cfg, 123);
    OptimState<float> shell_state;
    load_checkpoint("round_a.sswn", shell, shell_state);
    save_checkpoint("round_b.sswn", shell, shell_state, tc.seed, "{}");
    const bool round_trip = file_bytes("round_a.sswn") == file_bytes("round_b.sswn");

    std::ostringstream ss;
    ss << "csv " << (csv_identical ? "identical" : "DIFFERS") << ", resume final loss "
       << tail.back().loss << (resume_exact ? " == " : " != ") << "straight " << a.back().loss
       << ", checkpoint round trip " << (round_trip ? "byte-identical" : "DIFFERS");
    return {csv_identical && resume_exact && round_trip, ss.str()};
}

Outcome criterion_window_oracles() {
    Rng rng(31);
    D x = D::randn({2, 14, 14, 8}, rng);
    const D windows = window_partition(x, 7);
    const bool inverse =
        windows.shape() == Shape{8, 49, 8} && same_bits(window_reverse(windows, 7, 2, 14, 14), x);

    std::string mask_detail = "all exact";
    bool masks_ok = mask_matches_oracle(8, 8, 4, 2, mask_detail) &&
                    mask_matches_oracle(14, 14, 7, 3, mask_detail) &&
                    mask_matches_oracle(28, 28, 7, 3, mask_detail);

    // Single 4x4 window: the full windowed path must equal calling
    // window_msa directly on the flattened tokens, and the block must equal
    // its hand-assembled composition.
    ParamRegistry<double> reg;
    Rng brng(23);
    auto blk = make_swin_block(reg, "blk", 8, 2, 4, 0, brng);
    D xb = D::randn({1, 4, 4, 8}, brng);
    D ln = blk.norm1.forward(xb);
    D direct = window_msa(reshape(ln, {1, 16, 8}), blk.attn, blk.rel).out;
    D via_partition = window_msa(window_partition(ln, 4), blk.attn, blk.rel).out;
    const bool msa_equal = same_bits(direct, via_partition);
    D y = add(xb, window_reverse(direct, 4, 1, 4, 4));
    D assembled = add(y, blk.mlp.forward(blk.norm2.forward(y)));
    const bool block_equal = same_bits(blk.forward(xb, nullptr), assembled);

    std::ostringstream ss;
    ss << "partition inverse " << (inverse ? "exact" : "BROKEN") << "; masks "
       << (masks_ok ? "match oracle" : mask_detail) << "; single-window msa "
       << (msa_equal && block_equal ? "equals direct computation" : "DIVERGES");
    return {inverse && masks_ok && msa_equal && block_equal, ss.str()};
}

struct Criterion {
    int id;
    const char* description;
    std::function<Outcome()> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "every differentiable op and the composed latent-token block pass finite-difference "
            "gradient checks (tol 1e-4, 10 seeds, under 120 s)",
         criterion_gradients},
        {2, "zero-initialized projections make the transformer block and the latent-token module "
            "exact identities",
         criterion_residual_identity},
        {3, "latent attention and MLP MAC counts are identical at 224 and 448 while the backbone "
            "count grows",
         criterion_token_budget},
        {4, "parameter counts equal the closed-form oracle for the tiny and default configs, with "
            "the published 17.58M total reported for comparison",
         criterion_param_count},
        {5, "captured attention rows sum to 1 within 1e-6 and the raw L1 penalty equals "
            "lambda*B*heads*loops*t within 1e-6 relative",
         criterion_attention_capture},
        {6, "the tiny 64px config reaches at least 95% training accuracy on synthetic 4-class "
            "data within 200 steps, deterministically",
         criterion_convergence},
        {7, "CIFAR-10-format smoke training cuts the loss by at least 20% over 100 steps and the "
            "reader matches the byte-offset oracle exactly",
         criterion_cifar_smoke},
        {8, "the regularizer sweep writes five metric files with zero penalty only for the "
            "unregularized cell",
         criterion_sweep},
        {9, "same-seed reruns match byte-for-byte, checkpoint resume reproduces the straight run "
            "exactly, and checkpoint round trips are byte-identical",
         criterion_determinism},
        {10, "window partition/reverse invert exactly, the shift mask matches a brute-force "
             "region oracle on three shapes, and single-window attention equals the direct "
             "computation",
         criterion_window_oracles},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        if (!outcome.pass) ++failures;
        std::printf("%s criterion %d: %s%s%s%s\n", outcome.pass ? "PASS" : "FAIL", c.id,
                    c.description, outcome.detail.empty() ? "" : " [",
                    outcome.detail.c_str(), outcome.detail.empty() ? "" : "]");
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("all 10 criteria passed\n");
    } else {
        std::printf("%d of 10 criteria FAILED\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
