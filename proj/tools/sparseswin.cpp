#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparseswin/config.hpp"
#include "sparseswin/gradcheck.hpp"
#include "sparseswin/train.hpp"

namespace {

using namespace sparseswin;
using nlohmann::json;

struct Options {
    std::string config_path;
    std::string checkpoint;
    std::int64_t input = 0;
    bool as_json = false;
    std::string module = "all";
    int seeds = 10;
    double tol = 1e-4;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg;
    if (o.config_path.empty()) {
        cfg.data.augment.target_size = cfg.model.input_size;
        cfg.validate();
    } else {
        cfg = load_run_config(o.config_path);
    }
    if (const char* env = std::getenv("SPARSESWIN_SEED")) {
        char* end = nullptr;
        const unsigned long long value = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') {
            throw ConfigError("SPARSESWIN_SEED must be an unsigned integer, got \"" +
                              std::string(env) + "\"");
        }
        cfg.train.seed = static_cast<std::uint64_t>(value);
    }
    return cfg;
}

int cmd_describe(const Options& o) {
    RunConfig cfg = resolve_config(o);
    if (o.input > 0) cfg.model.input_size = o.input;
    const auto chain = describe(cfg.model);
    if (o.as_json) {
        json out = json::array();
        for (const auto& [step, shape] : chain) out.push_back({{"step", step}, {"shape", shape}});
        std::cout << out.dump(2) << "\n";
    } else {
        for (const auto& [step, shape] : chain) {
            std::printf("%-20s %s\n", step.c_str(), shape.c_str());
        }
    }
    return 0;
}

int cmd_params(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const auto model = build<float>(cfg.model, cfg.train.seed);
    const ParamReport report = count_params(model);
    if (o.as_json) {
        std::cout << report.to_json() << "\n";
    } else {
        for (const auto& [name, count] : report.params) {
            std::printf("%-44s %12lld\n", name.c_str(), static_cast<long long>(count));
        }
        for (const auto& [group, count] : report.subtotals) {
            std::printf("subtotal.%-35s %12lld\n", group.c_str(), static_cast<long long>(count));
        }
        std::printf("%-44s %12lld\n", "total", static_cast<long long>(report.total));
        std::printf("%-44s %12lld\n", "published_total",
                    static_cast<long long>(kPublishedParamTotal));
        std::printf("%-44s %+12lld\n", "published_delta",
                    static_cast<long long>(report.total - kPublishedParamTotal));
    }
    return 0;
}

int cmd_flops(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const std::int64_t input = o.input > 0 ? o.input : cfg.model.input_size;
    const FlopReport report = count_flops(cfg.model, input);
    if (o.as_json) {
        std::cout << report.to_json() << "\n";
    } else {
        std::printf("%-20s %16lld\n", "backbone", static_cast<long long>(report.backbone));
        std::printf("%-20s %16lld\n", "sparta_converter",
                    static_cast<long long>(report.sparta_converter));
        std::printf("%-20s %16lld\n", "sparta_msa", static_cast<long long>(report.sparta_msa));
        std::printf("%-20s %16lld\n", "sparta_mlp", static_cast<long long>(report.sparta_mlp));
        std::printf("%-20s %16lld\n", "head", static_cast<long long>(report.head));
        std::printf("%-20s %16lld\n", "total", static_cast<long long>(report.total()));
    }
    return 0;
}

int cmd_gradcheck(const Options& o) {
    const auto results = run_gradchecks(o.module, o.seeds, o.tol);
    const GradCheckResult* first_fail = nullptr;
    if (o.as_json) {
        json out = json::array();
        for (const auto& r : results) {
            out.push_back({{"name", r.name},
                           {"module", r.module},
                           {"max_rel_err", r.max_rel_err},
                           {"worst_input", r.worst_input},
                           {"pass", r.pass}});
            if (!r.pass && !first_fail) first_fail = &r;
        }
        std::cout << out.dump(2) << "\n";
    } else {
        for (const auto& r : results) {
            std::printf("%-10s %-28s %12.3e  %s\n", r.module.c_str(), r.name.c_str(), r.max_rel_err,
                        r.pass ? "PASS" : "FAIL");
            if (!r.pass && !first_fail) first_fail = &r;
        }
    }
    if (first_fail) {
        std::fprintf(stderr, "gradient check failed: %s (input %d, rel err %.3e)\n",
                     first_fail->name.c_str(), first_fail->worst_input, first_fail->max_rel_err);
        return 1;
    }
    return 0;
}

int cmd_train(const Options& o) {
    RunConfig cfg = resolve_config(o);
    auto [train_ds, eval_ds] = load_datasets(cfg.data);
    auto model = build<float>(cfg.model, cfg.train.seed);
    OptimState<float> state;
    const auto history = train_steps(model, train_ds, cfg.train, cfg.data.augment, state,
                                     cfg.train.steps);
    write_metrics_csv("metrics.csv", history);
    save_checkpoint("checkpoint.sswn", model, state, cfg.train.seed, run_config_to_json(cfg));
    const auto [top1, ce] = evaluate(model, eval_ds, cfg.train.batch, cfg.data.augment);
    if (o.as_json) {
        json out = {{"steps", state.step},
                    {"metrics", "metrics.csv"},
                    {"checkpoint", "checkpoint.sswn"},
                    {"eval_ce", ce},
                    {"top1", top1}};
        std::cout << out.dump(2) << "\n";
    } else {
        std::printf("wrote metrics.csv (%lld steps)\n", static_cast<long long>(state.step));
        std::printf("wrote checkpoint.sswn\n");
        if (!history.empty()) {
            std::printf("final loss %.17g acc %.17g\n", history.back().loss, history.back().acc);
        }
        std::printf("top1=%.17g\n", top1);
    }
    return 0;
}

int cmd_eval(const Options& o) {
    RunConfig cfg = resolve_config(o);
    auto [train_ds, eval_ds] = load_datasets(cfg.data);
    (void)train_ds;
    auto model = build<float>(cfg.model, cfg.train.seed);
    OptimState<float> state;
    load_checkpoint(o.checkpoint, model, state);
    const auto [top1, ce] = evaluate(model, eval_ds, cfg.train.batch, cfg.data.augment);
    if (o.as_json) {
        json out = {{"top1", top1}, {"eval_ce", ce}};
        std::cout << out.dump(2) << "\n";
    } else {
        std::printf("top1=%.17g\n", top1);
    }
    return 0;
}

int cmd_sweep(const Options& o) {
    const RunConfig base = resolve_config(o);
    auto [train_ds, eval_ds] = load_datasets(base.data);
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
    json rows = json::array();
    for (const Cell& cell : cells) {
        RunConfig cfg = base;
        cfg.train.reg.kind = cell.kind;
        cfg.train.reg.lambda = cell.lambda;
        auto model = build<float>(cfg.model, cfg.train.seed);
        OptimState<float> state;
        const auto history = train_steps(model, train_ds, cfg.train, cfg.data.augment, state,
                                         cfg.train.steps);
        const std::string file = "metrics_" + std::string(cell.tag) + ".csv";
        write_metrics_csv(file, history);
        const auto [top1, ce] = evaluate(model, eval_ds, cfg.train.batch, cfg.data.augment);
        if (o.as_json) {
            rows.push_back({{"reg", cell.tag},
                            {"metrics", file},
                            {"final_loss", history.empty() ? 0.0 : history.back().loss},
                            {"top1", top1}});
        } else {
            std::printf("reg=%-8s wrote %s final_loss=%.6g top1=%.17g\n", cell.tag, file.c_str(),
                        history.empty() ? 0.0 : history.back().loss, top1);
        }
    }
    if (o.as_json) std::cout << rows.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"SparseSwin: windowed hierarchical backbone with a sparse latent token block"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub, bool with_input) {
        sub->add_option("--config", o.config_path,
                        "JSON run configuration; built-in defaults apply when omitted");
        if (with_input) sub->add_option("--input", o.input, "override the input resolution");
        sub->add_flag("--json", o.as_json, "machine-readable stdout");
    };

    CLI::App* describe = app.add_subcommand("describe", "print the per-step output shape chain");
    add_common(describe, true);
    CLI::App* params = app.add_subcommand("params", "parameter count report");
    add_common(params, false);
    CLI::App* flops = app.add_subcommand("flops", "multiply-accumulate count report");
    add_common(flops, true);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gradcheck, false);
    gradcheck->add_option("--module", o.module, "all, tensor, backbone, or sparta (default all)");
    gradcheck->add_option("--seeds", o.seeds, "seeds per check (default 10)");
    gradcheck->add_option("--tol", o.tol, "worst relative error allowed (default 1e-4)");
    CLI::App* train = app.add_subcommand("train", "train; writes metrics.csv and checkpoint.sswn");
    add_common(train, false);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints top1=<float>");
    add_common(eval, false);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint file to evaluate")->required();
    CLI::App* sweep = app.add_subcommand("sweep", "regularizer grid; writes metrics_<reg>.csv files");
    add_common(sweep, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(describe)) return cmd_describe(o);
        if (app.got_subcommand(params)) return cmd_params(o);
        if (app.got_subcommand(flops)) return cmd_flops(o);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(o);
        if (app.got_subcommand(train)) return cmd_train(o);
        if (app.got_subcommand(eval)) return cmd_eval(o);
        if (app.got_subcommand(sweep)) return cmd_sweep(o);
    } catch (const sparseswin::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const sparseswin::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const sparseswin::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
