#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "metapde/experiment.hpp"

using namespace metapde;

namespace {

RunConfig resolve_config(const std::string& config_path, const std::string& preset,
                         bool seed_set, std::uint64_t seed, int threads) {
    RunConfig cfg;
    if (!config_path.empty() && !preset.empty()) {
        throw std::invalid_argument("pass either --config or --preset, not both");
    }
    if (!config_path.empty()) {
        cfg = RunConfig::from_file(config_path);
    } else if (!preset.empty()) {
        cfg = preset_config(preset);
    } else {
        throw std::invalid_argument("one of --config or --preset is required");
    }
    if (seed_set) {
        cfg.suite.master_seed = seed;
        if (cfg.test_suite) cfg.test_suite->master_seed = mix_seed(seed, 0x7e57);
        cfg.meta.seed = seed;
    }
    if (threads > 0) cfg.threads = threads;
    return cfg;
}

std::vector<double> parse_offsets(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    if (out.empty()) throw std::invalid_argument("--offsets is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metapde: few-shot learning of spatiotemporal dynamics on sensor graphs"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, suite_dir, checkpoint;
    std::uint64_t seed = 0;
    int threads = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--preset", preset, "built-in configuration: desk | paper-metatrain | paper-metatest");
        sub->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--threads", threads, "worker threads (outputs are thread-count independent)");
        auto* o = sub->add_option("--out", out_dir, "output directory");
        if (needs_out) o->required();
    };

    // generate
    auto* cmd_generate = app.add_subcommand("generate", "synthesize a task suite onto disk");
    add_common(cmd_generate, true);
    int gen_tasks = 0, gen_nodes = 0;
    cmd_generate->add_option("--tasks", gen_tasks, "override task count");
    cmd_generate->add_option("--nodes", gen_nodes, "override node count (fixed)");

    // train
    auto* cmd_train = app.add_subcommand("train", "meta-train, pretrain, or fit per-task baselines");
    add_common(cmd_train, true);
    std::string variant, model = "padgn";
    int shots = 0, epochs = 0;
    double alpha = 0.0, beta = -1.0, aux_weight = -1.0;
    int inner_steps = 0, batch_tasks = 0;
    cmd_train->add_option("--suite", suite_dir, "task suite directory")->required();
    cmd_train->add_option("--variant", variant, "modular | maml | scratch | weight_init");
    cmd_train->add_option("--model", model, "padgn | rgn (scratch and weight_init)");
    cmd_train->add_option("--shots", shots, "override the k-shot split (scratch)");
    cmd_train->add_option("--epochs", epochs, "override training epochs");
    cmd_train->add_option("--alpha", alpha, "override outer/adaptation learning rate");
    auto* opt_beta = cmd_train->add_option("--beta", beta, "override inner learning rate");
    auto* opt_inner = cmd_train->add_option("--inner-steps", inner_steps, "inner updates per task");
    auto* opt_batch = cmd_train->add_option("--batch-tasks", batch_tasks, "tasks sampled per epoch");
    auto* opt_aux = cmd_train->add_option("--aux-weight", aux_weight, "auxiliary loss weight");

    // evaluate
    auto* cmd_evaluate = app.add_subcommand("evaluate", "adapt a checkpoint to a suite and report MSE");
    add_common(cmd_evaluate, true);
    int eval_shots = 0, adapt_epochs = 0;
    cmd_evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    cmd_evaluate->add_option("--suite", suite_dir, "task suite directory")->required();
    cmd_evaluate->add_option("--shots", eval_shots, "k-shot split used for adaptation");
    cmd_evaluate->add_option("--adapt-epochs", adapt_epochs, "override adaptation budget");

    // gradcheck
    auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference audit of model gradients");
    std::string gc_model = "all";
    int gc_nodes = 10;
    std::uint64_t gc_seed = 0;
    double gc_tol = 1e-4;
    cmd_gc->add_option("--model", gc_model, "sdm | tdm | padgn | rgn | all");
    cmd_gc->add_option("--nodes", gc_nodes, "graph size");
    cmd_gc->add_option("--seed", gc_seed, "probe seed");
    cmd_gc->add_option("--tol", gc_tol, "relative error tolerance");

    // fdm
    auto* cmd_fdm = app.add_subcommand("fdm", "print exact stencil coefficients");
    std::string offsets_str;
    int order = 1;
    cmd_fdm->add_option("--offsets", offsets_str, "comma-separated sample offsets")->required();
    cmd_fdm->add_option("--order", order, "derivative order")->required();

    // pipeline
    auto* cmd_pipeline = app.add_subcommand("pipeline", "generate, train and evaluate end to end");
    add_common(cmd_pipeline, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_generate->parsed()) {
            RunConfig cfg = resolve_config(config_path, preset, seed_set, seed, threads);
            if (gen_tasks > 0) cfg.suite.tasks = gen_tasks;
            if (gen_nodes > 0) cfg.suite.n_nodes_min = cfg.suite.n_nodes_max = gen_nodes;
            nlohmann::json manifest = run_generate(cfg, out_dir);
            std::cout << "wrote " << manifest.at("tasks").get<int>() << " tasks to " << out_dir
                      << " (config hash " << manifest.at("config_hash").get<std::uint64_t>()
                      << ")\n";
        } else if (cmd_train->parsed()) {
            RunConfig cfg = resolve_config(config_path, preset, seed_set, seed, threads);
            if (!variant.empty()) cfg.meta.variant = variant;
            cfg.scratch_model = model;
            if (cfg.meta.variant == "scratch") {
                if (*opt_beta || *opt_inner || *opt_batch || *opt_aux) {
                    throw std::invalid_argument(
                        "train --variant scratch trains each task on its own shots; the "
                        "meta-suite flags --beta/--inner-steps/--batch-tasks/--aux-weight do "
                        "not apply");
                }
            }
            if (epochs > 0) {
                if (cfg.meta.variant == "scratch") cfg.meta.adapt_epochs = epochs;
                else cfg.meta.epochs = epochs;
            }
            if (alpha > 0.0) cfg.meta.alpha = alpha;
            if (beta >= 0.0) cfg.meta.beta = beta;
            if (inner_steps > 0) cfg.meta.inner_steps = inner_steps;
            if (batch_tasks > 0) cfg.meta.batch_tasks = batch_tasks;
            if (aux_weight >= 0.0) cfg.meta.aux_weight = aux_weight;
            run_train(cfg, suite_dir, out_dir, shots);
            std::cout << "run directory: " << out_dir << "\n";
        } else if (cmd_evaluate->parsed()) {
            RunConfig cfg;
            if (!config_path.empty() || !preset.empty()) {
                cfg = resolve_config(config_path, preset, seed_set, seed, threads);
            } else if (seed_set) {
                cfg.meta.seed = seed;
            }
            if (threads > 0) cfg.threads = threads;
            if (adapt_epochs > 0) cfg.meta.adapt_epochs = adapt_epochs;
            EvalSummary summary = run_evaluate(cfg, checkpoint, suite_dir, eval_shots, out_dir);
            std::cout << format_summary_table(summary.records);
            std::cout << "mean over " << summary.records.size() << " tasks: "
                      << fmt_g17(summary.mean_mse) << "\n";
        } else if (cmd_gc->parsed()) {
            std::string report;
            const bool ok = run_gradcheck(gc_model, gc_nodes, gc_seed, gc_tol, &report);
            std::cout << report;
            if (!ok) {
                std::cerr << "gradient check failed\n";
                return 1;
            }
        } else if (cmd_fdm->parsed()) {
            std::cout << run_fdm(parse_offsets(offsets_str), order) << "\n";
        } else if (cmd_pipeline->parsed()) {
            RunConfig cfg = resolve_config(config_path, preset, seed_set, seed, threads);
            std::cout << run_pipeline(cfg, out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
