#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metapde/meta_learn.hpp"

namespace metapde {

/// Whole-run configuration: task family (or families), architecture sizes
/// and the training schedule. Unknown JSON keys are rejected.
struct RunConfig {
    SuiteConfig suite;                      // primary task family
    std::optional<SuiteConfig> test_suite;  // held-out family (pipeline)
    ModelConfig model;
    MetaConfig meta;
    std::string scratch_model = "padgn";  // model for variant=scratch|weight_init
    std::vector<int> eval_shots{5, 10};   // shot counts the pipeline evaluates
    int threads = 1;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);
};

nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Built-in presets: "desk", "paper-metatrain", "paper-metatest". The same
/// documents ship under presets/ in the repository.
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Deterministic worker pool: fn(i) runs once per index, results must go
/// into per-index slots so output is independent of the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// commands (throw on failure; partial output stays under <out>.incomplete)
// ---------------------------------------------------------------------------

/// Suite directories plus a manifest; rerunning a config reproduces the
/// manifest hash bit for bit.
nlohmann::json run_generate(const RunConfig& cfg, const std::filesystem::path& out);

/// Meta-training (modular|maml), joint pretraining (weight_init) or the
/// per-task scratch baseline, depending on cfg.meta.variant. Returns the run
/// directory with config snapshot, checkpoint(s) and loss CSVs.
std::filesystem::path run_train(const RunConfig& cfg, const std::filesystem::path& suite_dir,
                                const std::filesystem::path& out, int shots_override = 0);

struct EvalRecord {
    int task_id = 0;
    int shots = 0;
    std::string method;
    double test_mse = 0.0;
};

struct EvalSummary {
    std::vector<EvalRecord> records;
    double mean_mse = 0.0;
    std::string method;
};

/// Adapt a checkpoint to every task of a suite at the given shot count and
/// report per-task plus mean MSE.
EvalSummary run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& suite_dir, int shots,
                         const std::filesystem::path& out);

/// Gradient-check every parameter of the chosen model family on a random
/// small task; returns true when all parameters pass.
bool run_gradcheck(const std::string& model, int nodes, std::uint64_t seed, double tol,
                   std::string* report_out = nullptr);

/// Stencil coefficients as exact decimal text.
std::string run_fdm(const std::vector<double>& offsets, int order);

/// generate -> train -> evaluate over all methods; writes summary.csv and an
/// aligned text table mirroring the shots-by-method layout.
std::string run_pipeline(const RunConfig& cfg, const std::filesystem::path& out);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::string format_summary_table(const std::vector<EvalRecord>& records);

}  // namespace metapde
