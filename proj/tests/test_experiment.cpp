#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>

#include "metapde/experiment.hpp"

using namespace metapde;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config(std::uint64_t seed = 0) {
    RunConfig cfg;
    cfg.suite.pde.grid_n = 32;
    cfg.suite.pde.fourier_cutoff = 3;
    cfg.suite.pde.dt_solver = 1e-3;
    cfg.suite.pde.dt_save = 5e-3;
    cfg.suite.pde.n_frames = 8;
    cfg.suite.tasks = 2;
    cfg.suite.n_nodes_min = cfg.suite.n_nodes_max = 12;
    cfg.suite.k_neighbors = 3;
    cfg.suite.split_k = 4;
    cfg.suite.master_seed = seed;
    cfg.model.sdm.hidden = 4;
    cfg.model.tdm.hidden = 4;
    cfg.model.rgn.hidden = 4;
    cfg.model.sync();
    cfg.meta.epochs = 2;
    cfg.meta.adapt_epochs = 3;
    cfg.eval_shots = {4};
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("run config JSON round trip and strict keys") {
    RunConfig cfg = tiny_run_config(5);
    cfg.test_suite = cfg.suite;
    nlohmann::json j = cfg.to_json();
    RunConfig back = RunConfig::from_json(j);
    CHECK(back.to_json() == j);

    j["unexpected"] = 1;
    CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("unexpected"),
                         std::invalid_argument);
    nlohmann::json m = model_config_to_json(cfg.model);
    m["typo"] = 2;
    CHECK_THROWS_AS(model_config_from_json(m), std::invalid_argument);
}

TEST_CASE("presets pin the documented settings") {
    RunConfig train = preset_config("paper-metatrain");
    CHECK(train.suite.tasks == 100);
    CHECK(train.suite.pde.grid_n == 100);
    CHECK(train.suite.pde.n_frames == 20);
    CHECK(train.suite.pde.lambda == 1.0);
    CHECK(train.suite.pde.diff_coeff == 0.2);
    CHECK(train.suite.pde.fourier_cutoff == 9);
    CHECK(train.suite.n_nodes_min == 246);
    CHECK(train.suite.k_neighbors == 4);

    RunConfig test = preset_config("paper-metatest");
    CHECK(test.suite.tasks == 10);
    CHECK(test.suite.pde.lambda == 0.8);
    CHECK(test.suite.pde.diff_coeff == 0.1);
    CHECK(test.suite.n_nodes_min == 150);
    CHECK(test.suite.n_nodes_max == 400);

    RunConfig desk = preset_config("desk");
    CHECK(desk.suite.pde.grid_n == 50);
    CHECK(desk.suite.tasks == 10);
    REQUIRE(desk.test_suite.has_value());
    CHECK(desk.test_suite->tasks == 5);
    CHECK(desk.test_suite->pde.lambda == 0.8);
    CHECK(desk.model.sdm.hidden == 16);

    CHECK_THROWS_AS(preset_config("nope"), std::invalid_argument);
}

TEST_CASE("preset files in the repository match the built-ins") {
    for (const std::string& name : preset_names()) {
        const fs::path path = fs::path(METAPDE_SOURCE_DIR) / "presets" / (name + ".json");
        REQUIRE_MESSAGE(fs::exists(path), path.string());
        nlohmann::json on_disk = nlohmann::json::parse(slurp(path));
        CHECK(on_disk == preset_config(name).to_json());
    }
}

TEST_CASE("parallel_for fills slots identically at any thread count") {
    std::vector<int> a(37), b(37);
    parallel_for(37, 1, [&](int i) { a[i] = i * i; });
    parallel_for(37, 4, [&](int i) { b[i] = i * i; });
    CHECK(a == b);
    CHECK_THROWS_AS(parallel_for(5, 3,
                                 [](int i) {
                                     if (i == 2) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("generate is deterministic and thread-count independent") {
    RunConfig cfg = tiny_run_config(9);
    const fs::path d1 = temp_dir("metapde_gen1");
    const fs::path d2 = temp_dir("metapde_gen2");
    cfg.threads = 1;
    nlohmann::json m1 = run_generate(cfg, d1);
    cfg.threads = 3;
    nlohmann::json m2 = run_generate(cfg, d2);
    CHECK(m1 == m2);
    CHECK(slurp(d1 / "suite.json") == slurp(d2 / "suite.json"));
    CHECK(slurp(d1 / "task_0001" / "frames.csv") == slurp(d2 / "task_0001" / "frames.csv"));
    CHECK(!fs::exists(d1.string() + ".incomplete"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("scratch training writes deterministic metrics") {
    RunConfig cfg = tiny_run_config(11);
    const fs::path suite = temp_dir("metapde_suite_scratch");
    run_generate(cfg, suite);
    cfg.meta.variant = "scratch";
    cfg.scratch_model = "rgn";
    const fs::path r1 = temp_dir("metapde_run_s1");
    const fs::path r2 = temp_dir("metapde_run_s2");
    run_train(cfg, suite, r1);
    run_train(cfg, suite, r2);
    CHECK(slurp(r1 / "metrics.csv") == slurp(r2 / "metrics.csv"));
    std::string metrics = slurp(r1 / "metrics.csv");
    CHECK(metrics.find("scratch-rgn") != std::string::npos);
    fs::remove_all(suite);
    fs::remove_all(r1);
    fs::remove_all(r2);
}

TEST_CASE("meta training run directory and evaluation flow") {
    RunConfig cfg = tiny_run_config(13);
    const fs::path suite = temp_dir("metapde_suite_meta");
    run_generate(cfg, suite);
    cfg.meta.variant = "modular";
    const fs::path run = temp_dir("metapde_run_meta");
    run_train(cfg, suite, run);
    CHECK(fs::exists(run / "phi.ckpt"));
    CHECK(fs::exists(run / "config.json"));
    std::string history = slurp(run / "history.csv");
    CHECK(history.find("epoch,task_id,train_loss,test_loss,aux_dx,aux_dy,aux_dxx,aux_dyy") == 0);

    const fs::path eval_dir = temp_dir("metapde_eval_meta");
    EvalSummary summary = run_evaluate(cfg, run / "phi.ckpt", suite, 4, eval_dir);
    CHECK(summary.method == "meta-modular");
    REQUIRE(summary.records.size() == 2);
    double mean = 0.0;
    for (const auto& r : summary.records) {
        CHECK(r.shots == 4);
        mean += r.test_mse;
    }
    CHECK(summary.mean_mse == (mean / 2.0));

    // The same evaluation twice is byte-identical.
    const fs::path eval_dir2 = temp_dir("metapde_eval_meta2");
    run_evaluate(cfg, run / "phi.ckpt", suite, 4, eval_dir2);
    CHECK(slurp(eval_dir / "metrics.csv") == slurp(eval_dir2 / "metrics.csv"));

    fs::remove_all(suite);
    fs::remove_all(run);
    fs::remove_all(eval_dir);
    fs::remove_all(eval_dir2);
}

TEST_CASE("weight-init training produces an evaluable joint checkpoint") {
    RunConfig cfg = tiny_run_config(17);
    const fs::path suite = temp_dir("metapde_suite_wi");
    run_generate(cfg, suite);
    cfg.meta.variant = "weight_init";
    cfg.scratch_model = "padgn";
    const fs::path run = temp_dir("metapde_run_wi");
    run_train(cfg, suite, run);
    CHECK(fs::exists(run / "model.ckpt"));

    const fs::path eval_dir = temp_dir("metapde_eval_wi");
    EvalSummary summary = run_evaluate(cfg, run / "model.ckpt", suite, 4, eval_dir);
    CHECK(summary.method == "weight-init-padgn");
    CHECK(summary.records.size() == 2);
    fs::remove_all(suite);
    fs::remove_all(run);
    fs::remove_all(eval_dir);
}

TEST_CASE("fdm audit strings") {
    CHECK(run_fdm({-1.0, 0.0, 1.0}, 2) == "1 -2 1");
    CHECK(run_fdm({-1.0, 0.0, 1.0}, 1) == "-0.5 0 0.5");
    CHECK(run_fdm({0.0, 1.0}, 1) == "-1 1");
}

TEST_CASE("gradcheck command covers every model family") {
    std::string report;
    CHECK(run_gradcheck("all", 10, 1, 1e-4, &report));
    CHECK(report.find("model sdm") != std::string::npos);
    CHECK(report.find("model tdm") != std::string::npos);
    CHECK(report.find("model padgn") != std::string::npos);
    CHECK(report.find("model rgn") != std::string::npos);
    CHECK_THROWS_AS(run_gradcheck("cnn", 10, 1, 1e-4, nullptr), std::invalid_argument);
}

TEST_CASE("summary table aggregates method means per shot count") {
    std::vector<EvalRecord> records{{0, 5, "m1", 1.0}, {1, 5, "m1", 3.0}, {0, 10, "m1", 0.5}};
    std::string table = format_summary_table(records);
    CHECK(table.find("m1") != std::string::npos);
    CHECK(table.find("2.000e+00") != std::string::npos);  // mean of 1 and 3
    CHECK(table.find("5.000e-01") != std::string::npos);
    CHECK(table.find("5-shot") != std::string::npos);
    CHECK(table.find("10-shot") != std::string::npos);
}
