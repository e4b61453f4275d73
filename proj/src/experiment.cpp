#include "metapde/experiment.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "metapde/gradcheck.hpp"

namespace metapde {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

nlohmann::json model_config_to_json(const ModelConfig& mc) {
    nlohmann::json ops = nlohmann::json::array();
    for (GraphDerivOp op : mc.sdm.ops) ops.push_back(deriv_op_name(op));
    return nlohmann::json{{"sdm_hidden", mc.sdm.hidden},
                          {"tdm_hidden", mc.tdm.hidden},
                          {"rgn_hidden", mc.rgn.hidden},
                          {"operators", ops},
                          {"n_extra", mc.tdm.n_extra}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig mc;
    for (const auto& [key, val] : j.items()) {
        if (key == "sdm_hidden") mc.sdm.hidden = val.get<std::size_t>();
        else if (key == "tdm_hidden") mc.tdm.hidden = val.get<std::size_t>();
        else if (key == "rgn_hidden") mc.rgn.hidden = val.get<std::size_t>();
        else if (key == "n_extra") {
            mc.tdm.n_extra = val.get<std::size_t>();
            mc.rgn.n_extra = mc.tdm.n_extra;
        } else if (key == "operators") {
            mc.sdm.ops.clear();
            for (const auto& name : val) {
                const std::string s = name.get<std::string>();
                if (s == "dx") mc.sdm.ops.push_back(GraphDerivOp::dx);
                else if (s == "dy") mc.sdm.ops.push_back(GraphDerivOp::dy);
                else if (s == "dxx") mc.sdm.ops.push_back(GraphDerivOp::dxx);
                else if (s == "dyy") mc.sdm.ops.push_back(GraphDerivOp::dyy);
                else throw std::invalid_argument("model config: unknown operator '" + s + "'");
            }
        } else {
            throw std::invalid_argument("model config: unknown key '" + key + "'");
        }
    }
    mc.sync();
    return mc;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j{{"suite", suite.to_json()},
                     {"model", model_config_to_json(model)},
                     {"meta", meta.to_json()},
                     {"scratch_model", scratch_model},
                     {"eval_shots", eval_shots},
                     {"threads", threads}};
    if (test_suite) j["test_suite"] = test_suite->to_json();
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "suite") cfg.suite = SuiteConfig::from_json(val);
        else if (key == "test_suite") cfg.test_suite = SuiteConfig::from_json(val);
        else if (key == "model") cfg.model = model_config_from_json(val);
        else if (key == "meta") cfg.meta = MetaConfig::from_json(val);
        else if (key == "scratch_model") cfg.scratch_model = val.get<std::string>();
        else if (key == "eval_shots") cfg.eval_shots = val.get<std::vector<int>>();
        else if (key == "threads") cfg.threads = val.get<int>();
        else throw std::invalid_argument("run config: unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig RunConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path.string() + "'");
    return from_json(nlohmann::json::parse(in));
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    if (name == "paper-metatrain") {
        cfg.suite.pde = PdeConfig{};  // lambda=1, D=0.2, F=9, 100x100, dt 5e-3
        cfg.suite.tasks = 100;
        cfg.suite.n_nodes_min = cfg.suite.n_nodes_max = 246;
        cfg.suite.k_neighbors = 4;
        cfg.suite.split_k = 5;
        cfg.suite.master_seed = 0;
        cfg.meta.epochs = 1000;
    } else if (name == "paper-metatest") {
        cfg.suite.pde = PdeConfig{};
        cfg.suite.pde.lambda = 0.8;
        cfg.suite.pde.diff_coeff = 0.1;
        cfg.suite.tasks = 10;
        cfg.suite.n_nodes_min = 150;
        cfg.suite.n_nodes_max = 400;
        cfg.suite.k_neighbors = 4;
        cfg.suite.split_k = 5;
        cfg.suite.master_seed = 1;
        cfg.meta.epochs = 1000;
    } else if (name == "desk") {
        cfg.suite.pde.grid_n = 50;
        cfg.suite.tasks = 10;
        cfg.suite.n_nodes_min = 20;
        cfg.suite.n_nodes_max = 50;
        cfg.suite.k_neighbors = 4;
        cfg.suite.split_k = 5;
        cfg.suite.master_seed = 0;
        SuiteConfig test = cfg.suite;
        test.pde.lambda = 0.8;
        test.pde.diff_coeff = 0.1;
        test.tasks = 5;
        test.master_seed = 1;
        cfg.test_suite = test;
        cfg.model.sdm.hidden = 16;
        cfg.model.tdm.hidden = 16;
        cfg.model.rgn.hidden = 16;
        cfg.model.sync();
        cfg.meta.epochs = 150;
        cfg.meta.adapt_epochs = 200;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return cfg;
}

std::vector<std::string> preset_names() { return {"desk", "paper-metatrain", "paper-metatest"}; }

// ---------------------------------------------------------------------------
// worker pool
// ---------------------------------------------------------------------------

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

namespace {

/// Writes into `<final>.incomplete`; commit() swaps it into place. A failed
/// command leaves only the quarantined directory behind.
class StagedDir {
public:
    explicit StagedDir(fs::path final_path)
        : final_(std::move(final_path)), tmp_(final_.string() + ".incomplete") {
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    const fs::path& path() const { return tmp_; }
    void commit() {
        fs::remove_all(final_);
        fs::rename(tmp_, final_);
        committed_ = true;
    }
    ~StagedDir() = default;  // uncommitted output stays quarantined

private:
    fs::path final_, tmp_;
    bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

std::vector<TaskTensors> load_task_tensors(const fs::path& suite_dir, const SdmConfig& sdm_cfg) {
    std::vector<TaskDataset> tasks = load_suite(suite_dir);
    std::vector<TaskTensors> tensors;
    tensors.reserve(tasks.size());
    for (const TaskDataset& t : tasks) tensors.push_back(prepare_task(t, sdm_cfg));
    return tensors;
}

std::string history_header(const SdmConfig& sdm_cfg) {
    std::string h = "epoch,task_id,train_loss,test_loss";
    for (GraphDerivOp op : sdm_cfg.ops) h += ",aux_" + deriv_op_name(op);
    return h;
}

void write_history_csv(const fs::path& path, const MetaState& state, const SdmConfig& sdm_cfg) {
    std::ofstream out(path);
    out << history_header(sdm_cfg) << "\n";
    for (const EpochRecord& r : state.history) {
        out << r.epoch << "," << r.task_id << "," << fmt_g17(r.train_loss) << ","
            << fmt_g17(r.test_loss);
        for (double a : r.aux) out << "," << fmt_g17(a);
        out << "\n";
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

nlohmann::json run_generate(const RunConfig& cfg, const fs::path& out) {
    cfg.suite.validate();
    StagedDir staged(out);
    std::vector<TaskDataset> tasks(cfg.suite.tasks);
    parallel_for(cfg.suite.tasks, cfg.threads,
                 [&](int i) { tasks[i] = make_suite_task(cfg.suite, i); });
    save_suite(tasks, cfg.suite, staged.path());
    std::ifstream in(staged.path() / "suite.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    staged.commit();
    return manifest;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fs::path run_train(const RunConfig& cfg, const fs::path& suite_dir, const fs::path& out,
                   int shots_override) {
    cfg.meta.validate();
    ModelConfig mc = cfg.model;
    mc.sync();
    StagedDir staged(out);
    write_text(staged.path() / "config.json", cfg.to_json().dump(2) + "\n");
    const std::string variant = cfg.meta.variant;

    if (variant == "modular" || variant == "maml") {
        std::vector<TaskTensors> tensors = load_task_tensors(suite_dir, mc.sdm);
        MetaState state = meta_train(tensors, mc, cfg.meta);
        ParamStore phi = state.phi;
        nlohmann::json meta{{"format", "metapde-run"},
                            {"method", "meta-" + variant},
                            {"model", model_config_to_json(mc)},
                            {"meta", cfg.meta.to_json()}};
        phi.save(staged.path() / "phi.ckpt", meta);
        write_history_csv(staged.path() / "history.csv", state, mc.sdm);
    } else if (variant == "weight_init") {
        const ModelKind kind = model_kind_from_string(cfg.scratch_model);
        std::vector<TaskTensors> tensors = load_task_tensors(suite_dir, mc.sdm);
        std::vector<double> curve;
        ParamStore params = pretrain_joint(tensors, kind, mc, cfg.meta, &curve);
        nlohmann::json meta{{"format", "metapde-run"},
                            {"method", "weight-init-" + model_kind_name(kind)},
                            {"model", model_config_to_json(mc)},
                            {"meta", cfg.meta.to_json()}};
        params.save(staged.path() / "model.ckpt", meta);
        std::ofstream hist(staged.path() / "history.csv");
        hist << "epoch,loss\n";
        for (std::size_t e = 0; e < curve.size(); ++e) {
            hist << e << "," << fmt_g17(curve[e]) << "\n";
        }
    } else if (variant == "scratch") {
        const ModelKind kind = model_kind_from_string(cfg.scratch_model);
        std::vector<TaskTensors> tensors = load_task_tensors(suite_dir, mc.sdm);
        std::vector<EvalRecord> records(tensors.size());
        const std::string method = "scratch-" + model_kind_name(kind);
        parallel_for(static_cast<int>(tensors.size()), cfg.threads, [&](int i) {
            MetaConfig task_cfg = cfg.meta;
            TaskTensors task = tensors[i];
            if (shots_override > 0) task.split_k = shots_override;
            AdaptResult r = baseline_scratch(task, kind, mc, task_cfg,
                                             mix_seed(cfg.meta.seed, 7000 + i));
            records[i] = {i, task.split_k, method, r.test_mse};
        });
        write_metrics_csv(staged.path() / "metrics.csv", records);
        write_text(staged.path() / "summary.txt", format_summary_table(records));
    } else {
        throw std::invalid_argument("train: variant '" + variant + "' is not trainable");
    }
    staged.commit();
    return out;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

EvalSummary run_evaluate(const RunConfig& cfg, const fs::path& checkpoint,
                         const fs::path& suite_dir, int shots, const fs::path& out) {
    nlohmann::json meta;
    ParamStore params = ParamStore::load(checkpoint, &meta);
    if (!meta.contains("method") || !meta.contains("model")) {
        throw std::runtime_error("evaluate: checkpoint lacks method/model metadata");
    }
    const std::string method = meta.at("method").get<std::string>();
    ModelConfig mc = model_config_from_json(meta.at("model"));
    mc.sync();
    if (mc.tdm.n_extra != 0) {
        throw std::runtime_error("evaluate: checkpoint expects " +
                                 std::to_string(mc.tdm.n_extra) +
                                 " extra feature channels but suite tasks supply 0");
    }
    std::vector<TaskTensors> tensors = load_task_tensors(suite_dir, mc.sdm);

    StagedDir staged(out);
    std::vector<EvalRecord> records(tensors.size());
    parallel_for(static_cast<int>(tensors.size()), cfg.threads, [&](int i) {
        TaskTensors task = tensors[i];
        if (shots > 0) task.split_k = shots;
        const std::uint64_t seed = mix_seed(mix_seed(cfg.meta.seed, task.split_k), 500 + i);
        AdaptResult r;
        if (method.rfind("meta-", 0) == 0) {
            r = meta_test(params, task, mc, cfg.meta, seed);
        } else if (method == "weight-init-padgn") {
            r = baseline_weight_init(params, task, ModelKind::padgn, mc, cfg.meta, seed);
        } else if (method == "weight-init-rgn") {
            r = baseline_weight_init(params, task, ModelKind::rgn, mc, cfg.meta, seed);
        } else {
            throw std::runtime_error("evaluate: unknown checkpoint method '" + method + "'");
        }
        records[i] = {i, task.split_k, method, r.test_mse};
    });

    EvalSummary summary;
    summary.records = records;
    summary.method = method;
    double acc = 0.0;
    for (const auto& r : records) acc += r.test_mse;
    summary.mean_mse = records.empty() ? 0.0 : acc / static_cast<double>(records.size());

    write_metrics_csv(staged.path() / "metrics.csv", records);
    write_text(staged.path() / "summary.txt", format_summary_table(records));
    staged.commit();
    return summary;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

namespace {

struct ProbeTask {
    SpatialGraph graph;
    GraphContext ctx;
    std::vector<Tensor> frames;
    std::vector<std::vector<Tensor>> labels;
};

ProbeTask make_probe_task(int n_nodes, std::uint64_t seed, std::size_t n_ops, int n_frames) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.0, kDomainSize);
    std::uniform_real_distribution<double> amp(-0.5, 0.5);
    std::vector<SpatialGraph::Node> nodes;
    for (int i = 0; i < n_nodes; ++i) nodes.push_back({i, pos(rng), pos(rng)});
    ProbeTask t;
    t.graph = knn_graph(nodes, std::min(3, n_nodes - 1));
    t.ctx = GraphContext::from_graph(t.graph);
    const double ax = amp(rng), ay = amp(rng);
    for (int f = 0; f < n_frames; ++f) {
        Tensor u({static_cast<std::size_t>(n_nodes), 1});
        std::vector<Tensor> lab;
        for (int i = 0; i < n_nodes; ++i) {
            u[i] = std::sin(nodes[i].x + ax * f) * std::cos(nodes[i].y + ay * f);
        }
        for (std::size_t k = 0; k < n_ops; ++k) {
            Tensor l({static_cast<std::size_t>(n_nodes), 1});
            for (int i = 0; i < n_nodes; ++i) {
                l[i] = std::cos(nodes[i].x + 0.37 * static_cast<double>(k)) * 0.5;
            }
            lab.push_back(std::move(l));
        }
        t.frames.push_back(std::move(u));
        t.labels.push_back(std::move(lab));
    }
    return t;
}

GradCheckReport gradcheck_model(const std::string& model, int nodes, std::uint64_t seed,
                                double tol) {
    ModelConfig mc;
    mc.sdm.hidden = 8;
    mc.tdm.hidden = 8;
    mc.rgn.hidden = 8;
    mc.sync();
    ProbeTask task = make_probe_task(nodes, seed, mc.sdm.n_ops(), 4);
    std::mt19937_64 rng(mix_seed(seed, 77));
    const double dt = 0.05;

    ParamStore store;
    if (model == "sdm" || model == "padgn" || model == "tdm") sdm_init_params(store, mc.sdm, rng);
    if (model == "tdm" || model == "padgn") {
        tdm_init_params(store, mc.tdm, rng);
        store.fill_uniform("tdm.head.W", 0.3, rng);
    }
    if (model == "rgn") {
        rgn_init_params(store, mc.rgn, rng);
        store.fill_uniform("rgn.head.W", 0.3, rng);
    }

    LossClosure loss = [&](const ParamStore& s, GradMap* grads) {
        Tape tape;
        Var total;
        BoundParams bound;
        if (model == "sdm") {
            bound = bind_params(tape, s, grads != nullptr);
            auto aux = sdm_aux_losses(tape, bound, mc.sdm, task.ctx, task.frames, task.labels);
            total = aux[0];
            for (std::size_t k = 1; k < aux.size(); ++k) total = tape.add(total, aux[k]);
        } else if (model == "rgn") {
            bound = bind_params(tape, s, grads != nullptr);
            auto preds = rgn_rollout(tape, bound, mc.rgn, task.ctx, task.frames[0], nullptr, dt, 2);
            total = loss_main(tape, preds, {task.frames[1], task.frames[2]});
        } else if (model == "tdm") {
            // Spatial modules frozen: they are excluded from the report.
            ParamStore phi = subset_params(s, "sdm.");
            ParamStore theta = subset_params(s, "tdm.");
            BoundParams bp = bind_params(tape, phi, false);
            BoundParams bt = bind_params(tape, theta, grads != nullptr);
            auto preds = padgn_rollout(tape, bp, bt, mc.sdm, mc.tdm, task.ctx, task.frames[0],
                                       nullptr, dt, 3);
            total = loss_main(tape, preds, {task.frames[1], task.frames[2], task.frames[3]});
            if (grads) {
                tape.backward(total);
                *grads = collect_grads(tape, bt);
            }
            return tape.value(total).item();
        } else {  // padgn: composite loss over all parameters
            bound = bind_params(tape, s, grads != nullptr);
            auto preds = padgn_rollout(tape, bound, bound, mc.sdm, mc.tdm, task.ctx,
                                       task.frames[0], nullptr, dt, 2);
            total = loss_main(tape, preds, {task.frames[1], task.frames[2]});
            auto aux = sdm_aux_losses(tape, bound, mc.sdm, task.ctx, {task.frames[0]},
                                      {task.labels[0]});
            for (Var a : aux) total = tape.add(total, a);
        }
        if (grads) {
            tape.backward(total);
            *grads = collect_grads(tape, bound);
        }
        return tape.value(total).item();
    };
    return gradcheck(loss, store, 1e-5, tol);
}

}  // namespace

bool run_gradcheck(const std::string& model, int nodes, std::uint64_t seed, double tol,
                   std::string* report_out) {
    std::vector<std::string> models;
    if (model == "all") models = {"sdm", "tdm", "padgn", "rgn"};
    else models = {model};
    std::ostringstream os;
    bool pass = true;
    for (const std::string& m : models) {
        if (m != "sdm" && m != "tdm" && m != "padgn" && m != "rgn") {
            throw std::invalid_argument("gradcheck: unknown model '" + m + "'");
        }
        GradCheckReport report = gradcheck_model(m, nodes, seed, tol);
        os << "model " << m << " (" << report.entries.size() << " parameters)\n"
           << report.summary();
        pass = pass && report.all_pass;
    }
    if (report_out) *report_out = os.str();
    return pass;
}

// ---------------------------------------------------------------------------
// fdm
// ---------------------------------------------------------------------------

std::string run_fdm(const std::vector<double>& offsets, int order) {
    Stencil s = solve_coefficients(offsets, order);
    std::string out;
    for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
        if (i) out += " ";
        const double v = s.coeffs[i] == 0.0 ? 0.0 : s.coeffs[i];  // normalize -0
        out += fmt_g17(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

std::string run_pipeline(const RunConfig& cfg, const fs::path& out) {
    if (!cfg.test_suite) {
        throw std::invalid_argument("pipeline: config needs a test_suite section");
    }
    StagedDir staged(out);
    write_text(staged.path() / "config.json", cfg.to_json().dump(2) + "\n");

    RunConfig train_cfg = cfg;
    nlohmann::json manifest = run_generate(train_cfg, staged.path() / "suites" / "metatrain");
    RunConfig test_cfg = cfg;
    test_cfg.suite = *cfg.test_suite;
    run_generate(test_cfg, staged.path() / "suites" / "metatest");
    const fs::path train_suite = staged.path() / "suites" / "metatrain";
    const fs::path test_suite = staged.path() / "suites" / "metatest";

    std::vector<EvalRecord> all_records;
    auto append = [&all_records](const std::vector<EvalRecord>& r) {
        all_records.insert(all_records.end(), r.begin(), r.end());
    };

    // Meta variants.
    for (const std::string variant : {"modular", "maml"}) {
        RunConfig c = cfg;
        c.meta.variant = variant;
        const fs::path run_dir = staged.path() / "runs" / ("meta_" + variant);
        run_train(c, train_suite, run_dir);
        for (int shots : cfg.eval_shots) {
            EvalSummary s = run_evaluate(c, run_dir / "phi.ckpt", test_suite, shots,
                                         staged.path() / "evals" /
                                             ("meta_" + variant + "_" + std::to_string(shots)));
            append(s.records);
        }
    }
    // Weight-init baselines.
    for (const std::string kind : {"padgn", "rgn"}) {
        RunConfig c = cfg;
        c.meta.variant = "weight_init";
        c.scratch_model = kind;
        const fs::path run_dir = staged.path() / "runs" / ("weight_init_" + kind);
        run_train(c, train_suite, run_dir);
        for (int shots : cfg.eval_shots) {
            EvalSummary s = run_evaluate(c, run_dir / "model.ckpt", test_suite, shots,
                                         staged.path() / "evals" /
                                             ("weight_init_" + kind + "_" + std::to_string(shots)));
            append(s.records);
        }
    }
    // Scratch baselines (train directly on the test tasks).
    for (const std::string kind : {"padgn", "rgn"}) {
        for (int shots : cfg.eval_shots) {
            RunConfig c = cfg;
            c.meta.variant = "scratch";
            c.scratch_model = kind;
            const fs::path run_dir =
                staged.path() / "runs" / ("scratch_" + kind + "_" + std::to_string(shots));
            run_train(c, test_suite, run_dir, shots);
            std::ifstream in(run_dir / "metrics.csv");
            std::string line;
            std::getline(in, line);  // header
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream ls(line);
                EvalRecord r;
                std::string field;
                std::getline(ls, field, ',');
                r.task_id = std::stoi(field);
                std::getline(ls, field, ',');
                r.shots = std::stoi(field);
                std::getline(ls, r.method, ',');
                std::getline(ls, field, ',');
                r.test_mse = std::strtod(field.c_str(), nullptr);
                all_records.push_back(r);
            }
        }
    }

    write_metrics_csv(staged.path() / "metrics.csv", all_records);
    const std::string table = format_summary_table(all_records);
    write_text(staged.path() / "summary.txt", table);
    staged.commit();
    return table;
}

// ---------------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------------

void write_metrics_csv(const fs::path& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "task_id,shots,method,test_mse\n";
    for (const auto& r : records) {
        out << r.task_id << "," << r.shots << "," << r.method << "," << fmt_g17(r.test_mse)
            << "\n";
    }
}

std::string format_summary_table(const std::vector<EvalRecord>& records) {
    // mean MSE per (method, shots); methods as rows, shot counts as columns
    std::map<std::string, std::map<int, std::pair<double, int>>> cells;
    std::map<int, bool> shot_cols;
    for (const auto& r : records) {
        auto& cell = cells[r.method][r.shots];
        cell.first += r.test_mse;
        cell.second += 1;
        shot_cols[r.shots] = true;
    }
    std::ostringstream os;
    os << std::left << std::setw(22) << "method";
    for (const auto& [shots, _] : shot_cols) {
        os << std::right << std::setw(14) << (std::to_string(shots) + "-shot");
    }
    os << "\n";
    for (const auto& [method, row] : cells) {
        os << std::left << std::setw(22) << method;
        for (const auto& [shots, _] : shot_cols) {
            auto it = row.find(shots);
            if (it == row.end()) {
                os << std::right << std::setw(14) << "-";
            } else {
                std::ostringstream v;
                v << std::scientific << std::setprecision(3)
                  << it->second.first / it->second.second;
                os << std::right << std::setw(14) << v.str();
            }
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace metapde
