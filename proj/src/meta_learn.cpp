#include "metapde/meta_learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace metapde {

void MetaConfig::validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("meta config: alpha must be positive");
    // beta == 0 is allowed as the degenerate diagnostic mode (no inner step).
    if (beta < 0.0) throw std::invalid_argument("meta config: beta must be >= 0");
    if (batch_tasks < 1) throw std::invalid_argument("meta config: batch_tasks must be >= 1");
    if (inner_steps < 1) throw std::invalid_argument("meta config: inner_steps must be >= 1");
    if (epochs < 0) throw std::invalid_argument("meta config: epochs must be >= 0");
    if (aux_weight < 0.0) throw std::invalid_argument("meta config: aux_weight must be >= 0");
    if (adapt_epochs < 0) throw std::invalid_argument("meta config: adapt_epochs must be >= 0");
    if (variant != "modular" && variant != "maml" && variant != "scratch" &&
        variant != "weight_init") {
        throw std::invalid_argument("meta config: unknown variant '" + variant + "'");
    }
}

nlohmann::json MetaConfig::to_json() const {
    return nlohmann::json{{"alpha", alpha},
                          {"beta", beta},
                          {"batch_tasks", batch_tasks},
                          {"inner_steps", inner_steps},
                          {"epochs", epochs},
                          {"aux_weight", aux_weight},
                          {"variant", variant},
                          {"seed", seed},
                          {"outer_adam", outer_adam},
                          {"adapt_epochs", adapt_epochs},
                          {"finetune_phi", finetune_phi}};
}

MetaConfig MetaConfig::from_json(const nlohmann::json& j) {
    MetaConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "alpha") cfg.alpha = val.get<double>();
        else if (key == "beta") cfg.beta = val.get<double>();
        else if (key == "batch_tasks") cfg.batch_tasks = val.get<int>();
        else if (key == "inner_steps") cfg.inner_steps = val.get<int>();
        else if (key == "epochs") cfg.epochs = val.get<int>();
        else if (key == "aux_weight") cfg.aux_weight = val.get<double>();
        else if (key == "variant") cfg.variant = val.get<std::string>();
        else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
        else if (key == "outer_adam") cfg.outer_adam = val.get<bool>();
        else if (key == "adapt_epochs") cfg.adapt_epochs = val.get<int>();
        else if (key == "finetune_phi") cfg.finetune_phi = val.get<bool>();
        else throw std::invalid_argument("meta config: unknown key '" + key + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// generic engines
// ---------------------------------------------------------------------------

namespace {

std::vector<int> sample_batch(std::mt19937_64& rng, int n_tasks, int batch) {
    std::uniform_int_distribution<int> pick(0, n_tasks - 1);
    std::vector<int> out(batch);
    for (auto& b : out) b = pick(rng);
    return out;
}

}  // namespace

void meta_train_modular_loop(const std::vector<MetaObjective>& tasks, MetaState& state,
                             const MetaConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const AdamConfig outer{cfg.alpha};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> batch = sample_batch(rng, static_cast<int>(tasks.size()),
                                                    cfg.batch_tasks);
        GradMap delta;
        for (int ti : batch) {
            ParamStore& theta = state.thetas.at(ti);
            double train0 = 0.0;
            for (int s = 0; s < cfg.inner_steps; ++s) {
                GradMap dtheta;
                const double l = tasks[ti].train_loss(theta, state.phi, &dtheta, nullptr);
                if (s == 0) train0 = l;
                theta.sgd_step(dtheta, cfg.beta);
            }
            GradMap dphi;
            const auto ev = tasks[ti].outer_loss(theta, state.phi, nullptr, &dphi);
            add_grads(delta, dphi);
            state.history.push_back({state.epochs_done, ti, train0, ev.main, ev.aux});
        }
        if (cfg.outer_adam) state.phi.adam_step(delta, outer);
        else state.phi.sgd_step(delta, cfg.alpha);
        ++state.epochs_done;
    }
}

void meta_train_maml_loop(const std::vector<MetaObjective>& tasks, MetaState& state,
                          const MetaConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const AdamConfig outer{cfg.alpha};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> batch = sample_batch(rng, static_cast<int>(tasks.size()),
                                                    cfg.batch_tasks);
        GradMap delta;
        for (int ti : batch) {
            ParamStore& theta = state.thetas.at(ti);
            // Adapted copies; first-order treatment, so outer gradients are
            // taken at the adapted parameters and applied to the originals.
            ParamStore theta_ad = theta;
            ParamStore phi_ad = state.phi;
            double train0 = 0.0;
            for (int s = 0; s < cfg.inner_steps; ++s) {
                GradMap dtheta, dphi;
                const double l = tasks[ti].train_loss(theta_ad, phi_ad, &dtheta, &dphi);
                if (s == 0) train0 = l;
                theta_ad.sgd_step(dtheta, cfg.beta);
                phi_ad.sgd_step(dphi, cfg.beta);
            }
            GradMap dtheta2, dphi2;
            const auto ev = tasks[ti].outer_loss(theta_ad, phi_ad, &dtheta2, &dphi2);
            if (cfg.outer_adam) theta.adam_step(dtheta2, AdamConfig{cfg.alpha});
            else theta.sgd_step(dtheta2, cfg.alpha);
            add_grads(delta, dphi2);
            state.history.push_back({state.epochs_done, ti, train0, ev.main, ev.aux});
        }
        if (cfg.outer_adam) state.phi.adam_step(delta, outer);
        else state.phi.sgd_step(delta, cfg.alpha);
        ++state.epochs_done;
    }
}

// ---------------------------------------------------------------------------
// model glue
// ---------------------------------------------------------------------------

namespace {

std::size_t aux_channel(GraphDerivOp op) {
    switch (op) {
        case GraphDerivOp::dx: return 0;
        case GraphDerivOp::dy: return 1;
        case GraphDerivOp::dxx: return 2;
        default: return 3;
    }
}

}  // namespace

TaskTensors prepare_task(const TaskDataset& task, const SdmConfig& sdm_cfg) {
    TaskTensors t;
    t.ctx = GraphContext::from_graph(task.graph);
    t.dt = task.dt;
    t.split_k = task.split_k;
    const std::size_t n = static_cast<std::size_t>(task.n_nodes());
    for (int f = 0; f < task.n_frames(); ++f) {
        Tensor u({n, 1});
        for (std::size_t i = 0; i < n; ++i) u[i] = task.frames[f][i];
        t.frames.push_back(std::move(u));
    }
    if (task.has_aux()) {
        for (int f = 0; f < task.n_frames(); ++f) {
            std::vector<Tensor> labels;
            for (GraphDerivOp op : sdm_cfg.ops) {
                Tensor lab({n, 1});
                const std::size_t ch = aux_channel(op);
                for (std::size_t i = 0; i < n; ++i) lab[i] = task.aux[f][i][ch];
                labels.push_back(std::move(lab));
            }
            t.aux_labels.push_back(std::move(labels));
        }
    }
    return t;
}

MetaObjective make_padgn_objective(const TaskTensors& task, const ModelConfig& mc,
                                   const MetaConfig& cfg) {
    if (task.split_k < 2 || task.split_k >= task.n_frames()) {
        throw std::invalid_argument("objective: split_k must lie in [2, T-1] to supervise a step");
    }
    MetaObjective obj;
    obj.train_loss = [&task, mc](const ParamStore& theta, const ParamStore& phi, GradMap* dtheta,
                                 GradMap* dphi) {
        Tape tape;
        BoundParams bt = bind_params(tape, theta, dtheta != nullptr);
        BoundParams bp = bind_params(tape, phi, dphi != nullptr);
        const int k = task.split_k;
        auto preds = padgn_rollout(tape, bp, bt, mc.sdm, mc.tdm, task.ctx, task.frames[0],
                                   nullptr, task.dt, k - 1);
        const std::vector<Tensor> truth(task.frames.begin() + 1, task.frames.begin() + k);
        Var l = loss_main(tape, preds, truth);
        if (dtheta || dphi) {
            tape.backward(l);
            if (dtheta) *dtheta = collect_grads(tape, bt);
            if (dphi) *dphi = collect_grads(tape, bp);
        }
        return tape.value(l).item();
    };
    const double w = cfg.aux_weight;
    obj.outer_loss = [&task, mc, w](const ParamStore& theta, const ParamStore& phi,
                                    GradMap* dtheta, GradMap* dphi) {
        if (!task.has_aux()) {
            throw std::invalid_argument("objective: task has no auxiliary derivative labels");
        }
        Tape tape;
        BoundParams bt = bind_params(tape, theta, dtheta != nullptr);
        BoundParams bp = bind_params(tape, phi, dphi != nullptr);
        const int k = task.split_k;
        const int T = task.n_frames();
        auto preds = padgn_rollout(tape, bp, bt, mc.sdm, mc.tdm, task.ctx, task.frames[0],
                                   nullptr, task.dt, T - 1);
        const std::vector<Var> test_preds(preds.begin() + (k - 1), preds.end());
        const std::vector<Tensor> truth(task.frames.begin() + k, task.frames.end());
        Var main = loss_main(tape, test_preds, truth);
        const std::vector<Tensor> aux_frames(task.frames.begin() + k, task.frames.end());
        const std::vector<std::vector<Tensor>> aux_labels(task.aux_labels.begin() + k,
                                                          task.aux_labels.end());
        std::vector<Var> aux = sdm_aux_losses(tape, bp, mc.sdm, task.ctx, aux_frames, aux_labels);
        Var total = main;
        for (Var a : aux) total = tape.add(total, tape.scale(a, w));
        if (dtheta || dphi) {
            tape.backward(total);
            if (dtheta) *dtheta = collect_grads(tape, bt);
            if (dphi) *dphi = collect_grads(tape, bp);
        }
        MetaObjective::OuterEval ev;
        ev.main = tape.value(main).item();
        for (Var a : aux) ev.aux.push_back(tape.value(a).item());
        return ev;
    };
    return obj;
}

ParamStore init_phi(const ModelConfig& mc, std::uint64_t seed) {
    ParamStore store;
    std::mt19937_64 rng(seed);
    sdm_init_params(store, mc.sdm, rng);
    return store;
}

ParamStore init_theta(const ModelConfig& mc, std::uint64_t seed) {
    ParamStore store;
    std::mt19937_64 rng(seed);
    tdm_init_params(store, mc.tdm, rng);
    return store;
}

ParamStore init_rgn(const ModelConfig& mc, std::uint64_t seed) {
    ParamStore store;
    std::mt19937_64 rng(seed);
    rgn_init_params(store, mc.rgn, rng);
    return store;
}

MetaState meta_train(const std::vector<TaskTensors>& tasks, const ModelConfig& mc,
                     const MetaConfig& cfg) {
    cfg.validate();
    if (cfg.variant != "modular" && cfg.variant != "maml") {
        throw std::invalid_argument("meta_train: variant '" + cfg.variant +
                                    "' is not a meta-training variant");
    }
    if (tasks.empty()) throw std::invalid_argument("meta_train: no tasks");
    for (const auto& t : tasks) {
        if (!t.has_aux()) {
            throw std::invalid_argument(
                "meta_train: every task needs auxiliary derivative labels");
        }
    }
    MetaState state;
    state.phi = init_phi(mc, mix_seed(cfg.seed, 9001));
    std::vector<MetaObjective> objectives;
    objectives.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        state.thetas.emplace(static_cast<int>(i),
                             init_theta(mc, mix_seed(cfg.seed, 9100 + i)));
        objectives.push_back(make_padgn_objective(tasks[i], mc, cfg));
    }
    if (cfg.variant == "modular") meta_train_modular_loop(objectives, state, cfg);
    else meta_train_maml_loop(objectives, state, cfg);
    return state;
}

// ---------------------------------------------------------------------------
// adaptation
// ---------------------------------------------------------------------------

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "padgn") return ModelKind::padgn;
    if (s == "rgn") return ModelKind::rgn;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

std::string model_kind_name(ModelKind kind) {
    return kind == ModelKind::padgn ? "padgn" : "rgn";
}

AdaptResult adapt_and_eval(const TaskTensors& task, const ModelConfig& mc,
                           const AdaptOptions& opt, const ParamStore* phi_init,
                           const ParamStore* theta_init) {
    const int T = task.n_frames();
    const int k = opt.shots > 0 ? opt.shots : task.split_k;
    if (k < 2 || k >= T) {
        throw std::invalid_argument("adapt: shots=" + std::to_string(k) +
                                    " must lie in [2, T-1] with T=" + std::to_string(T));
    }
    const bool padgn = opt.model == ModelKind::padgn;
    ParamStore phi;
    if (padgn) phi = phi_init ? *phi_init : init_phi(mc, mix_seed(opt.init_seed, 11));
    ParamStore theta = theta_init ? *theta_init
                       : padgn    ? init_theta(mc, mix_seed(opt.init_seed, 22))
                                  : init_rgn(mc, mix_seed(opt.init_seed, 22));

    const std::vector<Tensor> train_truth(task.frames.begin() + 1, task.frames.begin() + k);
    auto train_pass = [&](GradMap* dtheta, GradMap* dphi) {
        Tape tape;
        BoundParams bt = bind_params(tape, theta, dtheta != nullptr);
        BoundParams bp;
        std::vector<Var> preds;
        if (padgn) {
            bp = bind_params(tape, phi, dphi != nullptr);
            preds = padgn_rollout(tape, bp, bt, mc.sdm, mc.tdm, task.ctx, task.frames[0], nullptr,
                                  task.dt, k - 1);
        } else {
            preds = rgn_rollout(tape, bt, mc.rgn, task.ctx, task.frames[0], nullptr, task.dt,
                                k - 1);
        }
        Var l = loss_main(tape, preds, train_truth);
        if (dtheta || dphi) {
            tape.backward(l);
            if (dtheta) *dtheta = collect_grads(tape, bt);
            if (dphi) *dphi = collect_grads(tape, bp);
        }
        return tape.value(l).item();
    };

    AdaptResult result;
    ParamStore best_theta = theta;
    ParamStore best_phi = phi;
    double best = std::numeric_limits<double>::infinity();
    const AdamConfig adam{opt.lr};
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        GradMap dtheta, dphi;
        const double l = train_pass(&dtheta, opt.train_phi && padgn ? &dphi : nullptr);
        result.train_curve.push_back(l);
        if (l < best) {
            best = l;
            best_theta = theta;
            best_phi = phi;
        }
        theta.adam_step(dtheta, adam);
        if (opt.train_phi && padgn) phi.adam_step(dphi, adam);
    }
    // The parameters after the final step also compete for best-on-train.
    const double l_final = train_pass(nullptr, nullptr);
    result.train_curve.push_back(l_final);
    if (l_final < best) {
        best = l_final;
        best_theta = theta;
        best_phi = phi;
    }

    // Held-out evaluation with the selected parameters.
    Tape tape;
    BoundParams bt = bind_params(tape, best_theta, false);
    std::vector<Var> preds;
    if (padgn) {
        BoundParams bp = bind_params(tape, best_phi, false);
        preds = padgn_rollout(tape, bp, bt, mc.sdm, mc.tdm, task.ctx, task.frames[0], nullptr,
                              task.dt, T - 1);
    } else {
        preds = rgn_rollout(tape, bt, mc.rgn, task.ctx, task.frames[0], nullptr, task.dt, T - 1);
    }
    const std::vector<Var> test_preds(preds.begin() + (k - 1), preds.end());
    const std::vector<Tensor> truth(task.frames.begin() + k, task.frames.end());
    result.test_mse = tape.value(loss_main(tape, test_preds, truth)).item();
    result.theta = std::move(best_theta);
    result.phi = std::move(best_phi);
    return result;
}

AdaptResult meta_test(const ParamStore& phi, const TaskTensors& task, const ModelConfig& mc,
                      const MetaConfig& cfg, std::uint64_t init_seed) {
    AdaptOptions opt;
    opt.model = ModelKind::padgn;
    opt.train_phi = cfg.finetune_phi;
    opt.epochs = cfg.adapt_epochs;
    opt.lr = cfg.alpha;
    opt.init_seed = init_seed;
    return adapt_and_eval(task, mc, opt, &phi, nullptr);
}

AdaptResult baseline_scratch(const TaskTensors& task, ModelKind kind, const ModelConfig& mc,
                             const MetaConfig& cfg, std::uint64_t init_seed) {
    AdaptOptions opt;
    opt.model = kind;
    opt.train_phi = true;  // nothing is frozen when training from scratch
    opt.epochs = cfg.adapt_epochs;
    opt.lr = cfg.alpha;
    opt.init_seed = init_seed;
    return adapt_and_eval(task, mc, opt, nullptr, nullptr);
}

AdaptResult baseline_weight_init(const ParamStore& pretrained, const TaskTensors& task,
                                 ModelKind kind, const ModelConfig& mc, const MetaConfig& cfg,
                                 std::uint64_t init_seed) {
    if (pretrained.size() == 0) {
        throw std::invalid_argument("weight_init: pretrained checkpoint is empty");
    }
    AdaptOptions opt;
    opt.model = kind;
    opt.train_phi = true;
    opt.epochs = cfg.adapt_epochs;
    opt.lr = cfg.alpha;
    opt.init_seed = init_seed;
    if (kind == ModelKind::padgn) {
        ParamStore phi = subset_params(pretrained, "sdm.");
        ParamStore theta = subset_params(pretrained, "tdm.");
        if (phi.size() == 0 || theta.size() == 0) {
            throw std::invalid_argument("weight_init: checkpoint lacks sdm/tdm parameters");
        }
        return adapt_and_eval(task, mc, opt, &phi, &theta);
    }
    ParamStore theta = subset_params(pretrained, "rgn.");
    if (theta.size() == 0) {
        throw std::invalid_argument("weight_init: checkpoint lacks rgn parameters");
    }
    return adapt_and_eval(task, mc, opt, nullptr, &theta);
}

ParamStore pretrain_joint(const std::vector<TaskTensors>& tasks, ModelKind kind,
                          const ModelConfig& mc, const MetaConfig& cfg,
                          std::vector<double>* loss_curve) {
    cfg.validate();
    if (tasks.empty()) throw std::invalid_argument("pretrain: no tasks");
    ParamStore params;
    if (kind == ModelKind::padgn) {
        params = init_phi(mc, mix_seed(cfg.seed, 31));
        merge_params(params, init_theta(mc, mix_seed(cfg.seed, 32)));
    } else {
        params = init_rgn(mc, mix_seed(cfg.seed, 33));
    }
    std::mt19937_64 rng(cfg.seed);
    const AdamConfig adam{cfg.alpha};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const int ti = sample_batch(rng, static_cast<int>(tasks.size()), 1)[0];
        const TaskTensors& task = tasks[ti];
        Tape tape;
        BoundParams bound = bind_params(tape, params, true);
        const int T = task.n_frames();
        std::vector<Var> preds;
        if (kind == ModelKind::padgn) {
            preds = padgn_rollout(tape, bound, bound, mc.sdm, mc.tdm, task.ctx, task.frames[0],
                                  nullptr, task.dt, T - 1);
        } else {
            preds = rgn_rollout(tape, bound, mc.rgn, task.ctx, task.frames[0], nullptr, task.dt,
                                T - 1);
        }
        const std::vector<Tensor> truth(task.frames.begin() + 1, task.frames.end());
        Var total = loss_main(tape, preds, truth);
        if (kind == ModelKind::padgn) {
            if (!task.has_aux()) {
                throw std::invalid_argument("pretrain: task has no auxiliary labels");
            }
            std::vector<Var> aux =
                sdm_aux_losses(tape, bound, mc.sdm, task.ctx, task.frames, task.aux_labels);
            for (Var a : aux) total = tape.add(total, tape.scale(a, cfg.aux_weight));
        }
        tape.backward(total);
        GradMap grads = collect_grads(tape, bound);
        if (loss_curve) loss_curve->push_back(tape.value(total).item());
        params.adam_step(grads, adam);
    }
    return params;
}

std::vector<double> evaluate_aux_mse(const ParamStore& phi, const TaskTensors& task,
                                     const SdmConfig& sdm_cfg, int from_frame, int to_frame) {
    if (!task.has_aux()) throw std::invalid_argument("aux eval: task has no auxiliary labels");
    if (from_frame < 0 || to_frame > task.n_frames() || from_frame >= to_frame) {
        throw std::invalid_argument("aux eval: bad frame range");
    }
    Tape tape;
    BoundParams bp = bind_params(tape, phi, false);
    const std::vector<Tensor> frames(task.frames.begin() + from_frame,
                                     task.frames.begin() + to_frame);
    const std::vector<std::vector<Tensor>> labels(task.aux_labels.begin() + from_frame,
                                                  task.aux_labels.begin() + to_frame);
    std::vector<Var> aux = sdm_aux_losses(tape, bp, sdm_cfg, task.ctx, frames, labels);
    std::vector<double> out;
    for (Var a : aux) out.push_back(tape.value(a).item());
    return out;
}

}  // namespace metapde
