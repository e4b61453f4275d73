#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "metapde/gn_models.hpp"

namespace metapde {

struct MetaConfig {
    double alpha = 1e-3;  // outer learning rate
    double beta = 1e-3;   // inner learning rate
    int batch_tasks = 1;
    int inner_steps = 1;
    int epochs = 200;
    double aux_weight = 1.0;
    std::string variant = "modular";  // modular | maml | scratch | weight_init
    std::uint64_t seed = 0;
    // Outer updates through Adam on the accumulated gradient (the training
    // settings used everywhere); false applies the literal rule
    // phi <- phi - alpha * delta.
    bool outer_adam = true;
    int adapt_epochs = 300;  // budget for per-task adaptation
    bool finetune_phi = false;

    void validate() const;
    nlohmann::json to_json() const;
    static MetaConfig from_json(const nlohmann::json& j);
};

/// Per-task loss hooks driven by the meta engines. Gradients are written
/// only into the maps that are non-null; outer gradients are of
/// main + aux_weight * sum(aux).
struct MetaObjective {
    std::function<double(const ParamStore& theta, const ParamStore& phi, GradMap* dtheta,
                         GradMap* dphi)>
        train_loss;
    struct OuterEval {
        double main = 0.0;
        std::vector<double> aux;
    };
    std::function<OuterEval(const ParamStore& theta, const ParamStore& phi, GradMap* dtheta,
                            GradMap* dphi)>
        outer_loss;
};

struct EpochRecord {
    int epoch = 0;
    int task_id = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    std::vector<double> aux;
};

struct MetaState {
    ParamStore phi;
    std::map<int, ParamStore> thetas;
    int epochs_done = 0;
    std::vector<EpochRecord> history;
};

/// Generic engines over objective hooks; `state` must already hold phi and
/// one theta per task id.
void meta_train_modular_loop(const std::vector<MetaObjective>& tasks, MetaState& state,
                             const MetaConfig& cfg);
void meta_train_maml_loop(const std::vector<MetaObjective>& tasks, MetaState& state,
                          const MetaConfig& cfg);

// ---------------------------------------------------------------------------
// model glue
// ---------------------------------------------------------------------------

struct ModelConfig {
    SdmConfig sdm;
    TdmConfig tdm;
    RgnConfig rgn;

    void sync() { tdm.n_ops = sdm.ops.size(); }
};

/// Task data converted to model-ready tensors.
struct TaskTensors {
    GraphContext ctx;
    std::vector<Tensor> frames;                   // [T] of [N,1]
    std::vector<std::vector<Tensor>> aux_labels;  // [T][K] of [N,1]; empty if absent
    double dt = 0.0;
    int split_k = 5;

    int n_frames() const { return static_cast<int>(frames.size()); }
    bool has_aux() const { return !aux_labels.empty(); }
};

TaskTensors prepare_task(const TaskDataset& task, const SdmConfig& sdm_cfg);

/// Objective hooks for one PA-DGN task: train loss on the first split_k
/// frames, outer loss on the remaining frames plus auxiliary regression.
MetaObjective make_padgn_objective(const TaskTensors& task, const ModelConfig& mc,
                                   const MetaConfig& cfg);

/// Meta-training over a suite (dispatches on cfg.variant modular|maml).
MetaState meta_train(const std::vector<TaskTensors>& tasks, const ModelConfig& mc,
                     const MetaConfig& cfg);

// ---------------------------------------------------------------------------
// adaptation and baselines
// ---------------------------------------------------------------------------

enum class ModelKind { padgn, rgn };
ModelKind model_kind_from_string(const std::string& s);
std::string model_kind_name(ModelKind kind);

struct AdaptOptions {
    ModelKind model = ModelKind::padgn;
    bool train_phi = false;  // fine-tune the spatial modules during adaptation
    int epochs = 300;
    double lr = 1e-3;
    std::uint64_t init_seed = 0;
    int shots = 0;  // override the task split when > 0
};

struct AdaptResult {
    ParamStore phi;    // spatial modules actually used (copy)
    ParamStore theta;  // adapted task-specific parameters, best-on-train
    double test_mse = 0.0;
    std::vector<double> train_curve;  // per-epoch training loss
};

/// Single adaptation/evaluation path shared by meta-test and the baselines:
/// train on the first k frames, keep the best-on-train parameters, report
/// the rollout MSE over the held-out frames.
AdaptResult adapt_and_eval(const TaskTensors& task, const ModelConfig& mc,
                           const AdaptOptions& opt, const ParamStore* phi_init,
                           const ParamStore* theta_init);

/// Meta-test: frozen (or fine-tuned) phi, fresh theta.
AdaptResult meta_test(const ParamStore& phi, const TaskTensors& task, const ModelConfig& mc,
                      const MetaConfig& cfg, std::uint64_t init_seed);

/// Train-from-scratch baseline on one task.
AdaptResult baseline_scratch(const TaskTensors& task, ModelKind kind, const ModelConfig& mc,
                             const MetaConfig& cfg, std::uint64_t init_seed);

/// Weight-init baseline: start from a jointly pretrained checkpoint.
AdaptResult baseline_weight_init(const ParamStore& pretrained, const TaskTensors& task,
                                 ModelKind kind, const ModelConfig& mc, const MetaConfig& cfg,
                                 std::uint64_t init_seed);

/// Joint multi-task pretraining (main + aux losses, no inner/outer split);
/// returns one parameter store holding the whole model.
ParamStore pretrain_joint(const std::vector<TaskTensors>& tasks, ModelKind kind,
                          const ModelConfig& mc, const MetaConfig& cfg,
                          std::vector<double>* loss_curve = nullptr);

/// Mean auxiliary MSE per operator of a (frozen) phi over the given frame
/// range of one task.
std::vector<double> evaluate_aux_mse(const ParamStore& phi, const TaskTensors& task,
                                     const SdmConfig& sdm_cfg, int from_frame, int to_frame);

/// Fresh parameter stores.
ParamStore init_phi(const ModelConfig& mc, std::uint64_t seed);
ParamStore init_theta(const ModelConfig& mc, std::uint64_t seed);
ParamStore init_rgn(const ModelConfig& mc, std::uint64_t seed);

}  // namespace metapde
