#pragma once

#include <random>
#include <string>
#include <vector>

#include "metapde/fdm_oracle.hpp"
#include "metapde/graph_sampling.hpp"
#include "metapde/param_store.hpp"
#include "metapde/tape.hpp"

namespace metapde {

/// Graph structure prepared for model passes: index arrays plus the constant
/// per-edge relative features [dx, dy, |d|].
struct GraphContext {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> src, dst;
    Tensor rel;  // [E,3]

    std::size_t n_edges() const { return src.size(); }
    static GraphContext from_graph(const SpatialGraph& graph);
};

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

/// Two-layer perceptron with tanh hidden activation. Parameters are
/// `prefix.W1/b1/W2/b2`; weights start uniform in +-1/sqrt(fan_in), biases at
/// zero, and optionally the output layer at zero.
void mlp_init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, std::mt19937_64& rng, bool zero_head = false);
Var mlp_forward(Tape& tape, const BoundParams& params, const std::string& prefix, Var x);

/// Two stacked GRU cells (`prefix.l1.*`, `prefix.l2.*`); the second layer's
/// hidden state is the output.
void gru2_init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
               std::mt19937_64& rng);
std::pair<Var, Var> gru2_forward(Tape& tape, const BoundParams& params, const std::string& prefix,
                                 Var x, Var h1, Var h2);

// ---------------------------------------------------------------------------
// spatial derivative modules (shared, task-independent)
// ---------------------------------------------------------------------------

struct SdmConfig {
    std::vector<GraphDerivOp> ops{GraphDerivOp::dx, GraphDerivOp::dy, GraphDerivOp::dxx,
                                  GraphDerivOp::dyy};
    std::size_t hidden = 64;

    std::size_t n_ops() const { return ops.size(); }
};

struct SdmOutput {
    std::vector<Var> u_hat;    // per op, [N,1]
    std::vector<Var> coeff_a;  // per op, [E,1]
    std::vector<Var> coeff_b;  // per op, [E,1]
};

/// One independent message-passing module per derivative operator
/// (edge block -> node block -> edge block); the final edge output is the
/// coefficient pair (a, b) combined as  u_hat_i = sum_e a_e (u_i - b_e u_j).
void sdm_init_params(ParamStore& store, const SdmConfig& cfg, std::mt19937_64& rng);
SdmOutput sdm_forward(Tape& tape, const BoundParams& phi, const SdmConfig& cfg,
                      const GraphContext& ctx, Var u);

/// Mean-squared auxiliary regression losses, one per operator, of SDM
/// estimates against derivative labels over the given frames.
std::vector<Var> sdm_aux_losses(Tape& tape, const BoundParams& phi, const SdmConfig& cfg,
                                const GraphContext& ctx, const std::vector<Tensor>& frames,
                                const std::vector<std::vector<Tensor>>& labels);

// ---------------------------------------------------------------------------
// recurrent graph networks (task-specific)
// ---------------------------------------------------------------------------

/// Two recurrent GN blocks; edge and node updates are 2-layer GRU cells and
/// a zero-initialized linear head maps node state to a scalar rate per node.
struct RecurrentGnConfig {
    std::string prefix = "tdm";
    std::size_t input_dim = 5;
    std::size_t hidden = 64;
};

struct RecurrentGnState {
    struct Block {
        Var edge_h1, edge_h2, node_h1, node_h2;
    };
    Block blocks[2];
};

void recurrent_gn_init(ParamStore& store, const RecurrentGnConfig& cfg, std::mt19937_64& rng);
RecurrentGnState recurrent_gn_initial_state(Tape& tape, const RecurrentGnConfig& cfg,
                                            std::size_t n_nodes, std::size_t n_edges);
/// One recurrent pass; returns the per-node rate [N,1] and advances `state`.
Var recurrent_gn_step(Tape& tape, const BoundParams& params, const RecurrentGnConfig& cfg,
                      const GraphContext& ctx, Var features, RecurrentGnState& state);

struct TdmConfig {
    std::size_t hidden = 64;
    std::size_t n_ops = 4;
    std::size_t n_extra = 0;

    std::size_t input_dim() const { return 1 + n_ops + n_extra; }
    RecurrentGnConfig gn() const { return {"tdm", input_dim(), hidden}; }
};

struct RgnConfig {
    std::size_t hidden = 73;
    std::size_t n_extra = 0;

    std::size_t input_dim() const { return 1 + n_extra; }
    RecurrentGnConfig gn() const { return {"rgn", input_dim(), hidden}; }
};

void tdm_init_params(ParamStore& store, const TdmConfig& cfg, std::mt19937_64& rng);
void rgn_init_params(ParamStore& store, const RgnConfig& cfg, std::mt19937_64& rng);

/// Forward-Euler step: u_next = u + u_dot * dt, exactly.
struct TdmStepResult {
    Var u_dot;
    Var u_next;
};
TdmStepResult tdm_step(Tape& tape, const BoundParams& theta, const TdmConfig& cfg,
                       const GraphContext& ctx, Var u, const std::vector<Var>& u_hat,
                       Var extra, double dt, RecurrentGnState& state);

// ---------------------------------------------------------------------------
// rollouts and losses
// ---------------------------------------------------------------------------

/// Autoregressive rollout: each predicted frame feeds the next step; the
/// spatial modules are re-applied to every intermediate prediction.
std::vector<Var> padgn_rollout(Tape& tape, const BoundParams& phi, const BoundParams& theta,
                               const SdmConfig& sdm_cfg, const TdmConfig& tdm_cfg,
                               const GraphContext& ctx, const Tensor& u0, const Tensor* extra,
                               double dt, int n_steps);

std::vector<Var> rgn_rollout(Tape& tape, const BoundParams& params, const RgnConfig& cfg,
                             const GraphContext& ctx, const Tensor& u0, const Tensor* extra,
                             double dt, int n_steps);

/// Mean squared error over all predictions and nodes (mean reduction).
Var loss_main(Tape& tape, const std::vector<Var>& predicted, const std::vector<Tensor>& truth);

}  // namespace metapde
