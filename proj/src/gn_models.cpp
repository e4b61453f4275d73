#include "metapde/gn_models.hpp"

#include <cmath>
#include <stdexcept>

namespace metapde {

GraphContext GraphContext::from_graph(const SpatialGraph& graph) {
    GraphContext ctx;
    ctx.n_nodes = static_cast<std::size_t>(graph.n_nodes());
    ctx.src.reserve(graph.edges.size());
    ctx.dst.reserve(graph.edges.size());
    ctx.rel = Tensor({graph.edges.size(), 3});
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        const auto [s, d] = graph.edges[e];
        ctx.src.push_back(static_cast<std::size_t>(s));
        ctx.dst.push_back(static_cast<std::size_t>(d));
        const double dx = graph.nodes[d].x - graph.nodes[s].x;
        const double dy = graph.nodes[d].y - graph.nodes[s].y;
        ctx.rel.at(e, 0) = dx;
        ctx.rel.at(e, 1) = dy;
        ctx.rel.at(e, 2) = std::sqrt(dx * dx + dy * dy);
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// perceptron
// ---------------------------------------------------------------------------

void mlp_init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, std::mt19937_64& rng, bool zero_head) {
    store.create(prefix + ".W1", {in, hidden});
    store.create(prefix + ".b1", {hidden});
    store.create(prefix + ".W2", {hidden, out});
    store.create(prefix + ".b2", {out});
    store.fill_uniform(prefix + ".W1", 1.0 / std::sqrt(static_cast<double>(in)), rng);
    if (!zero_head) {
        store.fill_uniform(prefix + ".W2", 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    }
}

Var mlp_forward(Tape& tape, const BoundParams& params, const std::string& prefix, Var x) {
    Var h = tape.tanh_op(
        tape.add_bias(tape.matmul(x, params.at(prefix + ".W1")), params.at(prefix + ".b1")));
    return tape.add_bias(tape.matmul(h, params.at(prefix + ".W2")), params.at(prefix + ".b2"));
}

// ---------------------------------------------------------------------------
// gated recurrent cells
// ---------------------------------------------------------------------------

namespace {

void gru_cell_init(ParamStore& store, const std::string& prefix, std::size_t in,
                   std::size_t hidden, std::mt19937_64& rng) {
    const double bx = 1.0 / std::sqrt(static_cast<double>(in));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (const char* gate : {"z", "r", "n"}) {
        store.create(prefix + ".Wx" + gate, {in, hidden});
        store.create(prefix + ".Wh" + gate, {hidden, hidden});
        store.create(prefix + ".b" + gate, {hidden});
        store.fill_uniform(prefix + ".Wx" + gate, bx, rng);
        store.fill_uniform(prefix + ".Wh" + gate, bh, rng);
    }
}

Var gru_cell_forward(Tape& tape, const BoundParams& p, const std::string& prefix, Var x, Var h) {
    auto gate = [&](const char* g) {
        return tape.add_bias(
            tape.add(tape.matmul(x, p.at(prefix + ".Wx" + g)), tape.matmul(h, p.at(prefix + ".Wh" + g))),
            p.at(prefix + ".b" + g));
    };
    Var z = tape.sigmoid(gate("z"));
    Var r = tape.sigmoid(gate("r"));
    Var n = tape.tanh_op(tape.add_bias(
        tape.add(tape.matmul(x, p.at(prefix + ".Wxn")),
                 tape.matmul(tape.mul(r, h), p.at(prefix + ".Whn"))),
        p.at(prefix + ".bn")));
    Var one = tape.constant_scalar(1.0);
    return tape.add(tape.mul(tape.sub(one, z), n), tape.mul(z, h));
}

}  // namespace

void gru2_init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
               std::mt19937_64& rng) {
    gru_cell_init(store, prefix + ".l1", in, hidden, rng);
    gru_cell_init(store, prefix + ".l2", hidden, hidden, rng);
}

std::pair<Var, Var> gru2_forward(Tape& tape, const BoundParams& params, const std::string& prefix,
                                 Var x, Var h1, Var h2) {
    Var h1n = gru_cell_forward(tape, params, prefix + ".l1", x, h1);
    Var h2n = gru_cell_forward(tape, params, prefix + ".l2", h1n, h2);
    return {h1n, h2n};
}

// ---------------------------------------------------------------------------
// spatial derivative modules
// ---------------------------------------------------------------------------

void sdm_init_params(ParamStore& store, const SdmConfig& cfg, std::mt19937_64& rng) {
    const std::size_t H = cfg.hidden;
    for (GraphDerivOp op : cfg.ops) {
        const std::string p = "sdm." + deriv_op_name(op);
        mlp_init(store, p + ".edge1", 5, H, H, rng);           // [u_i, u_j, dx, dy, |d|]
        mlp_init(store, p + ".node", 1 + H, H, H, rng);        // [u_i, mean edge latent]
        mlp_init(store, p + ".edge2", 3 * H + 3, H, 2, rng);   // latents + relative coords
    }
}

SdmOutput sdm_forward(Tape& tape, const BoundParams& phi, const SdmConfig& cfg,
                      const GraphContext& ctx, Var u) {
    const Tensor& uv = tape.value(u);
    if (uv.rank() != 2 || uv.rows() != ctx.n_nodes || uv.cols() != 1) {
        throw std::invalid_argument("sdm: signal shape " + uv.shape_str() + " does not match " +
                                    std::to_string(ctx.n_nodes) + " nodes");
    }
    Var rel = tape.constant(ctx.rel);
    Var u_src = tape.gather_rows(u, ctx.src);
    Var u_dst = tape.gather_rows(u, ctx.dst);
    Var edge_in = tape.concat_cols({u_src, u_dst, rel});

    SdmOutput out;
    for (GraphDerivOp op : cfg.ops) {
        const std::string p = "sdm." + deriv_op_name(op);
        Var h_e = mlp_forward(tape, phi, p + ".edge1", edge_in);
        Var agg = tape.scatter_mean_rows(h_e, ctx.src, ctx.n_nodes);
        Var h_n = mlp_forward(tape, phi, p + ".node", tape.concat_cols({u, agg}));
        Var h_src = tape.gather_rows(h_n, ctx.src);
        Var h_dst = tape.gather_rows(h_n, ctx.dst);
        Var ab = mlp_forward(tape, phi, p + ".edge2", tape.concat_cols({h_src, h_dst, h_e, rel}));
        Var a = tape.slice_cols(ab, 0, 1);
        Var b = tape.slice_cols(ab, 1, 2);
        Var msg = tape.mul(a, tape.sub(u_src, tape.mul(b, u_dst)));
        out.u_hat.push_back(tape.scatter_sum_rows(msg, ctx.src, ctx.n_nodes));
        out.coeff_a.push_back(a);
        out.coeff_b.push_back(b);
    }
    return out;
}

std::vector<Var> sdm_aux_losses(Tape& tape, const BoundParams& phi, const SdmConfig& cfg,
                                const GraphContext& ctx, const std::vector<Tensor>& frames,
                                const std::vector<std::vector<Tensor>>& labels) {
    if (frames.empty() || labels.size() != frames.size()) {
        throw std::invalid_argument("sdm aux: frames and labels must align and be non-empty");
    }
    std::vector<Var> sums(cfg.n_ops());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (labels[f].size() != cfg.n_ops()) {
            throw std::invalid_argument("sdm aux: label channel count does not match operators");
        }
        SdmOutput out = sdm_forward(tape, phi, cfg, ctx, tape.constant(frames[f]));
        for (std::size_t k = 0; k < cfg.n_ops(); ++k) {
            Var diff = tape.sub(out.u_hat[k], tape.constant(labels[f][k]));
            Var sq = tape.sum(tape.mul(diff, diff));
            sums[k] = sums[k].valid() ? tape.add(sums[k], sq) : sq;
        }
    }
    const double inv = 1.0 / (static_cast<double>(frames.size()) * ctx.n_nodes);
    for (auto& s : sums) s = tape.scale(s, inv);
    return sums;
}

// ---------------------------------------------------------------------------
// recurrent graph networks
// ---------------------------------------------------------------------------

void recurrent_gn_init(ParamStore& store, const RecurrentGnConfig& cfg, std::mt19937_64& rng) {
    const std::size_t H = cfg.hidden;
    gru2_init(store, cfg.prefix + ".b1.edge", 2 * cfg.input_dim, H, rng);
    gru2_init(store, cfg.prefix + ".b1.node", cfg.input_dim + H, H, rng);
    gru2_init(store, cfg.prefix + ".b2.edge", 2 * H, H, rng);
    gru2_init(store, cfg.prefix + ".b2.node", 2 * H, H, rng);
    // Zero-initialized head: rollouts start from the identity map.
    store.create(cfg.prefix + ".head.W", {H, 1});
    store.create(cfg.prefix + ".head.b", {1});
}

RecurrentGnState recurrent_gn_initial_state(Tape& tape, const RecurrentGnConfig& cfg,
                                            std::size_t n_nodes, std::size_t n_edges) {
    RecurrentGnState st;
    for (auto& block : st.blocks) {
        block.edge_h1 = tape.constant(Tensor({n_edges, cfg.hidden}));
        block.edge_h2 = tape.constant(Tensor({n_edges, cfg.hidden}));
        block.node_h1 = tape.constant(Tensor({n_nodes, cfg.hidden}));
        block.node_h2 = tape.constant(Tensor({n_nodes, cfg.hidden}));
    }
    return st;
}

Var recurrent_gn_step(Tape& tape, const BoundParams& params, const RecurrentGnConfig& cfg,
                      const GraphContext& ctx, Var features, RecurrentGnState& state) {
    const Tensor& fv = tape.value(features);
    if (fv.rank() != 2 || fv.rows() != ctx.n_nodes || fv.cols() != cfg.input_dim) {
        throw std::invalid_argument("recurrent gn: feature shape " + fv.shape_str() +
                                    " does not match input dim " + std::to_string(cfg.input_dim));
    }
    Var v = features;
    for (int b = 0; b < 2; ++b) {
        auto& block = state.blocks[b];
        const std::string bp = cfg.prefix + (b == 0 ? ".b1" : ".b2");
        Var x_e = tape.concat_cols({tape.gather_rows(v, ctx.src), tape.gather_rows(v, ctx.dst)});
        std::tie(block.edge_h1, block.edge_h2) =
            gru2_forward(tape, params, bp + ".edge", x_e, block.edge_h1, block.edge_h2);
        Var msg = tape.scatter_mean_rows(block.edge_h2, ctx.src, ctx.n_nodes);
        Var x_n = tape.concat_cols({v, msg});
        std::tie(block.node_h1, block.node_h2) =
            gru2_forward(tape, params, bp + ".node", x_n, block.node_h1, block.node_h2);
        v = block.node_h2;
    }
    return tape.add_bias(tape.matmul(v, params.at(cfg.prefix + ".head.W")),
                         params.at(cfg.prefix + ".head.b"));
}

void tdm_init_params(ParamStore& store, const TdmConfig& cfg, std::mt19937_64& rng) {
    recurrent_gn_init(store, cfg.gn(), rng);
}

void rgn_init_params(ParamStore& store, const RgnConfig& cfg, std::mt19937_64& rng) {
    recurrent_gn_init(store, cfg.gn(), rng);
}

TdmStepResult tdm_step(Tape& tape, const BoundParams& theta, const TdmConfig& cfg,
                       const GraphContext& ctx, Var u, const std::vector<Var>& u_hat, Var extra,
                       double dt, RecurrentGnState& state) {
    if (dt <= 0.0) throw std::invalid_argument("tdm: time step must be positive");
    if (u_hat.size() != cfg.n_ops) {
        throw std::invalid_argument("tdm: got " + std::to_string(u_hat.size()) +
                                    " derivative channels, configured for " +
                                    std::to_string(cfg.n_ops));
    }
    std::vector<Var> parts{u};
    parts.insert(parts.end(), u_hat.begin(), u_hat.end());
    if (cfg.n_extra > 0) parts.push_back(extra);
    Var features = tape.concat_cols(parts);
    TdmStepResult res;
    res.u_dot = recurrent_gn_step(tape, theta, cfg.gn(), ctx, features, state);
    res.u_next = tape.add(u, tape.scale(res.u_dot, dt));
    return res;
}

// ---------------------------------------------------------------------------
// rollouts
// ---------------------------------------------------------------------------

std::vector<Var> padgn_rollout(Tape& tape, const BoundParams& phi, const BoundParams& theta,
                               const SdmConfig& sdm_cfg, const TdmConfig& tdm_cfg,
                               const GraphContext& ctx, const Tensor& u0, const Tensor* extra,
                               double dt, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("rollout: n_steps must be >= 1");
    Var extra_var;
    if (tdm_cfg.n_extra > 0) {
        if (!extra) throw std::invalid_argument("rollout: extra features configured but missing");
        extra_var = tape.constant(*extra);
    }
    RecurrentGnState state = recurrent_gn_initial_state(tape, tdm_cfg.gn(), ctx.n_nodes, ctx.n_edges());
    Var u = tape.constant(u0);
    std::vector<Var> preds;
    preds.reserve(n_steps);
    for (int s = 0; s < n_steps; ++s) {
        SdmOutput sdm = sdm_forward(tape, phi, sdm_cfg, ctx, u);
        TdmStepResult step = tdm_step(tape, theta, tdm_cfg, ctx, u, sdm.u_hat, extra_var, dt, state);
        u = step.u_next;
        preds.push_back(u);
    }
    return preds;
}

std::vector<Var> rgn_rollout(Tape& tape, const BoundParams& params, const RgnConfig& cfg,
                             const GraphContext& ctx, const Tensor& u0, const Tensor* extra,
                             double dt, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("rollout: n_steps must be >= 1");
    if (dt <= 0.0) throw std::invalid_argument("rollout: time step must be positive");
    Var extra_var;
    if (cfg.n_extra > 0) {
        if (!extra) throw std::invalid_argument("rollout: extra features configured but missing");
        extra_var = tape.constant(*extra);
    }
    RecurrentGnState state = recurrent_gn_initial_state(tape, cfg.gn(), ctx.n_nodes, ctx.n_edges());
    Var u = tape.constant(u0);
    std::vector<Var> preds;
    preds.reserve(n_steps);
    for (int s = 0; s < n_steps; ++s) {
        Var features = cfg.n_extra > 0 ? tape.concat_cols({u, extra_var}) : u;
        Var u_dot = recurrent_gn_step(tape, params, cfg.gn(), ctx, features, state);
        u = tape.add(u, tape.scale(u_dot, dt));
        preds.push_back(u);
    }
    return preds;
}

Var loss_main(Tape& tape, const std::vector<Var>& predicted, const std::vector<Tensor>& truth) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw std::invalid_argument("loss: got " + std::to_string(predicted.size()) +
                                    " predictions for " + std::to_string(truth.size()) + " targets");
    }
    Var acc;
    std::size_t count = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!tape.value(predicted[i]).same_shape(truth[i])) {
            throw std::invalid_argument("loss: prediction shape " +
                                        tape.value(predicted[i]).shape_str() +
                                        " does not match target " + truth[i].shape_str());
        }
        Var diff = tape.sub(predicted[i], tape.constant(truth[i]));
        Var sq = tape.sum(tape.mul(diff, diff));
        acc = acc.valid() ? tape.add(acc, sq) : sq;
        count += truth[i].size();
    }
    return tape.scale(acc, 1.0 / static_cast<double>(count));
}

}  // namespace metapde
