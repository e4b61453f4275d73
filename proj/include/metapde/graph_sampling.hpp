#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metapde/pde_lab.hpp"

namespace metapde {

/// Irregular sensor graph: node positions plus a directed k-NN edge list.
/// Edges are grouped by source node with neighbors in (distance, id) order.
struct SpatialGraph {
    struct Node {
        int id = 0;
        double x = 0.0, y = 0.0;
    };
    std::vector<Node> nodes;
    std::vector<std::pair<int, int>> edges;  // (src, dst)
    int k_neighbors = 0;

    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int n_edges() const { return static_cast<int>(edges.size()); }
};

/// Grid cells chosen as sensor locations.
struct SampledNodes {
    std::vector<int> cells;  // index into the grid, row-major
    std::vector<SpatialGraph::Node> nodes;
};

/// n_nodes distinct cells drawn uniformly without replacement.
SampledNodes sample_nodes(int grid_n, int n_nodes, std::mt19937_64& rng);

/// Directed k-nearest-neighbor graph under the Euclidean metric; ties broken
/// by (distance, node id).
SpatialGraph knn_graph(const std::vector<SpatialGraph::Node>& nodes, int k);

/// One meta-task: sensor graph, per-frame signals, auxiliary derivative
/// labels and a k-shot split.
struct TaskDataset {
    SpatialGraph graph;
    std::vector<std::vector<double>> frames;                 // [T][N]
    std::vector<std::vector<std::array<double, 4>>> aux;     // [T][N][ux,uy,uxx,uyy]; empty if absent
    double dt = 0.0;
    int split_k = 5;
    nlohmann::json meta;

    bool has_aux() const { return !aux.empty(); }
    int n_frames() const { return static_cast<int>(frames.size()); }
    int n_nodes() const { return graph.n_nodes(); }
};

TaskDataset build_task(const GridField& grid, const nlohmann::json& provenance, int n_nodes,
                       int k_neighbors, int split_k, std::mt19937_64& sampling_rng);

/// Family configuration for a suite of tasks drawn from independent
/// simulations of one PDE family.
struct SuiteConfig {
    PdeConfig pde;  // per-task seeds are derived from master_seed
    int tasks = 10;
    int n_nodes_min = 246;
    int n_nodes_max = 246;  // node count drawn uniformly when min < max
    int k_neighbors = 4;
    int split_k = 5;
    std::uint64_t master_seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SuiteConfig from_json(const nlohmann::json& j);
};

/// Task `index` of the suite: an independent simulation seeded from the
/// master seed, sampled and split per the family configuration.
TaskDataset make_suite_task(const SuiteConfig& cfg, int index);
std::vector<TaskDataset> make_meta_suite(const SuiteConfig& cfg);

// Task directory format: nodes.csv (id,x,y), edges.csv (src,dst), frames.csv
// (t_index,node_id,u,u_x,u_y,u_xx,u_yy with aux columns optionally empty) and
// meta.json. Doubles are written with 17 significant digits so the round
// trip is bit-exact. This is also the ingestion format for external data.
void save_task(const TaskDataset& task, const std::filesystem::path& dir);
TaskDataset load_task(const std::filesystem::path& dir);

void save_suite(const std::vector<TaskDataset>& tasks, const SuiteConfig& cfg,
                const std::filesystem::path& dir);
std::vector<TaskDataset> load_suite(const std::filesystem::path& dir,
                                    nlohmann::json* manifest_out = nullptr);

std::uint64_t task_hash(const TaskDataset& task);

}  // namespace metapde
