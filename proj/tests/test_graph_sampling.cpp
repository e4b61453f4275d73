#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "metapde/graph_sampling.hpp"

using namespace metapde;

namespace {

PdeConfig tiny_pde() {
    PdeConfig cfg;
    cfg.grid_n = 32;
    cfg.dt_solver = 1e-3;
    cfg.dt_save = 5e-3;
    cfg.n_frames = 8;
    cfg.fourier_cutoff = 3;
    return cfg;
}

// Independent O(N^2) oracle: full sort of (squared distance, id) per node.
std::vector<std::pair<int, int>> knn_oracle(const std::vector<SpatialGraph::Node>& nodes, int k) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& a : nodes) {
        std::vector<std::pair<double, int>> all;
        for (const auto& b : nodes) {
            if (b.id == a.id) continue;
            const double dx = b.x - a.x, dy = b.y - a.y;
            all.emplace_back(dx * dx + dy * dy, b.id);
        }
        std::sort(all.begin(), all.end());
        for (int e = 0; e < k; ++e) edges.emplace_back(a.id, all[e].second);
    }
    return edges;
}

}  // namespace

TEST_CASE("sample_nodes draws distinct cells and is deterministic") {
    std::mt19937_64 rng1(5), rng2(5);
    SampledNodes a = sample_nodes(100, 246, rng1);
    SampledNodes b = sample_nodes(100, 246, rng2);
    CHECK(a.cells == b.cells);
    std::set<int> unique(a.cells.begin(), a.cells.end());
    CHECK(unique.size() == 246);
    for (int c : a.cells) {
        CHECK(c >= 0);
        CHECK(c < 100 * 100);
    }
}

TEST_CASE("sample_nodes exhaustive and overf low cases") {
    std::mt19937_64 rng(1);
    SampledNodes all = sample_nodes(8, 64, rng);
    std::set<int> unique(all.cells.begin(), all.cells.end());
    CHECK(unique.size() == 64);
    CHECK_THROWS_AS(sample_nodes(8, 65, rng), std::invalid_argument);
}

TEST_CASE("knn tie-break picks the lower id") {
    // Three collinear, equally spaced nodes: the middle node is equidistant
    // from both ends.
    std::vector<SpatialGraph::Node> nodes{{0, 0.0, 0.0}, {1, 1.0, 0.0}, {2, 2.0, 0.0}};
    SpatialGraph g = knn_graph(nodes, 1);
    auto edge_of = [&](int src) {
        for (auto [s, d] : g.edges)
            if (s == src) return d;
        return -1;
    };
    CHECK(edge_of(1) == 0);
    CHECK(edge_of(0) == 1);
    CHECK(edge_of(2) == 1);
}

TEST_CASE("unit square connects along edges not the diagonal") {
    std::vector<SpatialGraph::Node> nodes{
        {0, 0.0, 0.0}, {1, 1.0, 0.0}, {2, 0.0, 1.0}, {3, 1.0, 1.0}};
    SpatialGraph g = knn_graph(nodes, 2);
    for (auto [s, d] : g.edges) {
        const double dx = nodes[s].x - nodes[d].x;
        const double dy = nodes[s].y - nodes[d].y;
        CHECK(dx * dx + dy * dy == doctest::Approx(1.0));  // never sqrt(2)
    }
    CHECK(g.n_edges() == 8);
}

TEST_CASE("knn degree and edge count identities") {
    std::mt19937_64 rng(17);
    SampledNodes s = sample_nodes(100, 246, rng);
    SpatialGraph g = knn_graph(s.nodes, 4);
    CHECK(g.n_edges() == 246 * 4);
    std::vector<int> outdeg(246, 0);
    std::set<std::pair<int, int>> seen;
    for (auto [src, dst] : g.edges) {
        CHECK(src != dst);
        CHECK(seen.insert({src, dst}).second);  // no duplicates
        outdeg[src]++;
    }
    for (int d : outdeg) CHECK(d == 4);
}

TEST_CASE("knn agrees with the brute-force oracle") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ud(0.0, kDomainSize);
    std::uniform_int_distribution<int> nd(10, 120);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = nd(rng);
        std::vector<SpatialGraph::Node> nodes;
        for (int i = 0; i < n; ++i) nodes.push_back({i, ud(rng), ud(rng)});
        std::uniform_int_distribution<int> kd(1, std::min(8, n - 1));
        const int k = kd(rng);
        SpatialGraph g = knn_graph(nodes, k);
        CHECK(g.edges == knn_oracle(nodes, k));
    }
}

TEST_CASE("knn preconditions") {
    std::vector<SpatialGraph::Node> nodes{{0, 0.0, 0.0}, {1, 1.0, 0.0}};
    CHECK_THROWS_AS(knn_graph(nodes, 2), std::invalid_argument);
}

TEST_CASE("build_task splits and node signals") {
    PdeConfig cfg = tiny_pde();
    cfg.seed = 3;
    GridField grid = simulate(cfg);
    std::mt19937_64 rng(7);
    TaskDataset task = build_task(grid, {{"origin", "test"}}, 20, 4, 5, rng);
    CHECK(task.n_frames() == 8);
    CHECK(task.n_nodes() == 20);
    CHECK(task.split_k == 5);
    CHECK(task.has_aux());
    // Signals must equal the grid values at the sampled cells.
    std::mt19937_64 rng2(7);
    SampledNodes s = sample_nodes(cfg.grid_n, 20, rng2);
    for (int t = 0; t < task.n_frames(); ++t) {
        for (int i = 0; i < 20; ++i) {
            CHECK(task.frames[t][i] == grid.frames[t][s.cells[i]]);
            for (int d = 0; d < 4; ++d) CHECK(task.aux[t][i][d] == grid.derivs[t][d][s.cells[i]]);
        }
    }
    CHECK_THROWS_AS(build_task(grid, {}, 20, 4, 8, rng), std::invalid_argument);
    TaskDataset boundary = build_task(grid, {}, 20, 4, 7, rng);
    CHECK(boundary.n_frames() - boundary.split_k == 1);
}

TEST_CASE("meta suite sizes, ranges and determinism") {
    SuiteConfig cfg;
    cfg.pde = tiny_pde();
    cfg.tasks = 3;
    cfg.n_nodes_min = 15;
    cfg.n_nodes_max = 30;
    cfg.k_neighbors = 4;
    cfg.split_k = 5;
    cfg.master_seed = 99;
    auto suite1 = make_meta_suite(cfg);
    auto suite2 = make_meta_suite(cfg);
    REQUIRE(suite1.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(suite1[i].n_nodes() >= 15);
        CHECK(suite1[i].n_nodes() <= 30);
        CHECK(task_hash(suite1[i]) == task_hash(suite2[i]));
    }
    // Different master seeds give different tasks.
    cfg.master_seed = 100;
    auto suite3 = make_meta_suite(cfg);
    CHECK(task_hash(suite3[0]) != task_hash(suite1[0]));
}

TEST_CASE("task directory round-trip is bit-exact") {
    SuiteConfig cfg;
    cfg.pde = tiny_pde();
    cfg.tasks = 1;
    cfg.n_nodes_min = cfg.n_nodes_max = 18;
    cfg.k_neighbors = 3;
    cfg.split_k = 4;
    cfg.master_seed = 8;
    auto suite = make_meta_suite(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "metapde_task_test";
    std::filesystem::remove_all(dir);
    save_task(suite[0], dir);
    TaskDataset loaded = load_task(dir);
    CHECK(task_hash(loaded) == task_hash(suite[0]));
    CHECK(loaded.graph.edges == suite[0].graph.edges);
    std::filesystem::remove_all(dir);
}

TEST_CASE("suite round-trip keeps manifest hashes") {
    SuiteConfig cfg;
    cfg.pde = tiny_pde();
    cfg.tasks = 2;
    cfg.n_nodes_min = cfg.n_nodes_max = 16;
    cfg.k_neighbors = 3;
    cfg.split_k = 4;
    cfg.master_seed = 12;
    auto suite = make_meta_suite(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "metapde_suite_test";
    std::filesystem::remove_all(dir);
    save_suite(suite, cfg, dir);
    nlohmann::json manifest;
    auto loaded = load_suite(dir, &manifest);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(task_hash(loaded[i]) == manifest["task_hashes"][i].get<std::uint64_t>());
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("tasks without aux labels load as such") {
    SuiteConfig cfg;
    cfg.pde = tiny_pde();
    cfg.tasks = 1;
    cfg.n_nodes_min = cfg.n_nodes_max = 12;
    cfg.k_neighbors = 3;
    cfg.split_k = 4;
    cfg.master_seed = 5;
    auto suite = make_meta_suite(cfg);
    suite[0].aux.clear();
    const auto dir = std::filesystem::temp_directory_path() / "metapde_noaux_test";
    std::filesystem::remove_all(dir);
    save_task(suite[0], dir);
    TaskDataset loaded = load_task(dir);
    CHECK(!loaded.has_aux());
    CHECK(loaded.frames == suite[0].frames);
    std::filesystem::remove_all(dir);
}
