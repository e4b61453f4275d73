#include "metapde/graph_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "metapde/param_store.hpp"

namespace metapde {

SampledNodes sample_nodes(int grid_n, int n_nodes, std::mt19937_64& rng) {
    const std::size_t total = static_cast<std::size_t>(grid_n) * grid_n;
    if (n_nodes < 1 || static_cast<std::size_t>(n_nodes) > total) {
        throw std::invalid_argument("sample_nodes: cannot draw " + std::to_string(n_nodes) +
                                    " cells from a " + std::to_string(grid_n) + "x" +
                                    std::to_string(grid_n) + " grid");
    }
    // Partial Fisher-Yates: the first n_nodes slots end up a uniform draw
    // without replacement.
    std::vector<int> cells(total);
    std::iota(cells.begin(), cells.end(), 0);
    for (int i = 0; i < n_nodes; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(cells[i], cells[pick(rng)]);
    }
    cells.resize(n_nodes);

    SampledNodes out;
    out.cells = std::move(cells);
    out.nodes.resize(n_nodes);
    const double h = kDomainSize / grid_n;
    for (int i = 0; i < n_nodes; ++i) {
        const int row = out.cells[i] / grid_n;
        const int col = out.cells[i] % grid_n;
        out.nodes[i] = {i, col * h, row * h};
    }
    return out;
}

SpatialGraph knn_graph(const std::vector<SpatialGraph::Node>& nodes, int k) {
    const int n = static_cast<int>(nodes.size());
    if (k < 1 || k >= n) {
        throw std::invalid_argument("knn_graph: k=" + std::to_string(k) +
                                    " requires 1 <= k < n=" + std::to_string(n));
    }
    SpatialGraph g;
    g.nodes = nodes;
    g.k_neighbors = k;
    g.edges.reserve(static_cast<std::size_t>(n) * k);
    std::vector<std::pair<double, int>> cand;
    cand.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = nodes[j].x - nodes[i].x;
            const double dy = nodes[j].y - nodes[i].y;
            cand.emplace_back(dx * dx + dy * dy, nodes[j].id);
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int e = 0; e < k; ++e) g.edges.emplace_back(nodes[i].id, cand[e].second);
    }
    return g;
}

TaskDataset build_task(const GridField& grid, const nlohmann::json& provenance, int n_nodes,
                       int k_neighbors, int split_k, std::mt19937_64& sampling_rng) {
    const int T = grid.n_frames();
    if (split_k < 1 || split_k >= T) {
        throw std::invalid_argument("build_task: split_k=" + std::to_string(split_k) +
                                    " must lie in [1, T-1] with T=" + std::to_string(T));
    }
    SampledNodes sampled = sample_nodes(grid.grid_n, n_nodes, sampling_rng);

    TaskDataset task;
    task.graph = knn_graph(sampled.nodes, k_neighbors);
    task.dt = grid.dt_save;
    task.split_k = split_k;
    task.frames.assign(T, std::vector<double>(n_nodes));
    task.aux.assign(T, std::vector<std::array<double, 4>>(n_nodes));
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < n_nodes; ++i) {
            const int cell = sampled.cells[i];
            task.frames[t][i] = grid.frames[t][cell];
            for (int d = 0; d < 4; ++d) task.aux[t][i][d] = grid.derivs[t][d][cell];
        }
    }
    task.meta = nlohmann::json{{"format_version", 1},
                               {"T", T},
                               {"N", n_nodes},
                               {"dt", task.dt},
                               {"split_k", split_k},
                               {"k_neighbors", k_neighbors},
                               {"provenance", provenance}};
    return task;
}

void SuiteConfig::validate() const {
    pde.validate();
    if (tasks < 1) throw std::invalid_argument("suite config: tasks must be >= 1");
    if (n_nodes_min < 1 || n_nodes_max < n_nodes_min) {
        throw std::invalid_argument("suite config: invalid node count range");
    }
    if (k_neighbors < 1 || k_neighbors >= n_nodes_min) {
        throw std::invalid_argument("suite config: k_neighbors must satisfy 1 <= k < n_nodes");
    }
    if (split_k < 1 || split_k >= pde.n_frames) {
        throw std::invalid_argument("suite config: split_k must lie in [1, n_frames-1]");
    }
}

nlohmann::json SuiteConfig::to_json() const {
    return nlohmann::json{{"pde", pde.to_json()}, {"tasks", tasks},
                          {"n_nodes_min", n_nodes_min}, {"n_nodes_max", n_nodes_max},
                          {"k_neighbors", k_neighbors}, {"split_k", split_k},
                          {"master_seed", master_seed}};
}

SuiteConfig SuiteConfig::from_json(const nlohmann::json& j) {
    SuiteConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "pde") cfg.pde = PdeConfig::from_json(val);
        else if (key == "tasks") cfg.tasks = val.get<int>();
        else if (key == "n_nodes_min") cfg.n_nodes_min = val.get<int>();
        else if (key == "n_nodes_max") cfg.n_nodes_max = val.get<int>();
        else if (key == "k_neighbors") cfg.k_neighbors = val.get<int>();
        else if (key == "split_k") cfg.split_k = val.get<int>();
        else if (key == "master_seed") cfg.master_seed = val.get<std::uint64_t>();
        else throw std::invalid_argument("suite config: unknown key '" + key + "'");
    }
    return cfg;
}

TaskDataset make_suite_task(const SuiteConfig& cfg, int index) {
    PdeConfig pde = cfg.pde;
    pde.seed = mix_seed(cfg.master_seed, 2 * static_cast<std::uint64_t>(index));
    const std::uint64_t samp_seed =
        mix_seed(cfg.master_seed, 2 * static_cast<std::uint64_t>(index) + 1);
    std::mt19937_64 samp_rng(samp_seed);
    int n_nodes = cfg.n_nodes_min;
    if (cfg.n_nodes_max > cfg.n_nodes_min) {
        std::uniform_int_distribution<int> pick(cfg.n_nodes_min, cfg.n_nodes_max);
        n_nodes = pick(samp_rng);
    }
    GridField grid = simulate(pde);
    nlohmann::json provenance{{"pde", pde.to_json()},
                              {"pde_config_hash", fnv1a64(pde.to_json().dump().data(),
                                                          pde.to_json().dump().size())},
                              {"sampling_seed", samp_seed},
                              {"task_index", index},
                              {"solver", "rk4-cd2"}};
    return build_task(grid, provenance, n_nodes, cfg.k_neighbors, cfg.split_k, samp_rng);
}

std::vector<TaskDataset> make_meta_suite(const SuiteConfig& cfg) {
    cfg.validate();
    std::vector<TaskDataset> tasks;
    tasks.reserve(cfg.tasks);
    for (int i = 0; i < cfg.tasks; ++i) tasks.push_back(make_suite_task(cfg, i));
    return tasks;
}

// ---------------------------------------------------------------------------
// task directory IO
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("task io: cannot open '" + p.string() + "'");
    return in;
}

void expect_header(std::ifstream& in, const std::string& expected,
                   const std::filesystem::path& p) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("task io: empty file " + p.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected) {
        throw std::runtime_error("task io: bad header in " + p.string() + ": got '" + line +
                                 "', expected '" + expected + "'");
    }
}

}  // namespace

void save_task(const TaskDataset& task, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "nodes.csv");
        out << "id,x,y\n";
        for (const auto& n : task.graph.nodes) {
            out << n.id << "," << fmt_g17(n.x) << "," << fmt_g17(n.y) << "\n";
        }
    }
    {
        std::ofstream out(dir / "edges.csv");
        out << "src,dst\n";
        for (const auto& [s, d] : task.graph.edges) out << s << "," << d << "\n";
    }
    {
        std::ofstream out(dir / "frames.csv");
        out << "t_index,node_id,u,u_x,u_y,u_xx,u_yy\n";
        for (int t = 0; t < task.n_frames(); ++t) {
            for (int i = 0; i < task.n_nodes(); ++i) {
                out << t << "," << i << "," << fmt_g17(task.frames[t][i]);
                if (task.has_aux()) {
                    for (int d = 0; d < 4; ++d) out << "," << fmt_g17(task.aux[t][i][d]);
                } else {
                    out << ",,,,";
                }
                out << "\n";
            }
        }
    }
    {
        nlohmann::json meta = task.meta;
        meta["k_neighbors"] = task.graph.k_neighbors;
        std::ofstream out(dir / "meta.json");
        out << meta.dump(2) << "\n";
    }
}

TaskDataset load_task(const std::filesystem::path& dir) {
    TaskDataset task;
    {
        std::ifstream in = open_or_throw(dir / "meta.json");
        task.meta = nlohmann::json::parse(in);
    }
    const int T = task.meta.at("T").get<int>();
    const int N = task.meta.at("N").get<int>();
    task.dt = task.meta.at("dt").get<double>();
    task.split_k = task.meta.at("split_k").get<int>();
    task.graph.k_neighbors = task.meta.at("k_neighbors").get<int>();
    {
        std::ifstream in = open_or_throw(dir / "nodes.csv");
        expect_header(in, "id,x,y", dir / "nodes.csv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 3) throw std::runtime_error("task io: bad row in nodes.csv");
            task.graph.nodes.push_back(
                {std::stoi(f[0]), std::strtod(f[1].c_str(), nullptr),
                 std::strtod(f[2].c_str(), nullptr)});
        }
        if (task.graph.n_nodes() != N) {
            throw std::runtime_error("task io: nodes.csv row count disagrees with meta.json");
        }
    }
    {
        std::ifstream in = open_or_throw(dir / "edges.csv");
        expect_header(in, "src,dst", dir / "edges.csv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 2) throw std::runtime_error("task io: bad row in edges.csv");
            task.graph.edges.emplace_back(std::stoi(f[0]), std::stoi(f[1]));
        }
    }
    {
        std::ifstream in = open_or_throw(dir / "frames.csv");
        expect_header(in, "t_index,node_id,u,u_x,u_y,u_xx,u_yy", dir / "frames.csv");
        task.frames.assign(T, std::vector<double>(N));
        task.aux.assign(T, std::vector<std::array<double, 4>>(N));
        bool any_aux = false, all_aux = true;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 7) throw std::runtime_error("task io: bad row in frames.csv");
            const int t = std::stoi(f[0]);
            const int i = std::stoi(f[1]);
            if (t < 0 || t >= T || i < 0 || i >= N) {
                throw std::runtime_error("task io: frame row out of range");
            }
            task.frames[t][i] = std::strtod(f[2].c_str(), nullptr);
            if (f[3].empty()) {
                all_aux = false;
            } else {
                any_aux = true;
                for (int d = 0; d < 4; ++d) {
                    task.aux[t][i][d] = std::strtod(f[3 + d].c_str(), nullptr);
                }
            }
        }
        if (any_aux && !all_aux) {
            throw std::runtime_error("task io: frames.csv mixes rows with and without aux labels");
        }
        if (!any_aux) task.aux.clear();
    }
    return task;
}

void save_suite(const std::vector<TaskDataset>& tasks, const SuiteConfig& cfg,
                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"format_version", 1},
                            {"tasks", static_cast<int>(tasks.size())},
                            {"suite_config", cfg.to_json()}};
    nlohmann::json hashes = nlohmann::json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "task_%04zu", i);
        save_task(tasks[i], dir / name);
        hashes.push_back(task_hash(tasks[i]));
    }
    manifest["task_hashes"] = hashes;
    const std::string cfg_dump = cfg.to_json().dump();
    manifest["config_hash"] = fnv1a64(cfg_dump.data(), cfg_dump.size());
    std::ofstream out(dir / "suite.json");
    if (!out) throw std::runtime_error("task io: cannot write suite.json");
    out << manifest.dump(2) << "\n";
}

std::vector<TaskDataset> load_suite(const std::filesystem::path& dir,
                                    nlohmann::json* manifest_out) {
    std::ifstream in = open_or_throw(dir / "suite.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest_out) *manifest_out = manifest;
    const int n = manifest.at("tasks").get<int>();
    std::vector<TaskDataset> tasks;
    tasks.reserve(n);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "task_%04d", i);
        tasks.push_back(load_task(dir / name));
    }
    return tasks;
}

std::uint64_t task_hash(const TaskDataset& task) {
    std::uint64_t h = fnv1a64(nullptr, 0);
    auto mix_double = [&h](double v) { h = fnv1a64(&v, sizeof(v), h); };
    auto mix_int = [&h](int v) { h = fnv1a64(&v, sizeof(v), h); };
    mix_int(task.n_frames());
    mix_int(task.n_nodes());
    mix_int(task.split_k);
    mix_double(task.dt);
    for (const auto& n : task.graph.nodes) {
        mix_int(n.id);
        mix_double(n.x);
        mix_double(n.y);
    }
    for (const auto& [s, d] : task.graph.edges) {
        mix_int(s);
        mix_int(d);
    }
    for (const auto& frame : task.frames) {
        h = fnv1a64(frame.data(), frame.size() * sizeof(double), h);
    }
    for (const auto& frame : task.aux) {
        h = fnv1a64(frame.data(), frame.size() * sizeof(frame[0]), h);
    }
    return h;
}

}  // namespace metapde
