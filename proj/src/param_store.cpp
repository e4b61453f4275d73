#include "metapde/param_store.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace metapde {

Tensor& ParamStore::create(const std::string& name, const std::vector<std::size_t>& shape) {
    if (entries_.count(name)) {
        throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
    }
    Entry e;
    e.value = Tensor(shape);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("param store: no parameter '" + name + "'");
    return it->second.value;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("param store: no parameter '" + name + "'");
    return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& [k, e] : entries_) n += e.value.size();
    return n;
}

void ParamStore::fill_uniform(const std::string& name, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor& t = at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

void ParamStore::adam_step(const GradMap& grads, const AdamConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
    const double t = static_cast<double>(adam_steps_ + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, e] : entries_) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw std::invalid_argument("adam: missing gradient for parameter '" + name + "'");
        }
        const Tensor& g = git->second;
        if (!g.same_shape(e.value)) {
            throw std::invalid_argument("adam: gradient shape " + g.shape_str() +
                                        " does not match parameter '" + name + "' " +
                                        e.value.shape_str());
        }
        if (!e.moments_alloc) {
            e.m = Tensor(e.value.shape());
            e.v = Tensor(e.value.shape());
            e.moments_alloc = true;
        }
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        if (!e.value.all_finite()) {
            throw std::runtime_error("adam: parameter '" + name + "' became non-finite");
        }
    }
    ++adam_steps_;
}

void ParamStore::sgd_step(const GradMap& grads, double lr) {
    for (auto& [name, e] : entries_) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw std::invalid_argument("sgd: missing gradient for parameter '" + name + "'");
        }
        const Tensor& g = git->second;
        if (!g.same_shape(e.value)) {
            throw std::invalid_argument("sgd: gradient shape " + g.shape_str() +
                                        " does not match parameter '" + name + "'");
        }
        for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] -= lr * g[i];
        if (!e.value.all_finite()) {
            throw std::runtime_error("sgd: parameter '" + name + "' became non-finite");
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoint IO
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCkptHeader = "metapde-ckpt 1";
}

void ParamStore::save(const std::filesystem::path& path, const nlohmann::json& metadata) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "' for write");
    out << kCkptHeader << "\n";
    out << "meta " << metadata.dump() << "\n";
    for (const auto& [name, e] : entries_) {
        out << "tensor " << name << " " << e.value.rank();
        for (std::size_t d : e.value.shape()) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            if (i) out << " ";
            out << fmt_g17(e.value[i]);
        }
        out << "\n";
    }
    out << "end\n";
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path.string() + "'");
}

ParamStore ParamStore::load(const std::filesystem::path& path, nlohmann::json* metadata_out) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kCkptHeader) {
        throw std::runtime_error("checkpoint: bad header in '" + path.string() + "'");
    }
    ParamStore store;
    while (std::getline(in, line)) {
        if (line == "end") return store;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string rest;
            std::getline(ls, rest);
            if (metadata_out) *metadata_out = nlohmann::json::parse(rest);
            continue;
        }
        if (tag != "tensor") {
            throw std::runtime_error("checkpoint: unexpected record '" + tag + "'");
        }
        std::string name;
        std::size_t rank = 0;
        ls >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) ls >> d;
        if (!ls) throw std::runtime_error("checkpoint: malformed tensor record");
        Tensor& t = store.create(name, shape);
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated values");
        const char* p = line.c_str();
        char* endp = nullptr;
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = std::strtod(p, &endp);
            if (endp == p) throw std::runtime_error("checkpoint: short value row for '" + name + "'");
            p = endp;
        }
    }
    throw std::runtime_error("checkpoint: missing end marker in '" + path.string() + "'");
}

std::uint64_t ParamStore::value_hash() const {
    std::uint64_t h = fnv1a64(nullptr, 0);
    for (const auto& [name, e] : entries_) {
        h = fnv1a64(name.data(), name.size(), h);
        for (std::size_t d : e.value.shape()) h = fnv1a64(&d, sizeof(d), h);
        h = fnv1a64(e.value.data(), e.value.size() * sizeof(double), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// tape binding
// ---------------------------------------------------------------------------

Var BoundParams::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::invalid_argument("bound params: no parameter '" + name + "'");
    return it->second;
}

ParamStore subset_params(const ParamStore& store, const std::string& prefix) {
    ParamStore out;
    for (const std::string& name : store.names()) {
        if (name.rfind(prefix, 0) == 0) {
            out.create(name, store.at(name).shape()) = store.at(name);
        }
    }
    return out;
}

void merge_params(ParamStore& dst, const ParamStore& src) {
    for (const std::string& name : src.names()) {
        dst.create(name, src.at(name).shape()) = src.at(name);
    }
}

BoundParams bind_params(Tape& tape, const ParamStore& store, bool requires_grad) {
    BoundParams b;
    for (const std::string& name : store.names()) {
        b.vars[name] = requires_grad ? tape.leaf(store.at(name)) : tape.constant(store.at(name));
    }
    return b;
}

GradMap collect_grads(Tape& tape, const BoundParams& bound) {
    GradMap g;
    for (const auto& [name, var] : bound.vars) {
        if (!tape.requires_grad(var)) continue;
        g[name] = tape.grad(var);
    }
    return g;
}

void add_grads(GradMap& into, const GradMap& g, double scale) {
    for (const auto& [name, t] : g) {
        auto it = into.find(name);
        if (it == into.end()) {
            Tensor z(t.shape());
            it = into.emplace(name, std::move(z)).first;
        }
        Tensor& dst = it->second;
        for (std::size_t i = 0; i < t.size(); ++i) dst[i] += scale * t[i];
    }
}

// ---------------------------------------------------------------------------
// misc
// ---------------------------------------------------------------------------

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_hash: cannot open '" + path.string() + "'");
    std::uint64_t h = fnv1a64(nullptr, 0);
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

}  // namespace metapde
