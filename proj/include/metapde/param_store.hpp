#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "metapde/tape.hpp"
#include "metapde/tensor.hpp"

#include <json.hpp>

namespace metapde {

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named parameter tensors plus Adam moment state. Value semantics: copying
/// a store snapshots parameters and optimizer state.
class ParamStore {
public:
    Tensor& create(const std::string& name, const std::vector<std::size_t>& shape);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    std::size_t size() const { return entries_.size(); }
    std::vector<std::string> names() const;  // sorted
    std::size_t total_values() const;

    /// Uniform fill in [-bound, bound].
    void fill_uniform(const std::string& name, double bound, std::mt19937_64& rng);

    /// Bias-corrected Adam. Every parameter must have a gradient entry.
    void adam_step(const GradMap& grads, const AdamConfig& cfg);
    /// Plain gradient descent; leaves Adam state untouched.
    void sgd_step(const GradMap& grads, double lr);
    std::uint64_t step_count() const { return adam_steps_; }

    /// Text checkpoint with a version header; values round-trip bit-exact.
    void save(const std::filesystem::path& path, const nlohmann::json& metadata) const;
    static ParamStore load(const std::filesystem::path& path,
                           nlohmann::json* metadata_out = nullptr);

    /// FNV-1a over names, shapes and raw value bits.
    std::uint64_t value_hash() const;

private:
    struct Entry {
        Tensor value;
        Tensor m, v;  // Adam moments, allocated at first adam_step
        bool moments_alloc = false;
    };
    std::map<std::string, Entry> entries_;
    std::uint64_t adam_steps_ = 0;
};

/// Parameters bound onto a tape for one forward pass.
struct BoundParams {
    std::map<std::string, Var> vars;
    Var at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamStore& store, bool requires_grad);
/// Copy of the entries whose names start with `prefix` (values only).
ParamStore subset_params(const ParamStore& store, const std::string& prefix);
/// Copy every entry of `src` into `dst`; duplicate names throw.
void merge_params(ParamStore& dst, const ParamStore& src);
/// Gradients of every bound parameter that required grad. Call after backward.
GradMap collect_grads(Tape& tape, const BoundParams& bound);
/// Elementwise: into[name] += g[name], inserting zeros-shaped entries as needed.
void add_grads(GradMap& into, const GradMap& g, double scale = 1.0);

/// 17-significant-digit formatting; round-trips IEEE doubles exactly.
std::string fmt_g17(double v);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace metapde
