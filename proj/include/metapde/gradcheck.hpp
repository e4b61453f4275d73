#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metapde/param_store.hpp"

namespace metapde {

/// Loss evaluation hook for gradient checking. Must be deterministic for
/// fixed parameters. When `grads` is non-null the closure also runs backward
/// and fills gradients for every tracked parameter; frozen parameters are
/// simply absent from the map.
using LossClosure = std::function<double(const ParamStore& store, GradMap* grads)>;

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        bool pass = true;
    };
    std::vector<Entry> entries;
    double worst = 0.0;
    bool all_pass = true;
    std::string summary() const;
};

/// Central-difference check of reverse-mode gradients, parameter entry by
/// parameter entry. Relative error is |fd - g| / max(1, |fd|, |g|).
GradCheckReport gradcheck(const LossClosure& loss, ParamStore& store, double eps = 1e-5,
                          double tol = 1e-4);

}  // namespace metapde
