#include "metapde/gradcheck.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace metapde {

GradCheckReport gradcheck(const LossClosure& loss, ParamStore& store, double eps, double tol) {
    const double base1 = loss(store, nullptr);
    const double base2 = loss(store, nullptr);
    if (std::memcmp(&base1, &base2, sizeof(double)) != 0) {
        throw std::runtime_error("gradcheck: closure is not deterministic (" + fmt_g17(base1) +
                                 " vs " + fmt_g17(base2) + ")");
    }

    GradMap analytic;
    loss(store, &analytic);

    GradCheckReport report;
    for (const auto& [name, g] : analytic) {
        GradCheckReport::Entry entry;
        entry.name = name;
        Tensor& p = store.at(name);
        if (!g.same_shape(p)) {
            throw std::runtime_error("gradcheck: gradient shape mismatch for '" + name + "'");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double lp = loss(store, nullptr);
            p[i] = saved - eps;
            const double lm = loss(store, nullptr);
            p[i] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            const double denom = std::max({1.0, std::fabs(fd), std::fabs(g[i])});
            const double rel = std::fabs(fd - g[i]) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err < tol;
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.all_pass = report.all_pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        os << (e.pass ? "  ok   " : "  FAIL ") << e.name << "  max_rel_err=" << fmt_g17(e.max_rel_err)
           << "\n";
    }
    os << (all_pass ? "all parameters pass" : "gradient check FAILED") << " (worst "
       << fmt_g17(worst) << ")\n";
    return os.str();
}

}  // namespace metapde
