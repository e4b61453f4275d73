#include "metapde/fdm_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metapde/graph_sampling.hpp"

namespace metapde {

std::vector<double> solve_linear_system(std::vector<double> a, std::vector<double> b,
                                        std::size_t n) {
    // Gaussian elimination with partial pivoting on the augmented system.
    double a_max = 0.0;
    for (double v : a) a_max = std::max(a_max, std::fabs(v));
    const double pivot_tol = 1e-12 * std::max(1.0, a_max);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::fabs(a[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < pivot_tol) throw std::runtime_error("linear solve: singular system");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri * n + c] * x[c];
        x[ri] = acc / a[ri * n + ri];
    }
    return x;
}

namespace {

double int_pow(double base, std::size_t exp) {
    double acc = 1.0;
    for (std::size_t i = 0; i < exp; ++i) acc *= base;
    return acc;
}

}  // namespace

Stencil solve_coefficients(const std::vector<double>& offsets, int order) {
    const std::size_t n = offsets.size();
    if (order < 0) throw std::invalid_argument("stencil: derivative order must be >= 0");
    if (n <= static_cast<std::size_t>(order)) {
        throw std::invalid_argument("stencil: need more points than the derivative order (n=" +
                                    std::to_string(n) + ", d=" + std::to_string(order) + ")");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (offsets[i] == offsets[j]) {
                throw std::invalid_argument("stencil: duplicate offset " +
                                            std::to_string(offsets[i]));
            }
        }
    }
    // Moment system: sum_i alpha_i * s_i^m = d! * [m == d], m = 0..n-1.
    std::vector<double> a(n * n), b(n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t i = 0; i < n; ++i) a[m * n + i] = int_pow(offsets[i], m);
    }
    double dfact = 1.0;
    for (int i = 2; i <= order; ++i) dfact *= i;
    b[static_cast<std::size_t>(order)] = dfact;

    Stencil s;
    s.offsets = offsets;
    s.order = order;
    s.coeffs = solve_linear_system(a, b, n);
    // One round of iterative refinement keeps the moment residual at the
    // rounding level even for ill-conditioned wide stencils.
    std::vector<double> r(n);
    for (std::size_t m = 0; m < n; ++m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a[m * n + i] * s.coeffs[i];
        r[m] = b[m] - acc;
    }
    const std::vector<double> corr = solve_linear_system(a, r, n);
    for (std::size_t i = 0; i < n; ++i) s.coeffs[i] += corr[i];
    return s;
}

double Stencil::max_moment_residual() const {
    const std::size_t n = offsets.size();
    double dfact = 1.0;
    for (int i = 2; i <= order; ++i) dfact *= i;
    double worst = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += coeffs[i] * int_pow(offsets[i], m);
        const double want = m == static_cast<std::size_t>(order) ? dfact : 0.0;
        worst = std::max(worst, std::fabs(acc - want));
    }
    return worst;
}

double apply_stencil(const Stencil& stencil, const std::vector<double>& samples) {
    if (samples.size() != stencil.coeffs.size()) {
        throw std::invalid_argument("stencil: got " + std::to_string(samples.size()) +
                                    " samples for a " + std::to_string(stencil.coeffs.size()) +
                                    "-point stencil");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) acc += stencil.coeffs[i] * samples[i];
    return acc;
}

std::string deriv_op_name(GraphDerivOp op) {
    switch (op) {
        case GraphDerivOp::dx: return "dx";
        case GraphDerivOp::dy: return "dy";
        case GraphDerivOp::dxx: return "dxx";
        default: return "dyy";
    }
}

GraphFdmResult graph_fdm_baseline(const SpatialGraph& graph, const std::vector<double>& signals,
                                  GraphDerivOp op) {
    const int n = graph.n_nodes();
    if (static_cast<int>(signals.size()) != n) {
        throw std::invalid_argument("graph fdm: got " + std::to_string(signals.size()) +
                                    " signals for " + std::to_string(n) + " nodes");
    }
    std::vector<std::vector<int>> nbrs(n);
    for (const auto& [s, d] : graph.edges) nbrs[s].push_back(d);

    GraphFdmResult result;
    result.estimates.assign(n, 0.0);
    constexpr std::size_t kTerms = 6;  // 1, dx, dy, dx^2, dx*dy, dy^2
    for (int i = 0; i < n; ++i) {
        const std::size_t m = nbrs[i].size() + 1;
        std::vector<double> design(m * kTerms);
        std::vector<double> rhs(m);
        auto fill_row = [&](std::size_t r, double dx, double dy, double u) {
            design[r * kTerms + 0] = 1.0;
            design[r * kTerms + 1] = dx;
            design[r * kTerms + 2] = dy;
            design[r * kTerms + 3] = dx * dx;
            design[r * kTerms + 4] = dx * dy;
            design[r * kTerms + 5] = dy * dy;
            rhs[r] = u;
        };
        fill_row(0, 0.0, 0.0, signals[i]);
        for (std::size_t e = 0; e < nbrs[i].size(); ++e) {
            const int j = nbrs[i][e];
            fill_row(e + 1, graph.nodes[j].x - graph.nodes[i].x,
                     graph.nodes[j].y - graph.nodes[i].y, signals[j]);
        }
        // Normal equations for the least-squares quadratic fit.
        std::vector<double> ata(kTerms * kTerms, 0.0), atb(kTerms, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t p = 0; p < kTerms; ++p) {
                atb[p] += design[r * kTerms + p] * rhs[r];
                for (std::size_t q = 0; q < kTerms; ++q) {
                    ata[p * kTerms + q] += design[r * kTerms + p] * design[r * kTerms + q];
                }
            }
        }
        try {
            const std::vector<double> c = solve_linear_system(std::move(ata), std::move(atb), kTerms);
            switch (op) {
                case GraphDerivOp::dx: result.estimates[i] = c[1]; break;
                case GraphDerivOp::dy: result.estimates[i] = c[2]; break;
                case GraphDerivOp::dxx: result.estimates[i] = 2.0 * c[3]; break;
                default: result.estimates[i] = 2.0 * c[5]; break;
            }
        } catch (const std::runtime_error&) {
            result.estimates[i] = 0.0;
            result.flagged_nodes.push_back(i);
        }
        if (!std::isfinite(result.estimates[i])) {
            result.estimates[i] = 0.0;
            result.flagged_nodes.push_back(i);
        }
    }
    return result;
}

}  // namespace metapde
