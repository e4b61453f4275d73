#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace metapde {

struct SpatialGraph;

/// Finite-difference stencil: offsets, derivative order, and the coefficients
/// that solve the moment conditions  sum_i alpha_i * s_i^m = d! * [m == d]
/// for m = 0..n-1.
struct Stencil {
    std::vector<double> offsets;
    int order = 0;
    std::vector<double> coeffs;

    /// Largest violation over all n moment conditions.
    double max_moment_residual() const;
};

/// Coefficients for an n-point stencil of a d-th derivative, obtained by
/// Gaussian elimination with partial pivoting on the Vandermonde moment
/// system. Requires distinct offsets and n > d.
Stencil solve_coefficients(const std::vector<double>& offsets, int order);

/// sum_i alpha_i * u_i.
double apply_stencil(const Stencil& stencil, const std::vector<double>& samples);

/// Dense linear solve (partial pivoting). Throws on a singular system.
std::vector<double> solve_linear_system(std::vector<double> a, std::vector<double> b,
                                        std::size_t n);

enum class GraphDerivOp { dx, dy, dxx, dyy };
std::string deriv_op_name(GraphDerivOp op);

struct GraphFdmResult {
    std::vector<double> estimates;   // per node
    std::vector<int> flagged_nodes;  // rank-deficient local fits, estimate forced to 0
};

/// Classical irregular-grid baseline: per node, least-squares fit of a local
/// bivariate quadratic over {self} + outgoing neighbors, then read off the
/// requested derivative at the node.
GraphFdmResult graph_fdm_baseline(const SpatialGraph& graph, const std::vector<double>& signals,
                                  GraphDerivOp op);

}  // namespace metapde
