#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "metapde/fdm_oracle.hpp"
#include "metapde/graph_sampling.hpp"

using namespace metapde;

TEST_CASE("classic central stencils") {
    const double h = 0.25;
    Stencil d1 = solve_coefficients({-h, 0.0, h}, 1);
    CHECK(d1.coeffs[0] == doctest::Approx(-1.0 / (2.0 * h)).epsilon(1e-12));
    CHECK(std::fabs(d1.coeffs[1]) < 1e-12);
    CHECK(d1.coeffs[2] == doctest::Approx(1.0 / (2.0 * h)).epsilon(1e-12));

    Stencil d2 = solve_coefficients({-h, 0.0, h}, 2);
    CHECK(d2.coeffs[0] == doctest::Approx(1.0 / (h * h)).epsilon(1e-12));
    CHECK(d2.coeffs[1] == doctest::Approx(-2.0 / (h * h)).epsilon(1e-12));
    CHECK(d2.coeffs[2] == doctest::Approx(1.0 / (h * h)).epsilon(1e-12));
}

TEST_CASE("two-point forward slope is forced") {
    const double h = 0.5;
    Stencil s = solve_coefficients({0.0, h}, 1);
    CHECK(s.coeffs[0] == doctest::Approx(-1.0 / h).epsilon(1e-13));
    CHECK(s.coeffs[1] == doctest::Approx(1.0 / h).epsilon(1e-13));
}

TEST_CASE("stencil preconditions") {
    CHECK_THROWS_AS(solve_coefficients({0.0, 1.0, 1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(solve_coefficients({0.0, 1.0}, 2), std::invalid_argument);
}

TEST_CASE("moment conditions hold for random stencils") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    std::uniform_int_distribution<int> nd(2, 8);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = nd(rng);
        std::vector<double> offsets;
        while (static_cast<int>(offsets.size()) < n) {
            const double c = ud(rng);
            bool ok = true;
            for (double o : offsets) ok = ok && std::fabs(o - c) > 0.1;
            if (ok) offsets.push_back(c);
        }
        std::uniform_int_distribution<int> dd(1, n - 1);
        const int d = dd(rng);
        Stencil s = solve_coefficients(offsets, d);
        CHECK(s.max_moment_residual() < 1e-9);
    }
}

TEST_CASE("stencils are exact on polynomials up to degree n-1") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> offsets;
        while (offsets.size() < 5) {
            const double c = ud(rng) * 2.0;
            bool ok = true;
            for (double o : offsets) ok = ok && std::fabs(o - c) > 0.15;
            if (ok) offsets.push_back(c);
        }
        std::vector<double> poly(5);  // degree 4
        for (auto& c : poly) c = ud(rng);
        std::uniform_int_distribution<int> dd(1, 4);
        const int d = dd(rng);
        Stencil s = solve_coefficients(offsets, d);

        std::vector<double> samples;
        for (double o : offsets) {
            double v = 0.0, p = 1.0;
            for (double c : poly) {
                v += c * p;
                p *= o;
            }
            samples.push_back(v);
        }
        // Analytic d-th derivative of the polynomial at 0.
        double want = poly[d];
        for (int i = 2; i <= d; ++i) want *= i;
        double scale = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            scale = std::max(scale, std::fabs(s.coeffs[i] * samples[i]));
        }
        CHECK(std::fabs(apply_stencil(s, samples) - want) < 1e-8 * std::max(1.0, scale));
    }
}

TEST_CASE("apply_stencil basics") {
    const double h = 0.1;
    Stencil d2 = solve_coefficients({-h, 0.0, h}, 2);
    // u = x^2 sampled on the stencil: second derivative is exactly 2.
    CHECK(apply_stencil(d2, {h * h, 0.0, h * h}) == doctest::Approx(2.0).epsilon(1e-10));
    Stencil d1 = solve_coefficients({-h, 0.0, h}, 1);
    CHECK(apply_stencil(d1, {-h, 0.0, h}) == doctest::Approx(1.0).epsilon(1e-12));
    // Constants are annihilated by any d >= 1 stencil.
    double amax = 0.0;
    for (double c : d2.coeffs) amax = std::max(amax, std::fabs(c));
    CHECK(std::fabs(apply_stencil(d2, {3.0, 3.0, 3.0})) < 1e-12 * amax);
    CHECK_THROWS_AS(apply_stencil(d1, {1.0, 2.0}), std::invalid_argument);
}

namespace {

SpatialGraph grid_graph(int side, double h, int k) {
    std::vector<SpatialGraph::Node> nodes;
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            nodes.push_back({static_cast<int>(nodes.size()), c * h, r * h});
    return knn_graph(nodes, k);
}

}  // namespace

TEST_CASE("graph baseline is exact on linear and constant fields") {
    // k=8 gives every node a full 3x3-style neighborhood; k=6 would leave
    // boundary fits with only two distinct offsets per axis (rank-deficient).
    SpatialGraph g = grid_graph(7, 0.3, 8);
    std::vector<double> lin(g.n_nodes()), cst(g.n_nodes(), 4.2);
    for (int i = 0; i < g.n_nodes(); ++i) lin[i] = 2.0 * g.nodes[i].x + 3.0 * g.nodes[i].y;

    auto rx = graph_fdm_baseline(g, lin, GraphDerivOp::dx);
    auto ry = graph_fdm_baseline(g, lin, GraphDerivOp::dy);
    CHECK(rx.flagged_nodes.empty());
    for (int i = 0; i < g.n_nodes(); ++i) {
        CHECK(rx.estimates[i] == doctest::Approx(2.0).epsilon(1e-8));
        CHECK(ry.estimates[i] == doctest::Approx(3.0).epsilon(1e-8));
    }
    for (auto op : {GraphDerivOp::dx, GraphDerivOp::dy, GraphDerivOp::dxx, GraphDerivOp::dyy}) {
        auto rc = graph_fdm_baseline(g, cst, op);
        for (double v : rc.estimates) CHECK(std::fabs(v) < 1e-10);
    }
}

TEST_CASE("graph baseline recovers quadratic curvature") {
    SpatialGraph g = grid_graph(7, 0.3, 8);
    std::vector<double> quad(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) quad[i] = g.nodes[i].x * g.nodes[i].x;
    auto r = graph_fdm_baseline(g, quad, GraphDerivOp::dxx);
    for (int i = 0; i < g.n_nodes(); ++i) {
        if (std::find(r.flagged_nodes.begin(), r.flagged_nodes.end(), i) != r.flagged_nodes.end())
            continue;
        CHECK(r.estimates[i] == doctest::Approx(2.0).epsilon(1e-6));
    }
}

TEST_CASE("underdetermined local fits are flagged, not NaN") {
    // k=3 neighbors + self = 4 points for 6 quadratic terms.
    SpatialGraph g = grid_graph(4, 0.5, 3);
    std::vector<double> u(g.n_nodes(), 1.0);
    auto r = graph_fdm_baseline(g, u, GraphDerivOp::dxx);
    CHECK(r.flagged_nodes.size() == static_cast<std::size_t>(g.n_nodes()));
    for (double v : r.estimates) {
        CHECK(std::isfinite(v));
        CHECK(v == 0.0);
    }
}

TEST_CASE("graph baseline converges under grid refinement") {
    auto max_err = [](int side, double h) {
        SpatialGraph g = grid_graph(side, h, 8);
        std::vector<double> u(g.n_nodes());
        for (int i = 0; i < g.n_nodes(); ++i) u[i] = std::sin(g.nodes[i].x) * std::sin(g.nodes[i].y);
        auto r = graph_fdm_baseline(g, u, GraphDerivOp::dx);
        double worst = 0.0;
        // Interior nodes: boundary fits are one-sided and first-order.
        for (int i = 0; i < g.n_nodes(); ++i) {
            const int row = i / side, col = i % side;
            if (row == 0 || col == 0 || row == side - 1 || col == side - 1) continue;
            const double want = std::cos(g.nodes[i].x) * std::sin(g.nodes[i].y);
            worst = std::max(worst, std::fabs(r.estimates[i] - want));
        }
        return worst;
    };
    const double coarse = max_err(9, 0.2);
    const double fine = max_err(17, 0.1);  // same physical extent, halved spacing
    CHECK(coarse / fine >= 3.0);
}
