#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

namespace metapde {

inline constexpr double kDomainSize = 6.283185307179586476925286766559;  // 2*pi

/// Configuration of one 2D convection-diffusion simulation on a periodic
/// square grid over [0, 2*pi)^2.
struct PdeConfig {
    double lambda = 1.0;       // velocity scale
    double diff_coeff = 0.2;   // D
    int fourier_cutoff = 9;    // F: initial condition sums |k|,|l| <= F
    double coeff_scale = 0.02; // scale of the normal law for the coefficients
    bool coeff_scale_is_variance = false;
    int grid_n = 100;
    double dt_solver = 5e-3;
    double dt_save = 0.01;     // must be an integer multiple of dt_solver
    int n_frames = 20;
    std::uint64_t seed = 0;
    // +1 integrates du/dt = +v.grad(u) + D*lap(u) as the task family is
    // defined; -1 gives the textbook transport sign.
    double convection_sign = 1.0;
    double cfl_safety = 0.9;

    void validate() const;
    double h() const { return kDomainSize / grid_n; }
    std::size_t cells() const { return static_cast<std::size_t>(grid_n) * grid_n; }

    nlohmann::json to_json() const;
    static PdeConfig from_json(const nlohmann::json& j);
};

/// Per-cell velocity components and the (constant) diffusion coefficient.
struct VelocityField {
    std::vector<double> a, b;  // x and y velocity per cell
    double c = 0.0;            // diffusion coefficient
    double max_speed = 0.0;    // max over cells of |a| + |b|
};

/// Fourier coefficients of the initial condition, in draw order
/// (k = -F..F outer, l = -F..F inner; lambda before gamma per pair).
struct FourierCoeffs {
    int cutoff = 0;
    std::vector<double> lam, gam;  // (2F+1)^2 each
    std::size_t index(int k, int l) const {
        const int w = 2 * cutoff + 1;
        return static_cast<std::size_t>(k + cutoff) * w + (l + cutoff);
    }
};

/// Fine-grid state over time: field values, their spatial derivatives and
/// cell coordinates.
struct GridField {
    int grid_n = 0;
    double dt_save = 0.0;
    std::vector<std::vector<double>> frames;                    // [T][n*n]
    std::vector<std::array<std::vector<double>, 4>> derivs;     // [T][ux,uy,uxx,uyy][n*n]
    std::vector<double> xs, ys;                                 // per-cell coordinates

    int n_frames() const { return static_cast<int>(frames.size()); }
    double h() const { return kDomainSize / grid_n; }
    std::size_t cell(int row, int col) const {
        return static_cast<std::size_t>(row) * grid_n + col;
    }
};

FourierCoeffs draw_fourier_coeffs(const PdeConfig& cfg, std::mt19937_64& rng);
/// Evaluate the double Fourier sum of `coeffs` on the grid.
std::vector<double> evaluate_fourier(const FourierCoeffs& coeffs, int grid_n);
std::vector<double> fourier_initial_condition(const PdeConfig& cfg, std::mt19937_64& rng,
                                              FourierCoeffs* coeffs_out = nullptr);

VelocityField velocity_field(const PdeConfig& cfg);

/// Largest admissible solver step for this velocity field (linear-stability
/// bound of the RK4 + central-difference scheme, times cfg.cfl_safety).
double max_stable_dt(const PdeConfig& cfg, const VelocityField& vel);

/// One RK4 step of du/dt = sign*(v.grad u) + D*lap(u), second-order central
/// differences, periodic boundaries. Throws if dt_solver exceeds the
/// stability bound or the result is non-finite.
void step(std::vector<double>& u, const VelocityField& vel, const PdeConfig& cfg);

GridField simulate(const PdeConfig& cfg);

/// Fourth-order central differences with periodic wraparound.
void compute_grid_derivatives(const std::vector<double>& u, int grid_n, double h,
                              std::array<std::vector<double>, 4>& out);

/// Directory export: meta.json plus per-frame binary files of 64-bit
/// little-endian doubles, row-major (u then the four derivative fields).
void export_gridfield(const GridField& grid, const PdeConfig& cfg,
                      const std::filesystem::path& dir);
GridField load_gridfield(const std::filesystem::path& dir, PdeConfig* cfg_out = nullptr);

/// SplitMix64; used to derive independent per-task seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace metapde
