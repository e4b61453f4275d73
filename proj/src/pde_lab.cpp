#include "metapde/pde_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "metapde/param_store.hpp"

namespace metapde {

void PdeConfig::validate() const {
    if (grid_n < 16) throw std::invalid_argument("pde config: grid_n must be >= 16");
    if (dt_solver <= 0.0) throw std::invalid_argument("pde config: dt_solver must be positive");
    if (n_frames < 1) throw std::invalid_argument("pde config: n_frames must be >= 1");
    if (fourier_cutoff < 0) throw std::invalid_argument("pde config: fourier_cutoff must be >= 0");
    if (diff_coeff < 0.0) throw std::invalid_argument("pde config: diff_coeff must be >= 0");
    if (coeff_scale < 0.0) throw std::invalid_argument("pde config: coeff_scale must be >= 0");
    const double ratio = dt_save / dt_solver;
    if (dt_save <= 0.0 || std::fabs(ratio - std::round(ratio)) > 1e-9 * ratio + 1e-12) {
        throw std::invalid_argument("pde config: dt_save must be an integer multiple of dt_solver");
    }
    if (convection_sign != 1.0 && convection_sign != -1.0) {
        throw std::invalid_argument("pde config: convection_sign must be +1 or -1");
    }
    if (cfl_safety <= 0.0 || cfl_safety > 1.0) {
        throw std::invalid_argument("pde config: cfl_safety must be in (0,1]");
    }
}

nlohmann::json PdeConfig::to_json() const {
    return nlohmann::json{{"lambda", lambda},
                          {"diff_coeff", diff_coeff},
                          {"fourier_cutoff", fourier_cutoff},
                          {"coeff_scale", coeff_scale},
                          {"coeff_scale_is_variance", coeff_scale_is_variance},
                          {"grid_n", grid_n},
                          {"dt_solver", dt_solver},
                          {"dt_save", dt_save},
                          {"n_frames", n_frames},
                          {"seed", seed},
                          {"convection_sign", convection_sign},
                          {"cfl_safety", cfl_safety}};
}

PdeConfig PdeConfig::from_json(const nlohmann::json& j) {
    PdeConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "lambda") cfg.lambda = val.get<double>();
        else if (key == "diff_coeff") cfg.diff_coeff = val.get<double>();
        else if (key == "fourier_cutoff") cfg.fourier_cutoff = val.get<int>();
        else if (key == "coeff_scale") cfg.coeff_scale = val.get<double>();
        else if (key == "coeff_scale_is_variance") cfg.coeff_scale_is_variance = val.get<bool>();
        else if (key == "grid_n") cfg.grid_n = val.get<int>();
        else if (key == "dt_solver") cfg.dt_solver = val.get<double>();
        else if (key == "dt_save") cfg.dt_save = val.get<double>();
        else if (key == "n_frames") cfg.n_frames = val.get<int>();
        else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
        else if (key == "convection_sign") cfg.convection_sign = val.get<double>();
        else if (key == "cfl_safety") cfg.cfl_safety = val.get<double>();
        else throw std::invalid_argument("pde config: unknown key '" + key + "'");
    }
    return cfg;
}

FourierCoeffs draw_fourier_coeffs(const PdeConfig& cfg, std::mt19937_64& rng) {
    const double sd =
        cfg.coeff_scale_is_variance ? std::sqrt(cfg.coeff_scale) : cfg.coeff_scale;
    std::normal_distribution<double> normal(0.0, sd);
    FourierCoeffs coeffs;
    coeffs.cutoff = cfg.fourier_cutoff;
    const int w = 2 * cfg.fourier_cutoff + 1;
    coeffs.lam.resize(static_cast<std::size_t>(w) * w);
    coeffs.gam.resize(static_cast<std::size_t>(w) * w);
    for (int k = -cfg.fourier_cutoff; k <= cfg.fourier_cutoff; ++k) {
        for (int l = -cfg.fourier_cutoff; l <= cfg.fourier_cutoff; ++l) {
            const std::size_t i = coeffs.index(k, l);
            coeffs.lam[i] = sd == 0.0 ? 0.0 : normal(rng);
            coeffs.gam[i] = sd == 0.0 ? 0.0 : normal(rng);
        }
    }
    return coeffs;
}

std::vector<double> evaluate_fourier(const FourierCoeffs& coeffs, int grid_n) {
    const double h = kDomainSize / grid_n;
    const int F = coeffs.cutoff;
    std::vector<double> u(static_cast<std::size_t>(grid_n) * grid_n, 0.0);
    for (int row = 0; row < grid_n; ++row) {
        const double y = row * h;
        for (int col = 0; col < grid_n; ++col) {
            const double x = col * h;
            double acc = 0.0;
            for (int k = -F; k <= F; ++k) {
                for (int l = -F; l <= F; ++l) {
                    const std::size_t i = coeffs.index(k, l);
                    const double phase = k * x + l * y;
                    acc += coeffs.lam[i] * std::cos(phase) + coeffs.gam[i] * std::sin(phase);
                }
            }
            u[static_cast<std::size_t>(row) * grid_n + col] = acc;
        }
    }
    return u;
}

std::vector<double> fourier_initial_condition(const PdeConfig& cfg, std::mt19937_64& rng,
                                              FourierCoeffs* coeffs_out) {
    FourierCoeffs coeffs = draw_fourier_coeffs(cfg, rng);
    std::vector<double> u = evaluate_fourier(coeffs, cfg.grid_n);
    if (coeffs_out) *coeffs_out = std::move(coeffs);
    return u;
}

VelocityField velocity_field(const PdeConfig& cfg) {
    const int n = cfg.grid_n;
    const double h = cfg.h();
    VelocityField vel;
    vel.a.resize(cfg.cells());
    vel.b.resize(cfg.cells());
    vel.c = cfg.diff_coeff;
    for (int row = 0; row < n; ++row) {
        const double y = row * h;
        for (int col = 0; col < n; ++col) {
            const double x = col * h;
            const std::size_t i = static_cast<std::size_t>(row) * n + col;
            vel.a[i] = 0.5 * cfg.lambda * (std::cos(y) + x * (kDomainSize - x) * std::sin(x)) + 0.6;
            vel.b[i] = 2.0 * cfg.lambda * (std::cos(y) + std::sin(x)) + 0.8;
            vel.max_speed = std::max(vel.max_speed, std::fabs(vel.a[i]) + std::fabs(vel.b[i]));
        }
    }
    return vel;
}

double max_stable_dt(const PdeConfig& cfg, const VelocityField& vel) {
    const double h = cfg.h();
    // RK4 linear-stability intervals: real axis 2.785, imaginary axis 2*sqrt(2).
    // The 2D five-point Laplacian spectrum reaches -8/h^2, the central
    // convection spectrum +/- i*(|a|+|b|)/h.
    double limit = std::numeric_limits<double>::infinity();
    if (vel.c > 0.0) limit = std::min(limit, 2.785 * h * h / (8.0 * vel.c));
    if (vel.max_speed > 0.0) limit = std::min(limit, 2.0 * std::sqrt(2.0) * h / vel.max_speed);
    return cfg.cfl_safety * limit;
}

namespace {

void rhs(const std::vector<double>& u, const VelocityField& vel, const PdeConfig& cfg,
         std::vector<double>& out) {
    const int n = cfg.grid_n;
    const double h = cfg.h();
    const double inv2h = 1.0 / (2.0 * h);
    const double invh2 = 1.0 / (h * h);
    const double sign = cfg.convection_sign;
    const double D = vel.c;
    for (int row = 0; row < n; ++row) {
        const int rm = row == 0 ? n - 1 : row - 1;
        const int rp = row == n - 1 ? 0 : row + 1;
        const std::size_t base = static_cast<std::size_t>(row) * n;
        const std::size_t bm = static_cast<std::size_t>(rm) * n;
        const std::size_t bp = static_cast<std::size_t>(rp) * n;
        for (int col = 0; col < n; ++col) {
            const int cm = col == 0 ? n - 1 : col - 1;
            const int cp = col == n - 1 ? 0 : col + 1;
            const double uc = u[base + col];
            const double ux = (u[base + cp] - u[base + cm]) * inv2h;
            const double uy = (u[bp + col] - u[bm + col]) * inv2h;
            const double lap =
                (u[base + cp] + u[base + cm] + u[bp + col] + u[bm + col] - 4.0 * uc) * invh2;
            out[base + col] = sign * (vel.a[base + col] * ux + vel.b[base + col] * uy) + D * lap;
        }
    }
}

void check_frame_finite(const std::vector<double>& u, const char* where) {
    for (double v : u) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("pde solver: non-finite value during ") + where);
        }
    }
}

}  // namespace

void step(std::vector<double>& u, const VelocityField& vel, const PdeConfig& cfg) {
    const double dt = cfg.dt_solver;
    const double dt_max = max_stable_dt(cfg, vel);
    if (dt > dt_max) {
        throw std::invalid_argument("pde solver: dt_solver " + fmt_g17(dt) +
                                    " exceeds the maximum admissible step " + fmt_g17(dt_max));
    }
    check_frame_finite(u, "step input");
    const std::size_t m = u.size();
    std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
    rhs(u, vel, cfg, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
    rhs(tmp, vel, cfg, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
    rhs(tmp, vel, cfg, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + dt * k3[i];
    rhs(tmp, vel, cfg, k4);
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < m; ++i) {
        u[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_frame_finite(u, "step result");
}

void compute_grid_derivatives(const std::vector<double>& u, int grid_n, double h,
                              std::array<std::vector<double>, 4>& out) {
    const int n = grid_n;
    for (auto& f : out) f.assign(u.size(), 0.0);
    const double c1 = 1.0 / (12.0 * h);
    const double c2 = 1.0 / (12.0 * h * h);
    auto wrap = [n](int i) { return ((i % n) + n) % n; };
    for (int row = 0; row < n; ++row) {
        const std::size_t rbase = static_cast<std::size_t>(row) * n;
        const std::size_t rm1 = static_cast<std::size_t>(wrap(row - 1)) * n;
        const std::size_t rm2 = static_cast<std::size_t>(wrap(row - 2)) * n;
        const std::size_t rp1 = static_cast<std::size_t>(wrap(row + 1)) * n;
        const std::size_t rp2 = static_cast<std::size_t>(wrap(row + 2)) * n;
        for (int col = 0; col < n; ++col) {
            const int cm1 = wrap(col - 1), cm2 = wrap(col - 2);
            const int cp1 = wrap(col + 1), cp2 = wrap(col + 2);
            const std::size_t i = rbase + col;
            const double uc = u[i];
            out[0][i] = (-u[rbase + cp2] + 8.0 * u[rbase + cp1] - 8.0 * u[rbase + cm1] +
                         u[rbase + cm2]) * c1;
            out[1][i] = (-u[rp2 + col] + 8.0 * u[rp1 + col] - 8.0 * u[rm1 + col] +
                         u[rm2 + col]) * c1;
            out[2][i] = (-u[rbase + cp2] + 16.0 * u[rbase + cp1] - 30.0 * uc +
                         16.0 * u[rbase + cm1] - u[rbase + cm2]) * c2;
            out[3][i] = (-u[rp2 + col] + 16.0 * u[rp1 + col] - 30.0 * uc +
                         16.0 * u[rm1 + col] - u[rm2 + col]) * c2;
        }
    }
}

GridField simulate(const PdeConfig& cfg) {
    cfg.validate();
    const VelocityField vel = velocity_field(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> u = fourier_initial_condition(cfg, rng);

    GridField grid;
    grid.grid_n = cfg.grid_n;
    grid.dt_save = cfg.dt_save;
    grid.xs.resize(cfg.cells());
    grid.ys.resize(cfg.cells());
    const double h = cfg.h();
    for (int row = 0; row < cfg.grid_n; ++row) {
        for (int col = 0; col < cfg.grid_n; ++col) {
            grid.xs[grid.cell(row, col)] = col * h;
            grid.ys[grid.cell(row, col)] = row * h;
        }
    }

    const int steps_per_save = static_cast<int>(std::round(cfg.dt_save / cfg.dt_solver));
    grid.frames.reserve(cfg.n_frames);
    grid.derivs.resize(cfg.n_frames);
    grid.frames.push_back(u);
    compute_grid_derivatives(u, cfg.grid_n, h, grid.derivs[0]);
    for (int f = 1; f < cfg.n_frames; ++f) {
        for (int s = 0; s < steps_per_save; ++s) step(u, vel, cfg);
        grid.frames.push_back(u);
        compute_grid_derivatives(u, cfg.grid_n, h, grid.derivs[f]);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// directory export
// ---------------------------------------------------------------------------

namespace {
constexpr int kGridFormatVersion = 1;

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("grid import: truncated frame file");
}

std::string frame_name(int f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.bin", f);
    return buf;
}
}  // namespace

void export_gridfield(const GridField& grid, const PdeConfig& cfg,
                      const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta{{"format_version", kGridFormatVersion},
                        {"solver", "rk4-cd2"},
                        {"byte_order", "little-endian"},
                        {"layout", "row-major u,ux,uy,uxx,uyy per frame"},
                        {"n_frames", grid.n_frames()},
                        {"pde", cfg.to_json()}};
    std::ofstream mo(dir / "meta.json");
    if (!mo) throw std::runtime_error("grid export: cannot write meta.json");
    mo << meta.dump(2) << "\n";
    for (int f = 0; f < grid.n_frames(); ++f) {
        std::ofstream out(dir / frame_name(f), std::ios::binary);
        if (!out) throw std::runtime_error("grid export: cannot write frame file");
        write_doubles(out, grid.frames[f]);
        for (const auto& d : grid.derivs[f]) write_doubles(out, d);
    }
}

GridField load_gridfield(const std::filesystem::path& dir, PdeConfig* cfg_out) {
    std::ifstream mi(dir / "meta.json");
    if (!mi) throw std::runtime_error("grid import: cannot open meta.json in " + dir.string());
    nlohmann::json meta = nlohmann::json::parse(mi);
    if (meta.at("format_version").get<int>() != kGridFormatVersion) {
        throw std::runtime_error("grid import: unsupported format version");
    }
    PdeConfig cfg = PdeConfig::from_json(meta.at("pde"));
    if (cfg_out) *cfg_out = cfg;
    GridField grid;
    grid.grid_n = cfg.grid_n;
    grid.dt_save = cfg.dt_save;
    const int T = meta.at("n_frames").get<int>();
    const double h = cfg.h();
    grid.xs.resize(cfg.cells());
    grid.ys.resize(cfg.cells());
    for (int row = 0; row < cfg.grid_n; ++row) {
        for (int col = 0; col < cfg.grid_n; ++col) {
            grid.xs[grid.cell(row, col)] = col * h;
            grid.ys[grid.cell(row, col)] = row * h;
        }
    }
    grid.frames.assign(T, std::vector<double>(cfg.cells()));
    grid.derivs.assign(T, {});
    for (int f = 0; f < T; ++f) {
        std::ifstream in(dir / frame_name(f), std::ios::binary);
        if (!in) throw std::runtime_error("grid import: missing " + frame_name(f));
        read_doubles(in, grid.frames[f]);
        for (auto& d : grid.derivs[f]) {
            d.resize(cfg.cells());
            read_doubles(in, d);
        }
    }
    return grid;
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace metapde
