#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stfno/grid.hpp"

namespace stfno {

/// Linearized rotating shallow water on a periodic grid:
///   du/dt =  f v - g deta/dx + Fx / (rho0 H) - r u
///   dv/dt = -f u - g deta/dy + Fy / (rho0 H) - r v
///   deta/dt = -div(H (u, v))
/// Spatial derivatives are spectral; time stepping is classical RK4.
struct SWEConfig {
    Grid grid{64, 64, 1.0, 1.0, true, true};
    double g = 1.0;
    std::vector<double> H;  // [ny * nx], > 0
    double f = 0.1;
    double r = 0.0;
    double dt_solver = 0.25;
    double rho0 = 1000.0;

    void validate() const;
    double cfl() const;
    bool flat() const;

    static SWEConfig with_flat_depth(Grid grid, double depth);
};

struct SWEState {
    std::vector<double> eta, u, v;
    double t = 0.0;

    static SWEState zeros(const Grid& grid);
};

/// One RK4 step under wind stress (Fx, Fy) held constant over the step; empty spans mean zero.
SWEState swe_step(const SWEState& s, std::span<const double> fx, std::span<const double> fy, const SWEConfig& c);

/// E = 1/2 sum (H (u^2 + v^2) + g eta^2) dx dy.
double swe_energy(const SWEState& s, const SWEConfig& c);

/// Poincare branch omega = sqrt(f^2 + g H |k|^2) for wavenumbers in radians per unit length.
double dispersion_omega(double kx, double ky, const SWEConfig& c);

struct ForcingConfig {
    double wind_amplitude = 10.0;     // stress std
    double corr_length = 6.0;         // Gaussian kernel length, grid units of the fine grid
    double ar = 0.9;                  // AR(1) coefficient per sample interval
    double pressure_amplitude = 1.0;  // anomaly std
    std::uint64_t seed = 1;

    void validate() const;
};

/// Spatially smoothed, unit-variance-normalized white noise evolved by AR(1):
///   x_0 = xi_0, x_{n+1} = a x_n + sqrt(1 - a^2) xi_{n+1}.
/// Channels wind_u, wind_v (stress) and pressure, one slice per step.
FieldStack gen_forcing(const ForcingConfig& config, const Grid& grid, std::size_t steps, std::mt19937_64& rng);

/// Unit-variance Gaussian-smoothed random field on a periodic grid.
std::vector<double> smooth_noise(const Grid& grid, double corr_length, std::mt19937_64& rng);

struct TracerConfig {
    double damping = 0.02;      // relaxation rate
    double amplitude = 1.0;     // source std
    double ar = 0.98;           // source AR(1) coefficient (low frequency)
    double corr_length = 8.0;
};

struct GenConfig {
    /// Damped (r = 0.02) so the forced response is statistically stationary.
    SWEConfig swe = [] {
        SWEConfig c;
        c.r = 0.02;
        return c;
    }();
    ForcingConfig forcing;
    TracerConfig tracer;
    double depth_mean = 1.0;
    double depth_variation = 0.2;   // relative std of the smooth depth anomaly
    double depth_corr_length = 10.0;
    std::uint64_t depth_seed = 7;
    std::size_t samples = 2400;     // output slices
    double sample_dt = 2.0;         // must be a whole number of solver steps
    double spinup = 300.0;          // discarded before the first output slice
    /// Optional land rectangle [y0, y1) x [x0, x1) written to mask.fst (loss masking only).
    std::optional<std::array<std::size_t, 4>> land_box;

    void validate() const;
    std::size_t substeps() const;
};

/// Smooth positive depth field from the generator settings.
std::vector<double> make_depth(const GenConfig& gen);

/// Channel order of generated input stacks.
const std::vector<std::string>& input_channel_names();

struct GeneratedData {
    FieldStack inputs;  // sea_level, sst, sss, pressure, wind_u, wind_v, depth
    FieldStack target;  // sea_level
    LandMask mask;
};

/// Runs the solver; slice n holds the state at spinup + n * sample_dt and the forcing held
/// over the following interval. `gen.swe.H` is replaced by make_depth(gen).
GeneratedData generate(const GenConfig& gen);

/// generate() and write inputs.fst, target.fst, mask.fst and manifest.json to `out`.
/// `config_json` is embedded in the manifest verbatim.
GeneratedData generate_dataset(const GenConfig& gen, const std::filesystem::path& out, const std::string& config_json);

}  // namespace stfno
