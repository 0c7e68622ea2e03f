#include "stfno/swe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"
#include "stfno/spectral.hpp"

namespace stfno {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Signed wavenumber (radians per unit length) of FFT index j on an n-point axis with
// spacing d; the Nyquist index maps to 0 so derivative operators stay skew-symmetric.
double angular_k(std::size_t j, std::size_t n, double d) {
    if (n % 2 == 0 && j == n / 2) return 0.0;
    const long s = j <= n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
    return kTwoPi * static_cast<double>(s) / (static_cast<double>(n) * d);
}

class Derivatives {
public:
    explicit Derivatives(const Grid& g) : g_(g), h_(g.nx / 2 + 1) {
        kx_.resize(h_);
        ky_.resize(g.ny);
        for (std::size_t i = 0; i < h_; ++i) kx_[i] = angular_k(i, g.nx, g.dx);
        for (std::size_t j = 0; j < g.ny; ++j) ky_[j] = angular_k(j, g.ny, g.dy);
    }

    // Returns [deta/dx, deta/dy, div(a, b)] for fields eta, a, b.
    std::vector<double> grad_div(const std::vector<double>& eta, const std::vector<double>& a,
                                 const std::vector<double>& b) const {
        const std::size_t n = g_.points();
        std::vector<double> in(3 * n);
        std::copy(eta.begin(), eta.end(), in.begin());
        std::copy(a.begin(), a.end(), in.begin() + n);
        std::copy(b.begin(), b.end(), in.begin() + 2 * n);
        ComplexSpectrum s = dft_forward(in, 3, {g_.ny, g_.nx});
        ComplexSpectrum o = s;
        const std::size_t pb = g_.ny * h_;
        const cplx I(0.0, 1.0);
        for (std::size_t j = 0; j < g_.ny; ++j) {
            for (std::size_t i = 0; i < h_; ++i) {
                const std::size_t k = j * h_ + i;
                o.data[k] = I * kx_[i] * s.data[k];
                o.data[pb + k] = I * ky_[j] * s.data[k];
                o.data[2 * pb + k] = I * kx_[i] * s.data[pb + k] + I * ky_[j] * s.data[2 * pb + k];
            }
        }
        return dft_inverse(o);
    }

    // Returns [dq/dx, dq/dy].
    std::vector<double> grad(const std::vector<double>& q) const {
        ComplexSpectrum s = dft_forward(q, 1, {g_.ny, g_.nx});
        ComplexSpectrum o;
        o.batch = 2;
        o.dims = s.dims;
        const std::size_t pb = g_.ny * h_;
        o.data.resize(2 * pb);
        const cplx I(0.0, 1.0);
        for (std::size_t j = 0; j < g_.ny; ++j) {
            for (std::size_t i = 0; i < h_; ++i) {
                const std::size_t k = j * h_ + i;
                o.data[k] = I * kx_[i] * s.data[k];
                o.data[pb + k] = I * ky_[j] * s.data[k];
            }
        }
        return dft_inverse(o);
    }

private:
    Grid g_;
    std::size_t h_;
    std::vector<double> kx_, ky_;
};

struct Tendency {
    std::vector<double> eta, u, v;
};

Tendency rhs(const SWEState& s, std::span<const double> fx, std::span<const double> fy, const SWEConfig& c,
             const Derivatives& d) {
    const std::size_t n = c.grid.points();
    std::vector<double> hu(n), hv(n);
    for (std::size_t p = 0; p < n; ++p) {
        hu[p] = c.H[p] * s.u[p];
        hv[p] = c.H[p] * s.v[p];
    }
    const auto gd = d.grad_div(s.eta, hu, hv);
    Tendency t{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t p = 0; p < n; ++p) {
        const double ax = fx.empty() ? 0.0 : fx[p] / (c.rho0 * c.H[p]);
        const double ay = fy.empty() ? 0.0 : fy[p] / (c.rho0 * c.H[p]);
        t.u[p] = c.f * s.v[p] - c.g * gd[p] + ax - c.r * s.u[p];
        t.v[p] = -c.f * s.u[p] - c.g * gd[n + p] + ay - c.r * s.v[p];
        t.eta[p] = -gd[2 * n + p];
    }
    return t;
}

SWEState axpy(const SWEState& s, const Tendency& k, double h) {
    SWEState o = s;
    for (std::size_t p = 0; p < s.eta.size(); ++p) {
        o.eta[p] += h * k.eta[p];
        o.u[p] += h * k.u[p];
        o.v[p] += h * k.v[p];
    }
    return o;
}

void check_state(const SWEState& s, const Grid& g) {
    const std::size_t n = g.points();
    require(s.eta.size() == n && s.u.size() == n && s.v.size() == n, "state size does not match the grid");
}

void check_finite_state(const SWEState& s) {
    for (const auto* f : {&s.eta, &s.u, &s.v}) {
        for (std::size_t p = 0; p < f->size(); ++p) {
            if (!std::isfinite((*f)[p])) throw NumericFailure("non-finite shallow-water state", "swe_step", p);
        }
    }
}

const Derivatives& derivatives_for(const Grid& g) {
    thread_local std::deque<std::pair<Grid, Derivatives>> cache;  // stable references
    for (const auto& [grid, d] : cache) {
        if (grid == g) return d;
    }
    cache.emplace_back(g, Derivatives(g));
    return cache.back().second;
}

}  // namespace

void SWEConfig::validate() const {
    grid.validate();
    require(grid.periodic_x && grid.periodic_y, "shallow-water solver requires a periodic grid");
    require(H.size() == grid.points(), "depth field size does not match the grid");
    for (double h : H) require(std::isfinite(h) && h > 0.0, "depth must be positive everywhere");
    require(g > 0.0 && rho0 > 0.0, "g and rho0 must be positive");
    require(r >= 0.0 && std::isfinite(f), "damping must be non-negative");
    require(dt_solver > 0.0, "dt_solver must be positive");
    require(cfl() < 1.0, "CFL violated: dt*sqrt(g*max H)*(1/dx + 1/dy) = " + std::to_string(cfl()));
}

double SWEConfig::cfl() const {
    const double hmax = H.empty() ? 0.0 : *std::max_element(H.begin(), H.end());
    return dt_solver * std::sqrt(g * hmax) * (1.0 / grid.dx + 1.0 / grid.dy);
}

bool SWEConfig::flat() const {
    return !H.empty() && std::all_of(H.begin(), H.end(), [&](double h) { return h == H.front(); });
}

SWEConfig SWEConfig::with_flat_depth(Grid grid, double depth) {
    SWEConfig c;
    c.grid = grid;
    c.H.assign(grid.points(), depth);
    return c;
}

SWEState SWEState::zeros(const Grid& grid) {
    const std::size_t n = grid.points();
    return SWEState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0};
}

SWEState swe_step(const SWEState& s, std::span<const double> fx, std::span<const double> fy, const SWEConfig& c) {
    c.validate();
    check_state(s, c.grid);
    require(fx.empty() || fx.size() == c.grid.points(), "Fx size does not match the grid");
    require(fy.empty() || fy.size() == c.grid.points(), "Fy size does not match the grid");
    const Derivatives& d = derivatives_for(c.grid);
    const double h = c.dt_solver;
    const Tendency k1 = rhs(s, fx, fy, c, d);
    const Tendency k2 = rhs(axpy(s, k1, h / 2), fx, fy, c, d);
    const Tendency k3 = rhs(axpy(s, k2, h / 2), fx, fy, c, d);
    const Tendency k4 = rhs(axpy(s, k3, h), fx, fy, c, d);
    SWEState o = s;
    for (std::size_t p = 0; p < s.eta.size(); ++p) {
        o.eta[p] += h / 6 * (k1.eta[p] + 2 * k2.eta[p] + 2 * k3.eta[p] + k4.eta[p]);
        o.u[p] += h / 6 * (k1.u[p] + 2 * k2.u[p] + 2 * k3.u[p] + k4.u[p]);
        o.v[p] += h / 6 * (k1.v[p] + 2 * k2.v[p] + 2 * k3.v[p] + k4.v[p]);
    }
    o.t = s.t + h;
    check_finite_state(o);
    return o;
}

double swe_energy(const SWEState& s, const SWEConfig& c) {
    check_state(s, c.grid);
    require(c.H.size() == c.grid.points(), "depth field size does not match the grid");
    double e = 0.0;
    for (std::size_t p = 0; p < s.eta.size(); ++p) {
        e += c.H[p] * (s.u[p] * s.u[p] + s.v[p] * s.v[p]) + c.g * s.eta[p] * s.eta[p];
    }
    return 0.5 * e * c.grid.dx * c.grid.dy;
}

double dispersion_omega(double kx, double ky, const SWEConfig& c) {
    require(c.flat(), "dispersion relation needs a flat depth field");
    return std::sqrt(c.f * c.f + c.g * c.H.front() * (kx * kx + ky * ky));
}

void ForcingConfig::validate() const {
    require(wind_amplitude >= 0.0 && pressure_amplitude >= 0.0, "forcing amplitudes must be non-negative");
    require(ar >= 0.0 && ar < 1.0, "forcing AR(1) coefficient must lie in [0, 1)");
    require(corr_length >= 0.0, "forcing correlation length must be non-negative");
}

std::vector<double> smooth_noise(const Grid& grid, double corr_length, std::mt19937_64& rng) {
    grid.validate();
    const std::size_t n = grid.points();
    std::normal_distribution<double> nd;
    std::vector<double> w(n);
    for (auto& x : w) x = nd(rng);
    if (corr_length <= 0.0) return w;

    ComplexSpectrum s = dft_forward(w, 1, {grid.ny, grid.nx});
    const std::size_t h = grid.nx / 2 + 1;
    // Unit white noise filtered by G has variance mean_k |G(k)|^2 over the full spectrum.
    double power = 0.0;
    for (std::size_t j = 0; j < grid.ny; ++j) {
        const long sj = j <= grid.ny / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(grid.ny);
        const double ky = kTwoPi * static_cast<double>(sj) / (static_cast<double>(grid.ny) * grid.dy);
        for (std::size_t i = 0; i < grid.nx; ++i) {
            const long si = i <= grid.nx / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(grid.nx);
            const double kx = kTwoPi * static_cast<double>(si) / (static_cast<double>(grid.nx) * grid.dx);
            const double gk = std::exp(-0.5 * (kx * kx + ky * ky) * corr_length * corr_length);
            power += gk * gk;
            if (i < h) s.data[j * h + i] *= gk;
        }
    }
    const double scale = 1.0 / std::sqrt(power / static_cast<double>(n));
    auto out = dft_inverse(s);
    for (auto& x : out) x *= scale;
    return out;
}

FieldStack gen_forcing(const ForcingConfig& config, const Grid& grid, std::size_t steps, std::mt19937_64& rng) {
    config.validate();
    grid.validate();
    FieldStack fs({"wind_u", "wind_v", "pressure"}, steps, grid);
    const double amp[3] = {config.wind_amplitude, config.wind_amplitude, config.pressure_amplitude};
    const double a = config.ar, b = std::sqrt(1.0 - config.ar * config.ar);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t c = 0; c < 3; ++c) {
            const auto xi = smooth_noise(grid, config.corr_length, rng);
            auto dst = fs.slice(c, t);
            if (t == 0) {
                for (std::size_t p = 0; p < xi.size(); ++p) dst[p] = amp[c] * xi[p];
            } else {
                auto prev = fs.slice(c, t - 1);
                for (std::size_t p = 0; p < xi.size(); ++p) dst[p] = a * prev[p] + b * amp[c] * xi[p];
            }
        }
    }
    return fs;
}

void GenConfig::validate() const {
    SWEConfig probe = swe;
    probe.H = make_depth(*this);
    probe.validate();
    forcing.validate();
    require(tracer.damping >= 0.0 && tracer.amplitude >= 0.0, "tracer damping and amplitude must be non-negative");
    require(tracer.ar >= 0.0 && tracer.ar < 1.0, "tracer AR(1) coefficient must lie in [0, 1)");
    require(sample_dt > 0.0 && spinup >= 0.0, "sample_dt must be positive and spinup non-negative");
    substeps();
    if (land_box) {
        const auto& b = *land_box;
        require(b[0] < b[1] && b[1] <= swe.grid.ny && b[2] < b[3] && b[3] <= swe.grid.nx,
                "land_box must be [y0, y1, x0, x1] inside the grid");
    }
}

std::size_t GenConfig::substeps() const {
    const double q = sample_dt / swe.dt_solver;
    const double n = std::round(q);
    require(n >= 1.0 && std::abs(q - n) < 1e-9 * q, "sample_dt must be a whole number (>= 1) of solver steps");
    return static_cast<std::size_t>(n);
}

std::vector<double> make_depth(const GenConfig& gen) {
    require(gen.depth_mean > 0.0, "depth_mean must be positive");
    require(gen.depth_variation >= 0.0 && gen.depth_variation < 0.4, "depth_variation must lie in [0, 0.4)");
    std::mt19937_64 rng(gen.depth_seed);
    const auto n = smooth_noise(gen.swe.grid, gen.depth_corr_length, rng);
    std::vector<double> H(n.size());
    for (std::size_t p = 0; p < n.size(); ++p) {
        H[p] = gen.depth_mean * (1.0 + gen.depth_variation * std::clamp(n[p], -2.5, 2.5));
    }
    return H;
}

const std::vector<std::string>& input_channel_names() {
    static const std::vector<std::string> names{"sea_level", "sst", "sss", "pressure", "wind_u", "wind_v", "depth"};
    return names;
}

namespace {

// Damped tracer advected by (u, v) with a slowly varying source; Heun step with the
// velocity frozen over the step.
// First-order upwind advection with Heun stepping: monotone and stable for |u| dt / dx <= 1,
// which the pseudo-spectral form is not once the tracer develops grid-scale structure.
void tracer_step(std::vector<double>& q, const std::vector<double>& u, const std::vector<double>& v,
                 std::span<const double> src, double damping, double h, const Grid& g) {
    const std::size_t nx = g.nx, ny = g.ny, n = q.size();
    auto tend = [&](const std::vector<double>& x) {
        std::vector<double> t(n);
        for (std::size_t y = 0; y < ny; ++y) {
            const std::size_t yp = (y + 1) % ny, ym = (y + ny - 1) % ny;
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t p = y * nx + i, xp = y * nx + (i + 1) % nx, xm = y * nx + (i + nx - 1) % nx;
                const double qx = u[p] > 0.0 ? (x[p] - x[xm]) / g.dx : (x[xp] - x[p]) / g.dx;
                const double qy = v[p] > 0.0 ? (x[p] - x[ym * nx + i]) / g.dy : (x[yp * nx + i] - x[p]) / g.dy;
                t[p] = -(u[p] * qx + v[p] * qy) - damping * x[p] + src[p];
            }
        }
        return t;
    };
    const auto k1 = tend(q);
    std::vector<double> q1(n);
    for (std::size_t p = 0; p < n; ++p) q1[p] = q[p] + h * k1[p];
    const auto k2 = tend(q1);
    for (std::size_t p = 0; p < n; ++p) q[p] += 0.5 * h * (k1[p] + k2[p]);
}

}  // namespace

GeneratedData generate(const GenConfig& gen0) {
    GenConfig gen = gen0;
    gen.swe.H = make_depth(gen0);
    gen.validate();
    const SWEConfig& c = gen.swe;
    const Grid& g = c.grid;
    const std::size_t np = g.points(), sub = gen.substeps();
    const std::size_t spin = static_cast<std::size_t>(std::llround(gen.spinup / gen.sample_dt));
    const std::size_t total = spin + gen.samples;

    std::mt19937_64 frng(gen.forcing.seed);
    const FieldStack forcing = gen_forcing(gen.forcing, g, total, frng);
    std::mt19937_64 trng(gen.forcing.seed ^ 0x9e3779b97f4a7c15ULL);
    ForcingConfig tcfg{gen.tracer.amplitude, gen.tracer.corr_length, gen.tracer.ar, gen.tracer.amplitude, 0};
    const FieldStack sources = gen_forcing(tcfg, g, total, trng);  // wind_u -> sst source, wind_v -> sss source

    GeneratedData out;
    const double t0 = static_cast<double>(spin) * gen.sample_dt;
    out.inputs = FieldStack(input_channel_names(), gen.samples, g, gen.sample_dt, t0);
    out.target = FieldStack({"sea_level"}, gen.samples, g, gen.sample_dt, t0);
    out.mask = LandMask::all_ocean(g);
    if (gen.land_box) {
        const auto& b = *gen.land_box;
        for (std::size_t y = b[0]; y < b[1]; ++y) {
            for (std::size_t x = b[2]; x < b[3]; ++x) out.mask.land[y * g.nx + x] = 1;
        }
    }

    SWEState s = SWEState::zeros(g);
    std::vector<double> sst(np, 0.0), sss(np, 0.0);
    for (std::size_t n = 0; n < total; ++n) {
        if (n >= spin) {
            const std::size_t k = n - spin;
            const std::span<const double> fields[7] = {s.eta, sst, sss, forcing.slice(2, n), forcing.slice(0, n),
                                                       forcing.slice(1, n), c.H};
            for (std::size_t ch = 0; ch < 7; ++ch) std::copy(fields[ch].begin(), fields[ch].end(), out.inputs.slice(ch, k).begin());
            std::copy(s.eta.begin(), s.eta.end(), out.target.slice(0, k).begin());
        }
        for (std::size_t j = 0; j < sub; ++j) {
            // Sub-step the tracers whenever the advective Courant number exceeds 0.8.
            double cfl = 0.0;
            for (std::size_t p = 0; p < np; ++p) {
                cfl = std::max(cfl, (std::abs(s.u[p]) / g.dx + std::abs(s.v[p]) / g.dy) * c.dt_solver);
            }
            const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfl / 0.8)));
            const double h = c.dt_solver / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                tracer_step(sst, s.u, s.v, sources.slice(0, n), gen.tracer.damping, h, g);
                tracer_step(sss, s.u, s.v, sources.slice(1, n), gen.tracer.damping, h, g);
            }
            s = swe_step(s, forcing.slice(0, n), forcing.slice(1, n), c);
        }
    }
    return out;
}

GeneratedData generate_dataset(const GenConfig& gen, const std::filesystem::path& out, const std::string& config_json) {
    GeneratedData d = generate(gen);
    std::filesystem::create_directories(out);
    write_fst(out / "inputs.fst", d.inputs);
    write_fst(out / "target.fst", d.target);
    write_mask(out / "mask.fst", d.mask, d.inputs.grid());

    nlohmann::ordered_json m;
    m["files"] = {{"inputs", "inputs.fst"}, {"target", "target.fst"}, {"mask", "mask.fst"}};
    m["channels"] = {{"inputs", d.inputs.names()}, {"target", d.target.names()}};
    m["samples"] = gen.samples;
    m["sample_dt"] = gen.sample_dt;
    m["t0"] = d.inputs.t0();
    m["substeps"] = gen.substeps();
    m["seeds"] = {{"forcing", gen.forcing.seed}, {"depth", gen.depth_seed}};
    m["config"] = nlohmann::ordered_json::parse(config_json);
    std::ofstream os(out / "manifest.json");
    os << m.dump(2) << '\n';
    if (!os) throw FormatError("failed writing manifest.json");
    return d;
}

}  // namespace stfno
