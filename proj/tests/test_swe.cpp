#include "doctest.h"

#include <complex>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"
#include "stfno/swe.hpp"

using namespace stfno;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Right-going plane wave eta = cos(k x), u = sqrt(g/H) eta along x.
SWEState plane_wave(const SWEConfig& c, double k) {
    SWEState s = SWEState::zeros(c.grid);
    for (std::size_t y = 0; y < c.grid.ny; ++y) {
        for (std::size_t x = 0; x < c.grid.nx; ++x) {
            const double e = std::cos(k * static_cast<double>(x) * c.grid.dx);
            s.eta[y * c.grid.nx + x] = e;
            s.u[y * c.grid.nx + x] = std::sqrt(c.g / c.H[0]) * e;
        }
    }
    return s;
}

// Phase of the k-component of eta along the first row.
double row_phase(const SWEState& s, const SWEConfig& c, double k) {
    double a = 0.0, b = 0.0;
    for (std::size_t x = 0; x < c.grid.nx; ++x) {
        const double X = static_cast<double>(x) * c.grid.dx;
        a += s.eta[x] * std::cos(k * X);
        b += s.eta[x] * std::sin(k * X);
    }
    return std::atan2(b, a);
}

double wrap(double a) { return std::remainder(a, 2.0 * kPi); }

// Phase error after `periods` wave periods on an n-point periodic domain of length L.
double plane_wave_phase_error(std::size_t n, double L, double dt, double periods) {
    SWEConfig c = SWEConfig::with_flat_depth(Grid{n, n, L / static_cast<double>(n), L / static_cast<double>(n)}, 1.0);
    c.f = 0.0;
    c.dt_solver = dt;
    const double k = 2.0 * kPi / L;
    const double omega = dispersion_omega(k, 0.0, c);
    const double T = periods * 2.0 * kPi / omega;
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    SWEState s = plane_wave(c, k);
    for (std::size_t i = 0; i < steps; ++i) s = swe_step(s, {}, {}, c);
    // eta = cos(k x - omega t): the projection phase is omega t.
    const double expected = omega * static_cast<double>(steps) * dt;
    return std::abs(wrap(row_phase(s, c, k) - expected)) / expected;
}

SWEState smooth_state(const Grid& g) {
    SWEState s = SWEState::zeros(g);
    for (std::size_t y = 0; y < g.ny; ++y) {
        for (std::size_t x = 0; x < g.nx; ++x) {
            const double a = 2.0 * kPi * static_cast<double>(x) / static_cast<double>(g.nx);
            const double b = 2.0 * kPi * static_cast<double>(y) / static_cast<double>(g.ny);
            const std::size_t p = y * g.nx + x;
            s.eta[p] = std::cos(a + 2.0 * b) + 0.5 * std::sin(2.0 * a - b) + 0.2;
            s.u[p] = 0.3 * std::sin(b);
            s.v[p] = -0.2 * std::cos(a + b);
        }
    }
    return s;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("zero state is a fixed point") {
    const SWEConfig c = SWEConfig::with_flat_depth(Grid{16, 16}, 1.0);
    SWEState s = SWEState::zeros(c.grid);
    for (int i = 0; i < 10; ++i) s = swe_step(s, {}, {}, c);
    for (double v : s.eta) CHECK(v == 0.0);
    for (double v : s.u) CHECK(v == 0.0);
}

TEST_CASE("plane wave phase") {
    SUBCASE("64 points per wavelength, 10 periods") {
        CHECK(plane_wave_phase_error(64, 64.0, 0.25, 10.0) < 0.01);
    }
    SUBCASE("refinement reduces the phase error") {
        const double coarse = plane_wave_phase_error(16, 32.0, 0.8, 10.0);
        const double fine = plane_wave_phase_error(32, 32.0, 0.4, 10.0);
        CHECK(coarse > 0.0);
        CHECK(fine * 2.0 <= coarse);
    }
}

TEST_CASE("energy and mass") {
    SUBCASE("energy is conserved without damping or forcing") {
        SWEConfig c = SWEConfig::with_flat_depth(Grid{64, 64}, 1.0);
        SWEState s = smooth_state(c.grid);
        const double e0 = swe_energy(s, c);
        for (int i = 0; i < 1000; ++i) s = swe_step(s, {}, {}, c);
        CHECK(std::abs(swe_energy(s, c) - e0) / e0 < 1e-6);
    }
    SUBCASE("damping makes energy non-increasing; mass is conserved under forcing") {
        GenConfig gen;
        gen.swe.grid = Grid{32, 32};
        SWEConfig c = gen.swe;
        c.H = make_depth(gen);
        c.r = 0.05;
        SWEState s = smooth_state(c.grid);
        double e = swe_energy(s, c);
        for (int i = 0; i < 200; ++i) {
            s = swe_step(s, {}, {}, c);
            const double e1 = swe_energy(s, c);
            CHECK(e1 <= e);
            e = e1;
        }
        std::mt19937_64 rng(3);
        const FieldStack f = gen_forcing(ForcingConfig{}, c.grid, 50, rng);
        auto mean = [](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            return m / static_cast<double>(v.size());
        };
        for (std::size_t n = 0; n < 50; ++n) {
            const double m0 = mean(s.eta);
            s = swe_step(s, f.slice(0, n), f.slice(1, n), c);
            CHECK(std::abs(mean(s.eta) - m0) < 1e-12);
        }
    }
}

TEST_CASE("dispersion relation") {
    SWEConfig c = SWEConfig::with_flat_depth(Grid{8, 8}, 1.0);
    c.f = 0.0;
    CHECK(dispersion_omega(1.0, 0.0, c) == doctest::Approx(1.0).epsilon(1e-15));
    c.f = 0.1;
    CHECK(dispersion_omega(0.0, 0.0, c) == doctest::Approx(0.1).epsilon(1e-15));

    SUBCASE("solver frequency matches the Poincare branch") {
        SWEConfig s = SWEConfig::with_flat_depth(Grid{16, 16, 4.0, 4.0}, 1.0);
        s.f = 0.1;
        const double L = 64.0, kx = 2.0 * kPi * 2.0 / L, ky = 2.0 * kPi / L;
        SWEState st = SWEState::zeros(s.grid);
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) st.eta[y * 16 + x] = std::cos(kx * 4.0 * static_cast<double>(x) + ky * 4.0 * static_cast<double>(y));
        }
        const std::size_t steps = 8000;
        std::vector<double> series;
        for (std::size_t i = 0; i < steps; ++i) {
            series.push_back(st.eta[0]);
            st = swe_step(st, {}, {}, s);
        }
        // The geostrophic part is steady; remove it, window, and scan frequencies.
        double mean = 0.0;
        for (double v : series) mean += v;
        mean /= static_cast<double>(steps);
        double best = 0.0, best_w = 0.0;
        for (double w = 0.12; w < 1.0; w += 1e-4) {
            std::complex<double> acc = 0.0;
            for (std::size_t i = 0; i < steps; ++i) {
                const double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(steps));
                const double t = static_cast<double>(i) * s.dt_solver;
                acc += hann * (series[i] - mean) * std::polar(1.0, -w * t);
            }
            if (std::abs(acc) > best) {
                best = std::abs(acc);
                best_w = w;
            }
        }
        const double omega = dispersion_omega(kx, ky, s);
        CHECK(std::abs(best_w - omega) / omega < 0.02);
    }
}

TEST_CASE("CFL and configuration checks") {
    SWEConfig c = SWEConfig::with_flat_depth(Grid{16, 16}, 1.0);
    c.dt_solver = 0.6;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.dt_solver = 0.25;
    c.H[3] = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("forcing") {
    const Grid g{16, 16};
    SUBCASE("white in time when ar = 0") {
        ForcingConfig fc;
        fc.ar = 0.0;
        fc.corr_length = 0.0;
        std::mt19937_64 rng(4);
        const FieldStack f = gen_forcing(fc, g, 200, rng);
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t + 1 < 200; ++t) {
            const auto a = f.slice(0, t), b = f.slice(0, t + 1);
            for (std::size_t p = 0; p < a.size(); ++p) {
                num += a[p] * b[p];
                den += a[p] * a[p];
            }
        }
        const double rho = num / den;
        CHECK(std::abs(rho) < 3.0 / std::sqrt(199.0 * 256.0));
    }
    SUBCASE("AR(1) coefficient is reproduced") {
        ForcingConfig fc;
        fc.ar = 0.9;
        fc.corr_length = 0.0;
        std::mt19937_64 rng(5);
        const FieldStack f = gen_forcing(fc, g, 400, rng);
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t + 1 < 400; ++t) {
            const auto a = f.slice(1, t), b = f.slice(1, t + 1);
            for (std::size_t p = 0; p < a.size(); ++p) {
                num += a[p] * b[p];
                den += a[p] * a[p];
            }
        }
        CHECK(num / den == doctest::Approx(0.9).epsilon(0.02));
    }
    SUBCASE("zero amplitude and determinism") {
        ForcingConfig fc;
        fc.wind_amplitude = 0.0;
        fc.pressure_amplitude = 0.0;
        std::mt19937_64 rng(6);
        const FieldStack z = gen_forcing(fc, g, 5, rng);
        for (double v : z.data()) CHECK(v == 0.0);
        std::mt19937_64 r1(7), r2(7);
        CHECK(gen_forcing(ForcingConfig{}, g, 5, r1).data() == gen_forcing(ForcingConfig{}, g, 5, r2).data());
        CHECK(z.names() == std::vector<std::string>{"wind_u", "wind_v", "pressure"});
    }
    SUBCASE("smooth noise has unit variance") {
        std::mt19937_64 rng(8);
        double ss = 0.0;
        const Grid big{64, 64};
        for (int i = 0; i < 50; ++i) {
            for (double v : smooth_noise(big, 4.0, rng)) ss += v * v;
        }
        CHECK(ss / (50.0 * 4096.0) == doctest::Approx(1.0).epsilon(0.1));
    }
}

TEST_CASE("dataset generation") {
    GenConfig gen;
    gen.swe.grid = Grid{16, 16};
    gen.samples = 12;
    gen.spinup = 20.0;
    gen.land_box = std::array<std::size_t, 4>{0, 2, 0, 4};
    const fs::path a = fs::temp_directory_path() / "stfno_test_gen_a";
    const fs::path b = fs::temp_directory_path() / "stfno_test_gen_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const GeneratedData d = generate_dataset(gen, a, "{}");
    generate_dataset(gen, b, "{}");
    CHECK(d.inputs.channels() == 7);
    CHECK(d.target.channels() == 1);
    CHECK(d.inputs.names() == input_channel_names());
    CHECK(d.mask.ocean_count() == 256 - 8);
    for (const char* f : {"inputs.fst", "target.fst", "mask.fst", "manifest.json"}) {
        CHECK(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    // Target equals the input sea level; depth is static.
    CHECK(std::equal(d.target.data().begin(), d.target.data().end(), d.inputs.slice(0, 0).begin()));
    const std::size_t depth = d.inputs.channel_index("depth");
    CHECK(std::equal(d.inputs.slice(depth, 0).begin(), d.inputs.slice(depth, 0).end(), d.inputs.slice(depth, 11).begin()));

    SUBCASE("zero samples gives a header-only file") {
        GenConfig empty = gen;
        empty.samples = 0;
        const fs::path e = fs::temp_directory_path() / "stfno_test_gen_empty";
        fs::remove_all(e);
        generate_dataset(empty, e, "{}");
        const FieldStack back = read_fst(e / "inputs.fst");
        CHECK(back.nt() == 0);
        CHECK(back.channels() == 7);
    }
}
