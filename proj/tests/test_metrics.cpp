#include "doctest.h"

#include <map>

#include "stfno/error.hpp"
#include "stfno/metrics.hpp"
#include "test_util.hpp"

using namespace stfno;

namespace {

// The three values sit in the first cells of a 4x4 grid; row_mask() marks the rest as land.
FieldStack row(const std::vector<double>& v) {
    FieldStack fs({"sea_level"}, 1, Grid{4, 4});
    std::copy(v.begin(), v.end(), fs.data().begin());
    return fs;
}

LandMask row_mask(std::size_t n = 3) {
    LandMask m = LandMask::all_ocean(4, 4);
    for (std::size_t p = n; p < 16; ++p) m.land[p] = 1;
    return m;
}

// Independent periodogram: brute DFT, signed wavenumbers, annuli by rounded radius.
std::map<long, std::pair<double, std::size_t>> brute_bins(const std::vector<double>& f, std::size_t ny,
                                                          std::size_t nx) {
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    std::vector<double> g(f.size());
    for (std::size_t p = 0; p < f.size(); ++p) g[p] = f[p] - mean;
    const auto F = testutil::brute_dft2(g, ny, nx);
    std::map<long, std::pair<double, std::size_t>> bins;
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            if (i == 0 && j == 0) continue;
            const double ky = j <= ny / 2 ? double(j) : double(j) - double(ny);
            const double kx = i <= nx / 2 ? double(i) : double(i) - double(nx);
            auto& b = bins[std::lround(std::hypot(kx, ky))];
            b.first += std::norm(F[j * nx + i]) / static_cast<double>(nx * ny);
            ++b.second;
        }
    }
    return bins;
}

double total_power(const RadialSpectrum& r) {
    double s = r.dc;
    for (std::size_t b = 0; b < r.k.size(); ++b) s += r.power[b] * static_cast<double>(r.count[b]);
    return s;
}

}  // namespace

TEST_CASE("rmse and relative rmse") {
    const auto mask = row_mask();
    CHECK(rmse(row({1, 1, 1}), row({0, 1, 2}), mask) == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(rmse(row({5, 6, 7}), row({5, 6, 7}), mask) == 0.0);
    // std of the reference (0, 1, 2) is sqrt(2/3), so the ratio is 1.
    CHECK(relative_rmse(row({1, 1, 1}), row({0, 1, 2}), mask) == doctest::Approx(1.0));
    // Land cells never contribute, whatever they hold.
    CHECK(rmse(row({1, 1, 100}), row({0, 1, 2}), row_mask(2)) == doctest::Approx(std::sqrt(0.5)));
    FieldStack two({"sea_level"}, 2, Grid{4, 4});
    CHECK_THROWS_AS(rmse(two, row({0, 1, 2}), mask), InvalidArgument);
    CHECK_THROWS_AS(relative_rmse(row({1, 1, 1}), row({2, 2, 2}), mask), InvalidArgument);
}

TEST_CASE("radial_psd against a brute-force periodogram") {
    std::mt19937_64 rng(3);
    for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {7, 5}}) {
        const auto f = testutil::randn(ny * nx, rng);
        const RadialSpectrum r = radial_psd(f, ny, nx);
        const auto bins = brute_bins(f, ny, nx);
        REQUIRE(r.k.size() == bins.size());
        for (std::size_t b = 0; b < r.k.size(); ++b) {
            const auto& e = bins.at(static_cast<long>(r.k[b]));
            CHECK(r.count[b] == e.second);
            CHECK(r.power[b] == doctest::Approx(e.first / static_cast<double>(e.second)).epsilon(1e-10));
        }
        CHECK(r.dc < 1e-20);
        CHECK(r.isotropic_max == std::min(nx, ny) / 2);
    }
}

TEST_CASE("single plane wave lands in one annulus") {
    const std::size_t n = 32;
    std::vector<double> f(n * n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            f[y * n + x] = std::cos(2.0 * std::numbers::pi * (3.0 * double(x) + 4.0 * double(y)) / double(n));
        }
    }
    const RadialSpectrum r = radial_psd(f, n, n);
    double at5 = 0.0;
    for (std::size_t b = 0; b < r.k.size(); ++b) {
        if (r.k[b] == 5.0) at5 = r.power[b] * static_cast<double>(r.count[b]);
    }
    CHECK(at5 / total_power(r) > 0.99);
}

TEST_CASE("Parseval and translation invariance") {
    std::mt19937_64 rng(4);
    const std::size_t ny = 12, nx = 16;
    const auto f = testutil::randn(ny * nx, rng);
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= double(ny * nx);
    double energy = 0.0;
    for (double v : f) energy += (v - mean) * (v - mean);
    const RadialSpectrum r = radial_psd(f, ny, nx);
    CHECK(total_power(r) == doctest::Approx(energy).epsilon(1e-12));

    std::vector<double> shifted(f.size());
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) shifted[((y + 5) % ny) * nx + (x + 3) % nx] = f[y * nx + x];
    }
    const RadialSpectrum s = radial_psd(shifted, ny, nx);
    CHECK(testutil::max_abs_diff(r.power, s.power) < 1e-12);
}

TEST_CASE("land handling in spectra") {
    std::mt19937_64 rng(5);
    const std::size_t n = 8;
    auto f = testutil::randn(n * n, rng);
    LandMask m = LandMask::all_ocean(n, n);
    for (std::size_t x = 0; x < n; ++x) m.land[x] = 1;
    auto g = f;
    for (std::size_t x = 0; x < n; ++x) g[x] = 1e6;
    // Zero fill ignores whatever sits on land.
    const auto a = radial_psd(f, n, n, m, SpectrumMode::ZeroFill);
    const auto b = radial_psd(g, n, n, m, SpectrumMode::ZeroFill);
    CHECK(testutil::max_abs_diff(a.power, b.power) < 1e-9);
    const auto c = radial_psd(g, n, n, m, SpectrumMode::Raw);
    CHECK(total_power(c) > 1e10);
}

TEST_CASE("spectral_rrmse") {
    RadialSpectrum ref;
    ref.k = {1, 2};
    ref.power = {2.0, 0.0};
    ref.count = {4, 4};
    RadialSpectrum pred = ref;
    pred.power = {3.0, 1.0};
    const std::vector<RadialSpectrum> p{pred, pred}, q{ref, ref};
    const auto e = spectral_rrmse(p, q);
    CHECK(e[0] == doctest::Approx(0.5));
    CHECK(std::isnan(e[1]));
    const auto self = spectral_rrmse(q, q);
    CHECK(self[0] == 0.0);
    pred.k = {1, 3};
    const std::vector<RadialSpectrum> bad{pred, pred};
    CHECK_THROWS_AS(spectral_rrmse(bad, q), InvalidArgument);
}

TEST_CASE("stations and evaluate") {
    std::mt19937_64 rng(6);
    FieldStack ref({"sea_level"}, 10, Grid{6, 4}, 2.0, 0.0);
    ref.data() = testutil::randn(ref.data().size(), rng);
    LandMask m = LandMask::all_ocean(4, 6);
    m.land[0] = 1;

    const std::vector<Station> st{{1, 2}, {3, 5}};
    const auto s = station_series(ref, st, m);
    REQUIRE(s.size() == 2);
    for (std::size_t t = 0; t < 10; ++t) CHECK(s[1][t] == ref.at(0, t, 3, 5));
    const std::vector<Station> on_land{{0, 0}};
    CHECK_THROWS_AS(station_series(ref, on_land, m), InvalidArgument);

    FieldStack pred = ref.time_window(4, 3);
    for (auto& v : pred.data()) v += 0.5;
    EvalOptions opt;
    opt.stations = st;
    const EvalReport r = evaluate(pred, ref, m, opt);
    CHECK(r.rmse == doctest::Approx(0.5));
    CHECK(r.rmse_per_step.size() == 3);
    CHECK(r.time.front() == doctest::Approx(8.0));
    CHECK(r.station_ref[0][0] == ref.at(0, 4, 1, 2));
    CHECK(r.pred_spectra.size() == 3);
    // A constant offset vanishes after mean removal.
    for (double e : r.rrmse_k) CHECK(e < 1e-12);

    FieldStack late = pred;
    late.set_time(100.0, 2.0);
    CHECK_THROWS_AS(evaluate(late, ref, m, opt), InvalidArgument);
}
