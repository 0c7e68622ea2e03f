#include "doctest.h"

#include <numbers>

#include "stfno/error.hpp"
#include "stfno/nnops.hpp"
#include "stfno/spectral.hpp"
#include "test_util.hpp"

using namespace stfno;
using testutil::cplx;

namespace {

constexpr double kPi = std::numbers::pi;

// Real field on [nt][ny][nx] built from cosines with |ky| < ky_lim, kx < kx_lim, |w| < w_lim.
std::vector<double> band_limited(std::size_t nt, std::size_t ny, std::size_t nx, int kx_lim, int ky_lim, int w_lim,
                                 std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> f(nt * ny * nx, 0.0);
    for (int w = -(w_lim - 1); w < w_lim; ++w) {
        for (int ky = -(ky_lim - 1); ky < ky_lim; ++ky) {
            for (int kx = 0; kx < kx_lim; ++kx) {
                const double a = u(rng), ph = kPi * u(rng);
                for (std::size_t t = 0; t < nt; ++t) {
                    for (std::size_t y = 0; y < ny; ++y) {
                        for (std::size_t x = 0; x < nx; ++x) {
                            const double arg = 2.0 * kPi *
                                               (w * static_cast<double>(t) / static_cast<double>(nt) +
                                                ky * static_cast<double>(y) / static_cast<double>(ny) +
                                                kx * static_cast<double>(x) / static_cast<double>(nx));
                            f[(t * ny + y) * nx + x] += a * std::cos(arg + ph);
                        }
                    }
                }
            }
        }
    }
    return f;
}

SpectralWeights identity_weights(std::size_t c, const ModeSpec& m) {
    SpectralWeights R(c, c, m);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t k = 0; k < R.mode_count(); ++k) R.at(i, i, k) = 1.0;
    }
    return R;
}

SpectralWeights random_weights(std::size_t ci, std::size_t co, const ModeSpec& m, std::mt19937_64& rng) {
    SpectralWeights R(ci, co, m);
    std::normal_distribution<double> nd;
    for (auto& z : R.data()) z = cplx(nd(rng), nd(rng));
    return R;
}

}  // namespace

TEST_CASE("delta transforms to a flat spectrum") {
    std::vector<double> d(8, 0.0);
    d[0] = 1.0;
    const auto s = dft_forward(d, 1, {8});
    REQUIRE(s.data.size() == 5);
    for (const auto& z : s.data) CHECK(std::abs(z - cplx(1.0, 0.0)) < 1e-15);
}

TEST_CASE("single cosine occupies modes +-3 with value N/2") {
    std::vector<double> f(16);
    for (std::size_t x = 0; x < 16; ++x) f[x] = std::cos(2.0 * kPi * 3.0 * static_cast<double>(x) / 16.0);
    const auto s = dft_forward(f, 1, {16});
    for (long k = -7; k <= 8; ++k) {
        const long kk[1] = {k};
        const cplx z = s.coefficient(0, kk);
        if (k == 3 || k == -3) {
            CHECK(std::abs(z - cplx(8.0, 0.0)) < 1e-12);
        } else {
            CHECK(std::abs(z) < 1e-12);
        }
    }
}

TEST_CASE("round trip and Parseval") {
    std::mt19937_64 rng(11);
    SUBCASE("4x4x4") {
        const auto f = testutil::randn(64, rng);
        const auto s = dft_forward(f, 1, {4, 4, 4});
        const auto g = dft_inverse(s);
        CHECK(testutil::max_abs_diff(f, g) / testutil::max_abs(f) < 1e-12);

        double e = 0.0, es = 0.0;
        for (double v : f) e += v * v;
        for (long a = -1; a <= 2; ++a) {
            for (long b = -1; b <= 2; ++b) {
                for (long c = -1; c <= 2; ++c) {
                    const long k[3] = {a, b, c};
                    es += std::norm(s.coefficient(0, k));
                }
            }
        }
        CHECK(std::abs(es / 64.0 - e) / e < 1e-12);
    }
    SUBCASE("batched 2-D against a direct DFT") {
        const std::size_t ny = 6, nx = 8;
        const auto f = testutil::randn(2 * ny * nx, rng);
        const auto s = dft_forward(f, 2, {ny, nx});
        for (std::size_t b = 0; b < 2; ++b) {
            const std::vector<double> fb(f.begin() + static_cast<long>(b * ny * nx),
                                         f.begin() + static_cast<long>((b + 1) * ny * nx));
            const auto F = testutil::brute_dft2(fb, ny, nx);
            for (std::size_t ky = 0; ky < ny; ++ky) {
                for (std::size_t kx = 0; kx < nx; ++kx) {
                    const long k[2] = {static_cast<long>(ky), static_cast<long>(kx)};
                    CHECK(std::abs(s.coefficient(b, k) - F[ky * nx + kx]) < 1e-12 * 48.0);
                }
            }
        }
        const auto g = dft_inverse(s);
        CHECK(testutil::max_abs_diff(f, g) < 1e-13);
    }
}

TEST_CASE("truncation") {
    const std::size_t n = 16;
    const ModeSpec m{4, 4, std::nullopt};
    auto harmonic = [&](int kx) {
        std::vector<double> f(n * n);
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                f[y * n + x] = std::cos(2.0 * kPi * kx * static_cast<double>(x) / static_cast<double>(n));
            }
        }
        return f;
    };
    SUBCASE("in band is unchanged") {
        const auto f = harmonic(3);
        const auto g = dft_inverse(truncate_modes(dft_forward(f, 1, {n, n}), m));
        CHECK(testutil::max_abs_diff(f, g) / testutil::max_abs(f) < 1e-12);
    }
    SUBCASE("out of band vanishes") {
        const auto g = dft_inverse(truncate_modes(dft_forward(harmonic(5), 1, {n, n}), m));
        CHECK(testutil::max_abs(g) < 1e-14);
    }
    SUBCASE("idempotent, 2-D and 3-D") {
        std::mt19937_64 rng(3);
        const auto f = testutil::randn(n * n, rng);
        const auto t1 = truncate_modes(dft_forward(f, 1, {n, n}), m);
        const auto t2 = truncate_modes(t1, m);
        CHECK(t1.data == t2.data);

        const auto f3 = testutil::randn(8 * n * n, rng);
        const ModeSpec m3{3, 2, 4};
        const auto s1 = truncate_modes(dft_forward(f3, 1, {8, n, n}), m3);
        CHECK(truncate_modes(s1, m3).data == s1.data);
    }
    SUBCASE("modes beyond the extent are rejected") {
        std::vector<double> f(8 * 8, 1.0);
        CHECK_THROWS_AS(truncate_modes(dft_forward(f, 1, {8, 8}), ModeSpec{5, 2, std::nullopt}), InvalidArgument);
    }
}

TEST_CASE("retained block counts") {
    CHECK(retained_mode_count(ModeSpec{16, 16, std::nullopt}) == 256);
    CHECK(retained_mode_count(ModeSpec{8, 8, 4}) == 256);
    CHECK(retained_mode_count(ModeSpec{1, 1, std::nullopt}) == 1);
    CHECK(retained_mode_count(ModeSpec{2, 3, 4}) == 24);
}

TEST_CASE("spectral_linear on band-limited inputs") {
    std::mt19937_64 rng(5);
    const std::size_t ny = 16, nx = 16;
    const ModeSpec m{4, 4, std::nullopt};
    const FieldShape shape{2, 1, ny, nx, 1};
    std::vector<double> v = band_limited(1, ny, nx, 4, 4, 1, rng);
    const auto v2 = band_limited(1, ny, nx, 4, 4, 1, rng);
    v.insert(v.end(), v2.begin(), v2.end());

    SUBCASE("identity kernel") {
        const auto R = identity_weights(2, m);
        CHECK(testutil::max_abs_diff(spectral_linear(v, shape, R.view()), v) / testutil::max_abs(v) < 1e-12);
    }
    SUBCASE("zero kernel") {
        const SpectralWeights R(2, 2, m);
        CHECK(testutil::max_abs(spectral_linear(v, shape, R.view())) == 0.0);
    }
    SUBCASE("constant real kernel scales the field") {
        SpectralWeights R(1, 1, m);
        for (auto& z : R.data()) z = 0.7;
        const std::vector<double> v1(v.begin(), v.begin() + static_cast<long>(ny * nx));
        const auto y = spectral_linear(v1, FieldShape{1, 1, ny, nx, 1}, R.view());
        for (std::size_t p = 0; p < v1.size(); ++p) CHECK(std::abs(y[p] - 0.7 * v1[p]) < 1e-12);
    }
    SUBCASE("temporal identity kernel") {
        const ModeSpec m3{3, 3, 4};
        const auto f = band_limited(8, 8, 8, 3, 3, 2, rng);
        const auto R = identity_weights(1, m3);
        const auto y = spectral_linear(f, FieldShape{1, 8, 8, 8, 1}, R.view());
        CHECK(testutil::max_abs_diff(y, f) / testutil::max_abs(f) < 1e-12);
    }
}

TEST_CASE("spectral_linear matches a direct DFT evaluation") {
    // y = (1/N) sum over retained (ky, kx) of c_kx Re(Y e^{i phase}), c = 1 at kx = 0 and 2 otherwise,
    // Y = sum_i R_io V_i; the kx = 0 column keeps only its real part after the inverse in y.
    std::mt19937_64 rng(9);
    const std::size_t ny = 8, nx = 8, ci = 2, co = 3;
    const ModeSpec m{3, 2, std::nullopt};
    const auto v = testutil::randn(ci * ny * nx, rng);
    const auto R = random_weights(ci, co, m, rng);
    const auto y = spectral_linear(v, FieldShape{ci, 1, ny, nx, 1}, R.view());

    std::vector<std::vector<cplx>> V;
    for (std::size_t i = 0; i < ci; ++i) {
        V.push_back(testutil::brute_dft2(std::vector<double>(v.begin() + static_cast<long>(i * ny * nx),
                                                             v.begin() + static_cast<long>((i + 1) * ny * nx)),
                                         ny, nx));
    }
    const auto kys = retained_ky(m);
    for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t yy = 0; yy < ny; ++yy) {
            for (std::size_t xx = 0; xx < nx; ++xx) {
                double acc = 0.0;
                for (std::size_t a = 0; a < kys.size(); ++a) {
                    for (std::size_t kx = 0; kx < m.kx_max; ++kx) {
                        const long ky = kys[a];
                        const std::size_t row = static_cast<std::size_t>((ky + static_cast<long>(ny)) % static_cast<long>(ny));
                        cplx Y = 0.0;
                        for (std::size_t i = 0; i < ci; ++i) Y += R.at(i, o, a * m.kx_max + kx) * V[i][row * nx + kx];
                        const double ph = 2.0 * kPi *
                                          (static_cast<double>(ky) * static_cast<double>(yy) / static_cast<double>(ny) +
                                           static_cast<double>(kx * xx) / static_cast<double>(nx));
                        acc += (kx == 0 ? 1.0 : 2.0) * std::real(Y * cplx(std::cos(ph), std::sin(ph)));
                    }
                }
                CHECK(std::abs(y[(o * ny + yy) * nx + xx] - acc / static_cast<double>(ny * nx)) < 1e-12);
            }
        }
    }
}

TEST_CASE("spectral_linear gradients") {
    std::mt19937_64 rng(21);
    for (const ModeSpec& m : {ModeSpec{2, 2, std::nullopt}, ModeSpec{2, 2, 3}}) {
        const std::size_t nt = m.temporal() ? 4 : 1, ci = 2, co = 3;
        const FieldShape shape{ci, nt, 8, 8, 2};
        SpectralWeights R = random_weights(ci, co, m, rng);
        const auto v = testutil::randn(shape.size(), rng);

        CheckableOp op;
        op.forward = [&](const CheckableOp::Tensors& x) {
            SpectralWeights Rx(ci, co, m);
            std::copy_n(reinterpret_cast<const cplx*>(x[1].data()), Rx.data().size(), Rx.data().begin());
            return spectral_linear(x[0], shape, Rx.view());
        };
        op.backward = [&](const CheckableOp::Tensors& x, const std::vector<double>& ybar) {
            SpectralWeights Rx(ci, co, m);
            std::copy_n(reinterpret_cast<const cplx*>(x[1].data()), Rx.data().size(), Rx.data().begin());
            const auto g = spectral_linear_vjp(x[0], shape, Rx.view(), ybar);
            const auto* d = reinterpret_cast<const double*>(g.dR.data());
            return CheckableOp::Tensors{g.dv, std::vector<double>(d, d + 2 * g.dR.size())};
        };
        const auto* rd = reinterpret_cast<const double*>(R.data().data());
        const CheckableOp::Tensors inputs{v, std::vector<double>(rd, rd + 2 * R.data().size())};
        CHECK(finite_diff_check(op, inputs, 1e-6, rng, 64) < 1e-6);

        const std::vector<double> zero(FieldShape{co, nt, 8, 8, 2}.size(), 0.0);
        const auto g0 = spectral_linear_vjp(v, shape, R.view(), zero);
        CHECK(testutil::max_abs(g0.dv) == 0.0);
        for (const auto& z : g0.dR) CHECK(z == cplx{});

        const auto ybar = testutil::randn(zero.size(), rng);
        std::vector<double> ybar2(ybar);
        for (auto& x : ybar2) x *= 2.0;
        const auto g1 = spectral_linear_vjp(v, shape, R.view(), ybar);
        const auto g2 = spectral_linear_vjp(v, shape, R.view(), ybar2);
        for (std::size_t i = 0; i < g1.dv.size(); ++i) CHECK(std::abs(g2.dv[i] - 2.0 * g1.dv[i]) < 1e-12);
        for (std::size_t i = 0; i < g1.dR.size(); ++i) CHECK(std::abs(g2.dR[i] - 2.0 * g1.dR[i]) < 1e-10);
    }
}

TEST_CASE("spectral_linear is resolution consistent") {
    std::mt19937_64 rng(33);
    const ModeSpec m{4, 4, std::nullopt};
    const auto R = random_weights(1, 1, m, rng);
    // Same continuous band-limited function sampled at 16 and 32 points per side.
    std::mt19937_64 r1(77), r2(77);
    const auto coarse = band_limited(1, 16, 16, 4, 4, 1, r1);
    const auto fine = band_limited(1, 32, 32, 4, 4, 1, r2);
    const auto yc = spectral_linear(coarse, FieldShape{1, 1, 16, 16, 1}, R.view());
    const auto yf = spectral_linear(fine, FieldShape{1, 1, 32, 32, 1}, R.view());
    std::vector<double> sub;
    for (std::size_t y = 0; y < 32; y += 2) {
        for (std::size_t x = 0; x < 32; x += 2) sub.push_back(yf[y * 32 + x]);
    }
    CHECK(testutil::rel_l2(sub, yc) < 1e-10);
}

TEST_CASE("cyclic shift equivariance") {
    std::mt19937_64 rng(41);
    const ModeSpec m{3, 3, std::nullopt};
    const auto R = random_weights(1, 1, m, rng);
    const auto v = testutil::randn(64, rng);
    std::vector<double> s(64);
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) s[((y + 2) % 8) * 8 + (x + 3) % 8] = v[y * 8 + x];
    }
    const auto a = spectral_linear(v, FieldShape{1, 1, 8, 8, 1}, R.view());
    const auto b = spectral_linear(s, FieldShape{1, 1, 8, 8, 1}, R.view());
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            CHECK(std::abs(b[((y + 2) % 8) * 8 + (x + 3) % 8] - a[y * 8 + x]) < 1e-12);
        }
    }
}
