#include "doctest.h"

#include <numbers>

#include "stfno/error.hpp"
#include "stfno/model.hpp"
#include "test_util.hpp"

using namespace stfno;

namespace {

ModelConfig small_config(Variant v, std::size_t width, std::size_t ci, std::size_t co, ModeSpec m, std::size_t tau) {
    ModelConfig c;
    c.variant = v;
    c.width = width;
    c.layers = 2;
    c.modes = m;
    c.tau = tau;
    for (std::size_t i = 0; i < ci; ++i) c.in_channels.push_back("in" + std::to_string(i));
    for (std::size_t i = 0; i < co; ++i) c.out_channels.push_back("out" + std::to_string(i));
    return c;
}

std::vector<std::string> names(std::size_t n, const std::string& p) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(p + std::to_string(i));
    return v;
}

// Whole-model check: tensors are the input followed by every parameter.
double model_fd_error(const ModelConfig& cfg, const FieldShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Model model = build_model(cfg, rng);
    CheckableOp::Tensors in{testutil::randn(shape.size(), rng)};
    for (const auto& p : model.params()) in.push_back(p.value);

    auto load = [&](const CheckableOp::Tensors& x) {
        for (std::size_t i = 0; i < model.params().size(); ++i) model.params()[i].value = x[i + 1];
    };
    CheckableOp op;
    op.forward = [&](const CheckableOp::Tensors& x) {
        load(x);
        return forward_array(model, x[0], shape);
    };
    op.backward = [&](const CheckableOp::Tensors& x, const std::vector<double>& ybar) {
        load(x);
        ForwardTape tape;
        forward_array(model, x[0], shape, &tape);
        model.params().zero_grad();
        CheckableOp::Tensors g{backward(model, tape, ybar)};
        for (const auto& p : model.params()) g.push_back(p.grad);
        return g;
    };
    // A wider step than the per-layer checks: the whole-model objective sums many terms, so
    // rounding dominates central differences below about 1e-5.
    return finite_diff_check(op, in, 1e-4, rng, 32);
}

}  // namespace

TEST_CASE("build_model is deterministic") {
    const auto cfg = small_config(Variant::Fnotd, 4, 2, 1, ModeSpec{2, 2, 2}, 4);
    std::mt19937_64 r1(5), r2(5), r3(6);
    const Model a = build_model(cfg, r1), b = build_model(cfg, r2), c = build_model(cfg, r3);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        same = same && a.params()[i].value == b.params()[i].value;
        differs = differs || a.params()[i].value != c.params()[i].value;
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("parameter accounting") {
    SUBCASE("hand count for the smallest model") {
        // P: A(1) + b(1); layer: W(1) + R(2 complex = 4 reals) + b(1) + M(1 + 1 + 1 + 1); Q: A(1) + b(1).
        ModelConfig c = small_config(Variant::Fno, 1, 1, 1, ModeSpec{1, 1, std::nullopt}, 1);
        c.layers = 1;
        std::mt19937_64 rng(0);
        CHECK(param_count(build_model(c, rng)) == 2 + (1 + 4 + 1 + 4) + 2);
    }
    SUBCASE("desk-scale variants") {
        std::mt19937_64 rng(0);
        const auto fno = build_model(default_config(Variant::Fno, names(7, "c"), {"sea_level"}), rng);
        const auto td = build_model(default_config(Variant::Fnotd, names(7, "c"), {"sea_level"}), rng);
        // P 7*32+32, per layer W 32^2 + R 32^2*512*2 + b 32 + M 2*(32^2+32), Q 32+1.
        const std::size_t per_layer = 1024 + 1024 * 512 * 2 + 32 + 2 * (1024 + 32);
        const std::size_t expected = 7 * 32 + 32 + 4 * per_layer + 33;
        CHECK(param_count(fno) == expected);
        CHECK(param_count(td) == expected);
    }
}

TEST_CASE("forward composition") {
    SUBCASE("only the Q bias set gives a constant output") {
        const auto cfg = small_config(Variant::Fnotd, 4, 2, 2, ModeSpec{2, 2, 2}, 4);
        std::mt19937_64 rng(1);
        Model m = build_model(cfg, rng);
        for (auto& p : m.params()) std::fill(p.value.begin(), p.value.end(), 0.0);
        m.params()[m.Q_b()].value = {0.25, -1.5};
        const FieldShape shape{2, 4, 8, 8, 1};
        const auto y = forward_array(m, testutil::randn(shape.size(), rng), shape);
        const std::size_t half = y.size() / 2;
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == (i < half ? 0.25 : -1.5));
    }
    SUBCASE("FieldStack front end validates channels and window") {
        const auto cfg = small_config(Variant::Fnotd, 2, 2, 1, ModeSpec{2, 2, 2}, 4);
        std::mt19937_64 rng(2);
        const Model m = build_model(cfg, rng);
        Grid g{8, 8};
        FieldStack ok(cfg.in_channels, 4, g);
        CHECK(forward(m, ok).nt() == 4);
        CHECK(forward(m, ok).names() == cfg.out_channels);
        CHECK_THROWS_AS(forward(m, FieldStack({"x", "in1"}, 4, g)), InvalidArgument);
        CHECK_THROWS_AS(forward(m, FieldStack(cfg.in_channels, 3, g)), InvalidArgument);
    }
    SUBCASE("non-finite input reports the layer") {
        const auto cfg = small_config(Variant::Fno, 2, 1, 1, ModeSpec{2, 2, std::nullopt}, 1);
        std::mt19937_64 rng(3);
        const Model m = build_model(cfg, rng);
        std::vector<double> x(64, 0.0);
        x[5] = std::nan("");
        try {
            forward_array(m, x, FieldShape{1, 1, 8, 8, 1});
            FAIL("expected NumericFailure");
        } catch (const NumericFailure& e) {
            CHECK(e.where() == "layer");
            CHECK(e.index() == std::optional<std::size_t>(0));
        }
    }
    SUBCASE("invalid configurations") {
        auto c = small_config(Variant::Fno, 2, 1, 1, ModeSpec{2, 2, std::nullopt}, 4);
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
        c = small_config(Variant::Fnotd, 2, 1, 1, ModeSpec{2, 2, 3}, 4);
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
        c = small_config(Variant::Fnotd, 2, 1, 1, ModeSpec{2, 2, 1}, 1);
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
        c.allow_single_slice_window = true;
        CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("full-model gradients") {
    SUBCASE("FNO, width 4, 8x8, modes (2,2)") {
        const auto cfg = small_config(Variant::Fno, 4, 2, 1, ModeSpec{2, 2, std::nullopt}, 1);
        CHECK(model_fd_error(cfg, FieldShape{2, 1, 8, 8, 1}, 7) < 1e-5);
    }
    SUBCASE("FNOtD, width 4, 4x8x8, modes (2,2,2), batch 2") {
        const auto cfg = small_config(Variant::Fnotd, 4, 2, 1, ModeSpec{2, 2, 2}, 4);
        CHECK(model_fd_error(cfg, FieldShape{2, 4, 8, 8, 2}, 8) < 1e-5);
    }
    SUBCASE("zero cotangent and the Q-bias gradient") {
        const auto cfg = small_config(Variant::Fnotd, 3, 2, 1, ModeSpec{2, 2, 2}, 4);
        std::mt19937_64 rng(9);
        Model m = build_model(cfg, rng);
        const FieldShape shape{2, 4, 8, 8, 1};
        ForwardTape tape;
        const auto y = forward_array(m, testutil::randn(shape.size(), rng), shape, &tape);
        m.params().zero_grad();
        const auto dx = backward(m, tape, std::vector<double>(y.size(), 0.0));
        CHECK(testutil::max_abs(dx) == 0.0);
        for (const auto& p : m.params()) CHECK(testutil::max_abs(p.grad) == 0.0);

        m.params().zero_grad();
        backward(m, tape, std::vector<double>(y.size(), 1.0));
        CHECK(m.params()[m.Q_b()].grad[0] == doctest::Approx(static_cast<double>(y.size())).epsilon(1e-12));
    }
}

TEST_CASE("equivariance to cyclic spatial shifts") {
    const auto cfg = small_config(Variant::Fnotd, 4, 2, 1, ModeSpec{2, 2, 2}, 4);
    std::mt19937_64 rng(10);
    const Model m = build_model(cfg, rng);
    const std::size_t nt = 4, n = 8;
    const FieldShape shape{2, nt, n, n, 1};
    const auto x = testutil::randn(shape.size(), rng);
    std::vector<double> xs(x.size());
    auto shifted = [&](std::size_t s, std::size_t y, std::size_t xx) { return (s * n + (y + 3) % n) * n + (xx + 5) % n; };
    for (std::size_t s = 0; s < 2 * nt; ++s) {
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t xx = 0; xx < n; ++xx) xs[shifted(s, y, xx)] = x[(s * n + y) * n + xx];
        }
    }
    const auto a = forward_array(m, x, shape), b = forward_array(m, xs, shape);
    double err = 0.0;
    for (std::size_t s = 0; s < nt; ++s) {
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t xx = 0; xx < n; ++xx) err = std::max(err, std::abs(b[shifted(s, y, xx)] - a[(s * n + y) * n + xx]));
        }
    }
    CHECK(err / testutil::max_abs(a) < 1e-10);
}

TEST_CASE("single-slice FNOtD reduces to FNO") {
    auto fno_cfg = small_config(Variant::Fno, 3, 2, 1, ModeSpec{3, 2, std::nullopt}, 1);
    auto td_cfg = small_config(Variant::Fnotd, 3, 2, 1, ModeSpec{3, 2, 1}, 1);
    td_cfg.allow_single_slice_window = true;
    std::mt19937_64 rng(11);
    const Model fno = build_model(fno_cfg, rng);
    Model td = build_model(td_cfg, rng);
    REQUIRE(td.params().size() == fno.params().size());
    for (std::size_t i = 0; i < fno.params().size(); ++i) {
        REQUIRE(td.params()[i].value.size() == fno.params()[i].value.size());
        td.params()[i].value = fno.params()[i].value;
    }
    const FieldShape shape{2, 1, 8, 8, 3};
    const auto x = testutil::randn(shape.size(), rng);
    const auto a = forward_array(fno, x, shape), b = forward_array(td, x, shape);
    CHECK(testutil::max_abs_diff(a, b) / testutil::max_abs(a) < 1e-10);
}

TEST_CASE("layer-0 kernel ignores out-of-band temporal content") {
    const auto cfg = small_config(Variant::Fnotd, 3, 1, 1, ModeSpec{2, 2, 4}, 8);
    std::mt19937_64 rng(12);
    const Model m = build_model(cfg, rng);
    const FieldShape shape{1, 8, 8, 8, 1};
    const auto x = testutil::randn(shape.size(), rng);
    auto x2 = x;
    // omega = 4 (Nyquist) is outside the retained [-2, 2).
    for (std::size_t t = 0; t < 8; ++t) {
        for (std::size_t p = 0; p < 64; ++p) x2[t * 64 + p] += (t % 2 ? -1.0 : 1.0) * 0.7 * std::cos(0.3 * static_cast<double>(p));
    }
    const auto k1 = kernel_output(m, x, shape, 0), k2 = kernel_output(m, x2, shape, 0);
    CHECK(testutil::max_abs_diff(k1, k2) < 1e-12);
    const auto y1 = forward_array(m, x, shape), y2 = forward_array(m, x2, shape);
    CHECK(testutil::max_abs_diff(y1, y2) > 1e-6);  // the pointwise path still sees it
}

TEST_CASE("identity-activation model is resolution consistent") {
    auto cfg = small_config(Variant::Fnotd, 3, 1, 1, ModeSpec{3, 3, 2}, 4);
    cfg.activation = Activation::Identity;
    std::mt19937_64 rng(13);
    const Model m = build_model(cfg, rng);
    auto field = [](std::size_t n) {
        std::vector<double> f(4 * n * n);
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    const double a = 2.0 * std::numbers::pi * static_cast<double>(x) / static_cast<double>(n);
                    const double b = 2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(n);
                    f[(t * n + y) * n + x] = std::cos(a + 0.3 * static_cast<double>(t)) + 0.5 * std::sin(2.0 * b - a);
                }
            }
        }
        return f;
    };
    const auto yc = forward_array(m, field(16), FieldShape{1, 4, 16, 16, 1});
    const auto yf = forward_array(m, field(32), FieldShape{1, 4, 32, 32, 1});
    std::vector<double> sub;
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t y = 0; y < 32; y += 2) {
            for (std::size_t x = 0; x < 32; x += 2) sub.push_back(yf[(t * 32 + y) * 32 + x]);
        }
    }
    CHECK(testutil::rel_l2(sub, yc) < 1e-8);
}
