#include "stfno/model.hpp"

#include <algorithm>
#include <cmath>

#include "stfno/error.hpp"

namespace stfno {

std::string to_string(Variant v) { return v == Variant::Fno ? "fno" : "fnotd"; }

Variant parse_variant(const std::string& s) {
    if (s == "fno") return Variant::Fno;
    if (s == "fnotd") return Variant::Fnotd;
    throw InvalidArgument("unknown model variant '" + s + "' (expected fno or fnotd)");
}

void ModelConfig::validate() const {
    require(layers >= 1, "model needs at least one Fourier layer");
    require(width >= 1, "model width must be positive");
    require(!in_channels.empty() && !out_channels.empty(), "model needs input and output channels");
    modes.validate();
    if (variant == Variant::Fno) {
        require(tau == 1, "standard FNO consumes a single time slice (tau = 1)");
        require(!modes.temporal(), "standard FNO has no temporal modes");
    } else {
        require(modes.temporal(), "FNOtD needs a temporal mode threshold");
        if (!allow_single_slice_window) require(tau >= 2, "FNOtD needs a window of at least 2 slices");
        require(tau >= 1, "window length must be positive");
        require(*modes.w_max <= (tau + 1) / 2, "w_max must not exceed ceil(tau / 2)");
    }
}

ModelConfig default_config(Variant v, std::vector<std::string> in_channels, std::vector<std::string> out_channels) {
    ModelConfig c;
    c.variant = v;
    c.width = 32;
    c.layers = 4;
    c.in_channels = std::move(in_channels);
    c.out_channels = std::move(out_channels);
    if (v == Variant::Fno) {
        c.modes = ModeSpec{16, 16, std::nullopt};
        c.tau = 1;
    } else {
        c.modes = ModeSpec{8, 8, 4};
        c.tau = 8;
    }
    return c;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::size_t w = config_.width;
    const std::size_t ci = config_.in_channels.size();
    const std::size_t co = config_.out_channels.size();
    const ModeSpec& m = config_.modes;
    p_a_ = params_.add("P.A", {w, ci});
    p_b_ = params_.add("P.b", {w});
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        LayerIndex li{};
        li.W = params_.add(pre + "W", {w, w});
        li.R = params_.add(pre + "R", {w, w, m.w_count(), m.ky_count(), m.kx_max}, true);
        li.b = params_.add(pre + "b", {w});
        li.M1A = params_.add(pre + "M1.A", {w, w});
        li.M1b = params_.add(pre + "M1.b", {w});
        li.M2A = params_.add(pre + "M2.A", {w, w});
        li.M2b = params_.add(pre + "M2.b", {w});
        layers_.push_back(li);
    }
    q_a_ = params_.add("Q.A", {co, w});
    q_b_ = params_.add("Q.b", {co});
}

SpectralWeightsView Model::spectral_view(std::size_t layer) const {
    const Param& r = params_[layers_.at(layer).R];
    return {config_.width, config_.width, config_.modes, r.complex_value()};
}

Model build_model(const ModelConfig& config, std::mt19937_64& rng) {
    Model model(config);
    ParamStore& ps = model.params();
    auto init_real = [&](std::size_t idx, std::size_t fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-s, s);
        for (auto& v : ps[idx].value) v = u(rng);
    };
    const std::size_t w = config.width;
    init_real(model.P_A(), config.in_channels.size());
    init_real(model.P_b(), config.in_channels.size());
    for (const auto& li : model.layers()) {
        init_real(li.W, w);
        SpectralWeights R(w, w, config.modes);
        R.init_uniform(rng);
        std::copy(R.data().begin(), R.data().end(), ps[li.R].complex_value().begin());
        // b_l starts at zero.
        init_real(li.M1A, w);
        init_real(li.M1b, w);
        init_real(li.M2A, w);
        init_real(li.M2b, w);
    }
    init_real(model.Q_A(), w);
    init_real(model.Q_b(), w);
    return model;
}

std::size_t param_count(const Model& model) { return model.params().total_count(); }

namespace {

void check_finite(std::span<const double> v, std::size_t layer) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericFailure("non-finite activation in Fourier layer " + std::to_string(layer), "layer", layer);
        }
    }
}

void add_channel_bias(std::span<double> v, std::span<const double> b, std::size_t n) {
    for (std::size_t c = 0; c < b.size(); ++c) {
        double* d = v.data() + c * n;
        const double bc = b[c];
        for (std::size_t i = 0; i < n; ++i) d[i] += bc;
    }
}

MlpWeights mlp_weights(const ParamStore& ps, const Model::LayerIndex& li) {
    return {ps[li.M1A].value, ps[li.M1b].value, ps[li.M2A].value, ps[li.M2b].value};
}

void check_input(const Model& model, std::span<const double> x, const FieldShape& shape) {
    const auto& c = model.config();
    require(shape.channels == c.in_channels.size(), "input channel count does not match the model");
    require(shape.nt == c.tau, "input window has " + std::to_string(shape.nt) + " slices, model expects " +
                                   std::to_string(c.tau));
    require(shape.batch >= 1, "batch must be positive");
    require(x.size() == shape.size(), "input size does not match [c_in, batch, tau, ny, nx]");
    c.modes.validate_for(shape.nt, shape.ny, shape.nx);
}

struct Workspace {
    std::vector<double> u, next, kb, m, z;
    std::vector<double> ubar, prev, zbar, kbbar;
    MlpTape mlp;
};

Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
}

}  // namespace

std::vector<double> forward_array(const Model& model, std::span<const double> x, const FieldShape& in_shape,
                                  ForwardTape* tape) {
    check_input(model, x, in_shape);
    const auto& cfg = model.config();
    const ParamStore& ps = model.params();
    const std::size_t w = cfg.width, n = in_shape.points();
    FieldShape shape = in_shape;
    shape.channels = w;
    Workspace& ws = workspace();

    if (tape) {
        tape->shape = shape;
        tape->input.assign(x.begin(), x.end());
        tape->layers.resize(cfg.layers);
    }
    std::vector<double>* u = tape ? &tape->layers[0].u : &ws.u;
    u->resize(w * n);
    pointwise_affine(x, cfg.in_channels.size(), n, ps[model.P_A()].value, ps[model.P_b()].value, w, *u);

    ws.m.resize(w * n);
    ws.z.resize(w * n);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& li = model.layers()[l];
        ForwardTape::Layer* tl = tape ? &tape->layers[l] : nullptr;
        std::vector<double>& kb = tl ? tl->kb : ws.kb;
        kb.resize(w * n);
        spectral_linear(*u, shape, model.spectral_view(l), kb, tl ? &tl->spectrum : nullptr);
        add_channel_bias(kb, ps[li.b].value, n);
        pointwise_mlp(kb, w, n, mlp_weights(ps, li), cfg.activation, ws.m, tl ? &tl->mlp : nullptr);
        pointwise_affine(*u, w, n, ps[li.W].value, {}, w, ws.z);
        for (std::size_t i = 0; i < ws.z.size(); ++i) ws.z[i] += ws.m[i];

        std::vector<double>* next = tape ? (l + 1 < cfg.layers ? &tape->layers[l + 1].u : &tape->last)
                                         : (u == &ws.u ? &ws.next : &ws.u);
        next->resize(w * n);
        if (tl) {
            tl->dact.resize(w * n);
            activation_forward(cfg.activation, ws.z, *next, tl->dact);
        } else {
            activation_forward(cfg.activation, ws.z, *next);
        }
        check_finite(*next, l);
        u = next;
    }

    const std::size_t co = cfg.out_channels.size();
    std::vector<double> y(co * n);
    pointwise_affine(*u, w, n, ps[model.Q_A()].value, ps[model.Q_b()].value, co, y);
    return y;
}

std::vector<double> backward(Model& model, const ForwardTape& tape, std::span<const double> ybar) {
    const auto& cfg = model.config();
    ParamStore& ps = model.params();
    const std::size_t w = cfg.width, n = tape.shape.points();
    const std::size_t co = cfg.out_channels.size(), ci = cfg.in_channels.size();
    require(tape.layers.size() == cfg.layers && tape.last.size() == w * n, "backward needs a tape from forward_array");
    require(ybar.size() == co * n, "cotangent size does not match model output");
    Workspace& ws = workspace();

    ws.ubar.assign(w * n, 0.0);
    pointwise_affine_backward(tape.last, w, n, ps[model.Q_A()].value, co, ybar, ws.ubar, ps[model.Q_A()].grad,
                              ps[model.Q_b()].grad);

    ws.zbar.resize(w * n);
    ws.kbbar.resize(w * n);
    for (std::size_t l = cfg.layers; l-- > 0;) {
        const auto& li = model.layers()[l];
        const auto& tl = tape.layers[l];
        for (std::size_t i = 0; i < ws.zbar.size(); ++i) ws.zbar[i] = ws.ubar[i] * tl.dact[i];

        ws.prev.assign(w * n, 0.0);
        pointwise_affine_backward(tl.u, w, n, ps[li.W].value, w, ws.zbar, ws.prev, ps[li.W].grad, {});

        std::fill(ws.kbbar.begin(), ws.kbbar.end(), 0.0);
        MlpGrads g{ps[li.M1A].grad, ps[li.M1b].grad, ps[li.M2A].grad, ps[li.M2b].grad};
        pointwise_mlp_backward(tl.kb, w, n, mlp_weights(ps, li), tl.mlp, ws.zbar, ws.kbbar, g);

        auto& db = ps[li.b].grad;
        for (std::size_t c = 0; c < w; ++c) {
            double s = 0.0;
            const double* d = ws.kbbar.data() + c * n;
            for (std::size_t i = 0; i < n; ++i) s += d[i];
            db[c] += s;
        }
        spectral_linear_backward(tl.spectrum, model.spectral_view(l), ws.kbbar, w, ws.prev, ps[li.R].complex_grad());
        std::swap(ws.ubar, ws.prev);
    }

    std::vector<double> xbar(ci * n, 0.0);
    pointwise_affine_backward(tape.input, ci, n, ps[model.P_A()].value, w, ws.ubar, xbar, ps[model.P_A()].grad,
                              ps[model.P_b()].grad);
    return xbar;
}

FieldStack forward(const Model& model, const FieldStack& x) {
    const auto& cfg = model.config();
    require(x.names() == cfg.in_channels, "input channels do not match model in_channels");
    auto y = forward_array(model, x.data(), FieldShape{x.channels(), x.nt(), x.ny(), x.nx()});
    FieldStack out(cfg.out_channels, x.nt(), x.grid(), x.dt(), x.t0() + x.dt() * static_cast<double>(x.nt()));
    out.data() = std::move(y);
    return out;
}

std::vector<double> kernel_output(const Model& model, std::span<const double> x, const FieldShape& in_shape,
                                  std::size_t layer) {
    check_input(model, x, in_shape);
    const auto& cfg = model.config();
    require(layer < cfg.layers, "layer index out of range");
    const ParamStore& ps = model.params();
    const std::size_t w = cfg.width, n = in_shape.points();
    FieldShape shape = in_shape;
    shape.channels = w;
    std::vector<double> u(w * n), m(w * n), z(w * n);
    pointwise_affine(x, cfg.in_channels.size(), n, ps[model.P_A()].value, ps[model.P_b()].value, w, u);
    for (std::size_t l = 0;; ++l) {
        std::vector<double> k = spectral_linear(u, shape, model.spectral_view(l));
        if (l == layer) return k;
        const auto& li = model.layers()[l];
        add_channel_bias(k, ps[li.b].value, n);
        pointwise_mlp(k, w, n, mlp_weights(ps, li), cfg.activation, m);
        pointwise_affine(u, w, n, ps[li.W].value, {}, w, z);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += m[i];
        activation_forward(cfg.activation, z, u);
    }
}

}  // namespace stfno
