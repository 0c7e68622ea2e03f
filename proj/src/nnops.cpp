#include "stfno/nnops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stfno/error.hpp"

namespace stfno {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::span<std::complex<double>> Param::complex_value() {
    return {reinterpret_cast<std::complex<double>*>(value.data()), value.size() / 2};
}
std::span<const std::complex<double>> Param::complex_value() const {
    return {reinterpret_cast<const std::complex<double>*>(value.data()), value.size() / 2};
}
std::span<std::complex<double>> Param::complex_grad() {
    return {reinterpret_cast<std::complex<double>*>(grad.data()), grad.size() / 2};
}

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape, bool is_complex) {
    for (const auto& p : params_) require(p.name != name, "duplicate parameter name '" + name + "'");
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.is_complex = is_complex;
    std::size_t n = std::accumulate(p.shape.begin(), p.shape.end(), std::size_t{1}, std::multiplies<>());
    if (is_complex) n *= 2;
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    throw InvalidArgument("no parameter named '" + name + "'");
}

std::size_t ParamStore::total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

namespace {
constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;
}  // namespace

double gelu(double x) {
    double y = 0.0;
    activation_forward(Activation::Gelu, {&x, 1}, {&y, 1});
    return y;
}

double gelu_grad(double x) {
    double y = 0.0, d = 0.0;
    activation_forward(Activation::Gelu, {&x, 1}, {&y, 1}, {&d, 1});
    return d;
}

void activation_forward(Activation act, std::span<const double> x, std::span<double> y, std::span<double> dydx) {
    require(y.size() == x.size(), "activation output size mismatch");
    require(dydx.empty() || dydx.size() == x.size(), "activation derivative size mismatch");
    if (act == Activation::Identity) {
        std::copy(x.begin(), x.end(), y.begin());
        std::fill(dydx.begin(), dydx.end(), 1.0);
        return;
    }
    // tanh(u) = 1 - 2 / (exp(2u) + 1) keeps the loop vectorizable; saturates cleanly at +-1.
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::Map<const Eigen::ArrayXd> X(x.data(), n);
    Eigen::Map<Eigen::ArrayXd> Y(y.data(), n);
    constexpr Eigen::Index kChunk = 4096;
    Eigen::ArrayXd t(std::min(n, kChunk));
    for (Eigen::Index off = 0; off < n; off += kChunk) {
        const Eigen::Index len = std::min(kChunk, n - off);
        auto xs = X.segment(off, len);
        auto ts = t.head(len);
        ts = 1.0 - 2.0 / ((2.0 * kSqrt2OverPi * (xs + kGeluCubic * xs.cube())).exp() + 1.0);
        if (!dydx.empty()) {
            Eigen::Map<Eigen::ArrayXd> D(dydx.data() + off, len);
            D = 0.5 * (1.0 + ts) + 0.5 * xs * (1.0 - ts.square()) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * xs.square());
        }
        Y.segment(off, len) = 0.5 * xs * (1.0 + ts);
    }
}

void pointwise_affine(std::span<const double> v, std::size_t c_in, std::size_t n, std::span<const double> A,
                      std::span<const double> bias, std::size_t c_out, std::span<double> out) {
    require(v.size() == c_in * n, "pointwise_affine: input size mismatch");
    require(A.size() == c_out * c_in, "pointwise_affine: weight shape mismatch");
    require(bias.empty() || bias.size() == c_out, "pointwise_affine: bias size mismatch");
    require(out.size() == c_out * n, "pointwise_affine: output size mismatch");
    ConstMap V(v.data(), static_cast<Eigen::Index>(c_in), static_cast<Eigen::Index>(n));
    ConstMap W(A.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(c_in));
    MutMap Y(out.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(n));
    Y.noalias() = W * V;
    if (!bias.empty()) {
        Eigen::Map<const Eigen::VectorXd> b(bias.data(), static_cast<Eigen::Index>(c_out));
        Y.colwise() += b;
    }
}

void pointwise_affine_backward(std::span<const double> v, std::size_t c_in, std::size_t n, std::span<const double> A,
                               std::size_t c_out, std::span<const double> ybar, std::span<double> dv,
                               std::span<double> dA, std::span<double> dbias) {
    require(v.size() == c_in * n && ybar.size() == c_out * n, "pointwise_affine_backward: size mismatch");
    require(A.size() == c_out * c_in && dA.size() == A.size(), "pointwise_affine_backward: weight size mismatch");
    require(dv.empty() || dv.size() == v.size(), "pointwise_affine_backward: dv size mismatch");
    require(dbias.empty() || dbias.size() == c_out, "pointwise_affine_backward: dbias size mismatch");
    const auto ci = static_cast<Eigen::Index>(c_in), co = static_cast<Eigen::Index>(c_out);
    const auto nn = static_cast<Eigen::Index>(n);
    ConstMap V(v.data(), ci, nn);
    ConstMap W(A.data(), co, ci);
    ConstMap G(ybar.data(), co, nn);
    MutMap dW(dA.data(), co, ci);
    dW.noalias() += G * V.transpose();
    if (!dbias.empty()) {
        Eigen::Map<Eigen::VectorXd> db(dbias.data(), co);
        db += G.rowwise().sum();
    }
    if (!dv.empty()) {
        MutMap dV(dv.data(), ci, nn);
        dV.noalias() += W.transpose() * G;
    }
}

void pointwise_mlp(std::span<const double> v, std::size_t width, std::size_t n, const MlpWeights& w, Activation act,
                   std::span<double> out, MlpTape* tape) {
    thread_local MlpTape local;
    MlpTape& t = tape ? *tape : local;
    t.act.resize(width * n);
    t.dact.resize(tape ? width * n : 0);
    pointwise_affine(v, width, n, w.A1, w.b1, width, t.act);
    activation_forward(act, t.act, t.act, t.dact);
    pointwise_affine(t.act, width, n, w.A2, w.b2, width, out);
}

void pointwise_mlp_backward(std::span<const double> v, std::size_t width, std::size_t n, const MlpWeights& w,
                            const MlpTape& tape, std::span<const double> ybar, std::span<double> dv, const MlpGrads& g) {
    require(tape.dact.size() == width * n, "pointwise_mlp_backward: forward tape missing");
    thread_local std::vector<double> dh;
    dh.assign(width * n, 0.0);
    pointwise_affine_backward(tape.act, width, n, w.A2, width, ybar, dh, g.A2, g.b2);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= tape.dact[i];
    pointwise_affine_backward(v, width, n, w.A1, width, dh, dv, g.A1, g.b1);
}

double finite_diff_check(const CheckableOp& op, const CheckableOp::Tensors& inputs, double eps, std::mt19937_64& rng,
                         std::size_t samples) {
    require(eps >= 1e-8 && eps <= 1e-4, "finite difference step must lie in [1e-8, 1e-4]");
    const auto y0 = op.forward(inputs);
    for (double v : y0) {
        if (!std::isfinite(v)) throw CheckFailed("forward output is not finite");
    }
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> cot(y0.size());
    for (auto& c : cot) c = nd(rng);
    const auto grads = op.backward(inputs, cot);
    require(grads.size() == inputs.size(), "backward must return one gradient per input");

    auto objective = [&](const CheckableOp::Tensors& x) {
        const auto y = op.forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (!std::isfinite(y[i])) throw CheckFailed("forward output is not finite");
            s += cot[i] * y[i];
        }
        return s;
    };

    double worst = 0.0;
    CheckableOp::Tensors x = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const std::size_t n = inputs[t].size();
        require(grads[t].size() == n, "gradient size does not match input size");
        if (n == 0) continue;
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > samples) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(samples);
        }
        double scale = 0.0;
        for (double g : grads[t]) scale = std::max(scale, std::abs(g));
        for (std::size_t j : coords) {
            const double orig = x[t][j];
            x[t][j] = orig + eps;
            const double fp = objective(x);
            x[t][j] = orig - eps;
            const double fm = objective(x);
            x[t][j] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = grads[t][j];
            // Entries far below the tensor's largest gradient are compared on that scale: their
            // central differences are dominated by rounding in the objective.
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3 * scale, 1e-300});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

}  // namespace stfno
