#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stfno {

/// One named learnable tensor. Complex tensors store interleaved (re, im)
/// doubles, so optimizers see them as independent real pairs.
struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    bool is_complex = false;
    std::vector<double> value;
    std::vector<double> grad;

    /// Number of real scalars.
    std::size_t size() const { return value.size(); }
    std::span<std::complex<double>> complex_value();
    std::span<const std::complex<double>> complex_value() const;
    std::span<std::complex<double>> complex_grad();
};

class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, bool is_complex = false);

    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    std::size_t index_of(const std::string& name) const;

    /// Total learnable real scalars (complex entries count twice).
    std::size_t total_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param> params_;
};

enum class Activation { Gelu, Identity };

// GELU, tanh approximation.
double gelu(double x);
double gelu_grad(double x);

/// y = act(x); when `dydx` is non-empty the derivative is stored there.
void activation_forward(Activation act, std::span<const double> x, std::span<double> y, std::span<double> dydx = {});

// Pointwise (per grid point) affine map on channel-major arrays [c, n]:
//   out[:, p] = A * v[:, p] + bias
// `bias` may be empty.
void pointwise_affine(std::span<const double> v, std::size_t c_in, std::size_t n, std::span<const double> A,
                      std::span<const double> bias, std::size_t c_out, std::span<double> out);

/// Adds dv (if non-empty), dA and dbias (if non-empty) for cotangent ybar.
void pointwise_affine_backward(std::span<const double> v, std::size_t c_in, std::size_t n, std::span<const double> A,
                               std::size_t c_out, std::span<const double> ybar, std::span<double> dv,
                               std::span<double> dA, std::span<double> dbias);

struct MlpWeights {
    std::span<const double> A1, b1, A2, b2;  // width x width, width, width x width, width
};

struct MlpGrads {
    std::span<double> A1, b1, A2, b2;
};

struct MlpTape {
    std::vector<double> act;   // act(h)
    std::vector<double> dact;  // act'(h)
};

/// The M block: affine -> activation -> affine, hidden width = channel width.
void pointwise_mlp(std::span<const double> v, std::size_t width, std::size_t n, const MlpWeights& w, Activation act,
                   std::span<double> out, MlpTape* tape = nullptr);

void pointwise_mlp_backward(std::span<const double> v, std::size_t width, std::size_t n, const MlpWeights& w,
                            const MlpTape& tape, std::span<const double> ybar, std::span<double> dv, const MlpGrads& g);

/// Operation under test for finite_diff_check: forward maps the input tensors to a
/// flat output; backward maps (inputs, output cotangent) to one gradient per input.
struct CheckableOp {
    using Tensors = std::vector<std::vector<double>>;
    std::function<std::vector<double>(const Tensors&)> forward;
    std::function<Tensors(const Tensors&, const std::vector<double>&)> backward;
};

/// Worst relative error between backward-pass gradients and central differences of
/// <c, forward(x)> for a random cotangent c, over `samples` random coordinates per tensor
/// (every coordinate when the tensor is smaller). The denominator is
/// max(|analytic|, |numeric|, 1e-3 * max |gradient of that tensor|).
double finite_diff_check(const CheckableOp& op, const CheckableOp::Tensors& inputs, double eps, std::mt19937_64& rng,
                         std::size_t samples = 32);

}  // namespace stfno
