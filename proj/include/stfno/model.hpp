#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stfno/grid.hpp"
#include "stfno/nnops.hpp"
#include "stfno/spectral.hpp"

namespace stfno {

enum class Variant { Fno, Fnotd };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
    Variant variant = Variant::Fnotd;
    std::size_t width = 32;
    std::size_t layers = 4;
    ModeSpec modes{8, 8, 4};
    std::size_t tau = 8;
    double dt = 1.0;
    std::vector<std::string> in_channels;
    std::vector<std::string> out_channels;
    /// Identity replaces every nonlinearity (diagnostic resolution-consistency mode).
    Activation activation = Activation::Gelu;
    /// Lets a temporal-kernel model run on a one-slice window (degenerate comparison with FNO).
    bool allow_single_slice_window = false;

    void validate() const;
};

/// Desk-scale defaults: width 32, FNO modes (16,16), FNOtD modes (8,8,4) with tau = 8.
ModelConfig default_config(Variant v, std::vector<std::string> in_channels, std::vector<std::string> out_channels);

/// Parameter layout:
///   P: A [width, c_in], b [width]
///   per layer l: W [width, width], R complex [width, width, w, 2*ky_max, kx_max], b [width],
///                M1.A, M1.b, M2.A, M2.b (width x width / width)
///   Q: A [c_out, width], b [c_out]
class Model {
public:
    struct LayerIndex {
        std::size_t W, R, b, M1A, M1b, M2A, M2b;
    };

    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    std::size_t P_A() const { return p_a_; }
    std::size_t P_b() const { return p_b_; }
    std::size_t Q_A() const { return q_a_; }
    std::size_t Q_b() const { return q_b_; }
    const std::vector<LayerIndex>& layers() const { return layers_; }

    SpectralWeightsView spectral_view(std::size_t layer) const;

private:
    ModelConfig config_;
    ParamStore params_;
    std::size_t p_a_ = 0, p_b_ = 0, q_a_ = 0, q_b_ = 0;
    std::vector<LayerIndex> layers_;
};

/// Fresh model with seeded initialization (deterministic given the generator state).
Model build_model(const ModelConfig& config, std::mt19937_64& rng);

std::size_t param_count(const Model& model);

/// Activations saved by forward_array for backward. Reusing one tape across
/// calls reuses its buffers.
struct ForwardTape {
    FieldShape shape;  // [width, batch, nt, ny, nx]
    std::vector<double> input;
    struct Layer {
        std::vector<double> u;
        RetainedSpectrum spectrum;
        std::vector<double> kb;
        MlpTape mlp;
        std::vector<double> dact;
    };
    std::vector<Layer> layers;
    std::vector<double> last;  // u_L
};

/// Evaluate the operator on a normalized channel-major [c_in, batch, nt, ny, nx] array
/// (`shape.channels` = c_in); returns [c_out, batch, nt, ny, nx].
std::vector<double> forward_array(const Model& model, std::span<const double> x, const FieldShape& shape,
                                  ForwardTape* tape = nullptr);

/// Reverse pass: accumulates parameter gradients into model.params() and returns dL/dx.
std::vector<double> backward(Model& model, const ForwardTape& tape, std::span<const double> ybar);

/// FieldStack front end: checks channel names and window length against the config.
FieldStack forward(const Model& model, const FieldStack& x);

/// Output of the l-th spectral kernel K_l given the model input (diagnostic probe).
std::vector<double> kernel_output(const Model& model, std::span<const double> x, const FieldShape& shape,
                                  std::size_t layer);

}  // namespace stfno
