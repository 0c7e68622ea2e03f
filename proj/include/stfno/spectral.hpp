#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace stfno {

using cplx = std::complex<double>;

/// Fourier truncation thresholds.
///
/// Retained set (per transformed field):
///   kx in [0, kx_max) on the real-to-complex (half) axis,
///   ky in [-ky_max, ky_max) on the full y axis,
///   omega in [-floor(w/2), w - floor(w/2)) on the full time axis when w_max is present,
/// i.e. w_max counts retained temporal frequencies across both signs.
struct ModeSpec {
    std::size_t kx_max = 1;
    std::size_t ky_max = 1;
    std::optional<std::size_t> w_max;

    bool temporal() const { return w_max.has_value(); }
    void validate() const;
    /// Checks the thresholds fit a field of the given extents (nt ignored for 2-D specs).
    void validate_for(std::size_t nt, std::size_t ny, std::size_t nx) const;

    std::size_t ky_count() const { return 2 * ky_max; }
    std::size_t w_count() const { return w_max.value_or(1); }

    bool operator==(const ModeSpec&) const = default;
};

/// Per-quadrant block size kx_max * ky_max (* w_max).
std::size_t retained_mode_count(const ModeSpec& m);
/// Number of complex coefficients one (c_in, c_out) pair of R holds.
std::size_t retained_modes_total(const ModeSpec& m);

/// Signed ky / omega frequencies in retained order.
std::vector<long> retained_ky(const ModeSpec& m);
std::vector<long> retained_w(const ModeSpec& m);

/// Half spectrum of a batch of real fields, forward transform unnormalized.
struct ComplexSpectrum {
    std::size_t batch = 1;
    std::vector<std::size_t> dims;  // real-space extents, x last
    std::vector<cplx> data;         // [batch][dims[0]]...[dims.back()/2 + 1]

    std::size_t half() const { return dims.back() / 2 + 1; }
    std::size_t per_batch() const;
    /// Coefficient at signed frequencies k (one per axis) of the full spectrum,
    /// reconstructed from the half spectrum through conjugate symmetry.
    cplx coefficient(std::size_t b, std::span<const long> k) const;
};

ComplexSpectrum dft_forward(std::span<const double> field, std::size_t batch, std::vector<std::size_t> dims);
/// Inverse of dft_forward; carries 1/N per axis.
std::vector<double> dft_inverse(const ComplexSpectrum& spec);

/// Zero every coefficient outside the retained set. Accepts 2-D spectra (dims = ny, nx)
/// for spatial specs and 3-D spectra (dims = nt, ny, nx) for temporal specs.
ComplexSpectrum truncate_modes(const ComplexSpectrum& spec, const ModeSpec& m);

/// Extents of a [channels, batch, nt, ny, nx] array (channel-major, so pointwise maps
/// see batch * nt * ny * nx points). 2-D kernels treat each time slice independently;
/// temporal kernels transform each batch member's window.
struct FieldShape {
    std::size_t channels = 1;
    std::size_t nt = 1;
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::size_t batch = 1;

    std::size_t points() const { return batch * nt * ny * nx; }
    std::size_t size() const { return channels * points(); }
    bool operator==(const FieldShape&) const = default;
};

/// Non-owning view of R laid out [c_in][c_out][mode], modes ordered (omega, ky, kx).
struct SpectralWeightsView {
    std::size_t c_in = 0;
    std::size_t c_out = 0;
    ModeSpec modes;
    std::span<const cplx> data;
};

/// Owning complex weight tensor R.
class SpectralWeights {
public:
    SpectralWeights(std::size_t c_in, std::size_t c_out, ModeSpec modes);

    std::size_t c_in() const { return c_in_; }
    std::size_t c_out() const { return c_out_; }
    const ModeSpec& modes() const { return modes_; }
    std::size_t mode_count() const { return retained_modes_total(modes_); }
    /// Logical shape [c_in, c_out, w, 2*ky_max, kx_max].
    std::vector<std::size_t> shape() const;

    cplx& at(std::size_t i, std::size_t o, std::size_t m) { return data_[(i * c_out_ + o) * mode_count() + m]; }
    cplx at(std::size_t i, std::size_t o, std::size_t m) const { return data_[(i * c_out_ + o) * mode_count() + m]; }
    std::vector<cplx>& data() { return data_; }
    const std::vector<cplx>& data() const { return data_; }
    SpectralWeightsView view() const { return {c_in_, c_out_, modes_, data_}; }

    /// Real and imaginary parts uniform in (-s, s), s = 1 / (c_in * c_out).
    void init_uniform(std::mt19937_64& rng);

private:
    std::size_t c_in_, c_out_;
    ModeSpec modes_;
    std::vector<cplx> data_;
};

/// Retained Fourier coefficients of a field, laid out [channel][slot][mode];
/// slots = batch * nt for 2-D specs and batch for temporal specs.
struct RetainedSpectrum {
    FieldShape shape;
    ModeSpec modes;
    std::size_t slots = 1;
    std::size_t nmodes = 0;
    std::vector<cplx> data;
};

RetainedSpectrum forward_retained(std::span<const double> v, const FieldShape& shape, const ModeSpec& m);
/// As above, reusing the storage of `out`.
void forward_retained(std::span<const double> v, const FieldShape& shape, const ModeSpec& m, RetainedSpectrum& out);
/// Real field whose retained coefficients are `spec` and all others zero (1/N normalized).
void inverse_retained(const RetainedSpectrum& spec, std::span<double> out);

/// K(v) = F^-1(R . F(v)) on retained modes. When `saved` is non-null the
/// retained spectrum of v is stored there for the backward pass.
std::vector<double> spectral_linear(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                                    RetainedSpectrum* saved = nullptr);
void spectral_linear(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                     std::span<double> out, RetainedSpectrum* saved = nullptr);

/// Accumulate the reverse-mode gradient given the forward's saved spectrum.
/// `dv` (size of v) and `dR` (size of R) are added to, not overwritten.
void spectral_linear_backward(const RetainedSpectrum& saved, const SpectralWeightsView& R, std::span<const double> ybar,
                              std::size_t c_out, std::span<double> dv, std::span<cplx> dR);

struct SpectralVjp {
    std::vector<double> dv;
    std::vector<cplx> dR;
};

SpectralVjp spectral_linear_vjp(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                                std::span<const double> ybar);

}  // namespace stfno
