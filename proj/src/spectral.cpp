#include "stfno/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "stfno/error.hpp"

namespace stfno {

void ModeSpec::validate() const {
    require(kx_max >= 1 && ky_max >= 1, "mode thresholds must be at least 1");
    if (w_max) require(*w_max >= 1, "temporal mode threshold must be at least 1");
}

void ModeSpec::validate_for(std::size_t nt, std::size_t ny, std::size_t nx) const {
    validate();
    require(kx_max <= nx / 2, "kx_max exceeds half the x extent");
    require(ky_max <= ny / 2, "ky_max exceeds half the y extent");
    if (w_max) require(*w_max <= nt, "w_max exceeds the time extent");
}

std::size_t retained_mode_count(const ModeSpec& m) {
    m.validate();
    return m.kx_max * m.ky_max * m.w_count();
}

std::size_t retained_modes_total(const ModeSpec& m) { return 2 * retained_mode_count(m); }

std::vector<long> retained_ky(const ModeSpec& m) {
    std::vector<long> k;
    const auto n = static_cast<long>(m.ky_max);
    for (long i = 0; i < n; ++i) k.push_back(i);
    for (long i = -n; i < 0; ++i) k.push_back(i);
    return k;
}

std::vector<long> retained_w(const ModeSpec& m) {
    const auto w = static_cast<long>(m.w_count());
    const long neg = w / 2;
    std::vector<long> k;
    for (long i = 0; i < w - neg; ++i) k.push_back(i);
    for (long i = -neg; i < 0; ++i) k.push_back(i);
    return k;
}

namespace {

std::size_t wrap(long k, std::size_t n) {
    const auto nn = static_cast<long>(n);
    return static_cast<std::size_t>(((k % nn) + nn) % nn);
}

// FFTW plans are cached per geometry and alignment. SIMD plans are only reused on
// arrays with the alignment they were planned for. Planning is serialized;
// execution through the new-array interface is re-entrant.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    // 1-D complex transform of length n along a strided axis of a buffer shaped
    // [outer][n][inner], in place.
    fftw_plan axis_c2c(int n, int outer, int inner, int inner_count, int sign, cplx* buf) {
        const int al = aligned(buf) ? 1 : 0;
        const auto key = std::make_tuple(al, n, outer, inner, inner_count, sign);
        std::lock_guard lock(mu_);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        fftw_iodim dim{n, inner, inner};
        fftw_iodim loops[2] = {{outer, n * inner, n * inner}, {inner_count, 1, 1}};
        auto* p = reinterpret_cast<fftw_complex*>(buf);
        fftw_plan plan = fftw_plan_guru_dft(1, &dim, 2, loops, p, p, sign, flags(al));
        if (!plan) throw InvalidArgument("FFTW could not plan axis transform");
        plans_.emplace(key, plan);
        return plan;
    }

    fftw_plan r2c_nd(const std::vector<int>& dims, int batch, double* in, cplx* out) {
        const int al = aligned(in) && aligned(out) ? 1 : 0;
        return nd(2 * al + 1, dims, batch, [&](int rank, const int* n, int dist_r, int dist_c) {
            return fftw_plan_many_dft_r2c(rank, n, batch, in, nullptr, 1, dist_r, reinterpret_cast<fftw_complex*>(out),
                                          nullptr, 1, dist_c, flags(al));
        });
    }

    fftw_plan c2r_nd(const std::vector<int>& dims, int batch, cplx* in, double* out) {
        const int al = aligned(in) && aligned(out) ? 1 : 0;
        return nd(2 * al + 2, dims, batch, [&](int rank, const int* n, int dist_r, int dist_c) {
            return fftw_plan_many_dft_c2r(rank, n, batch, reinterpret_cast<fftw_complex*>(in), nullptr, 1, dist_c, out,
                                          nullptr, 1, dist_r, flags(al));
        });
    }

private:
    template <typename T>
    static bool aligned(T* p) {
        return fftw_alignment_of(reinterpret_cast<double*>(p)) == 0;
    }
    // FFTW_ESTIMATE keeps plan choice, and therefore rounding, identical across runs.
    static unsigned flags(int al) { return al ? FFTW_ESTIMATE : FFTW_ESTIMATE | FFTW_UNALIGNED; }

    template <typename Make>
    fftw_plan nd(int kind, const std::vector<int>& dims, int batch, Make make) {
        std::vector<int> key{kind, batch};
        key.insert(key.end(), dims.begin(), dims.end());
        std::lock_guard lock(mu_);
        auto it = nd_plans_.find(key);
        if (it != nd_plans_.end()) return it->second;
        int dist_r = 1;
        for (int d : dims) dist_r *= d;
        const int dist_c = dist_r / dims.back() * (dims.back() / 2 + 1);
        fftw_plan plan = make(static_cast<int>(dims.size()), dims.data(), dist_r, dist_c);
        if (!plan) throw InvalidArgument("FFTW could not plan real transform");
        nd_plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mu_;
    std::map<std::tuple<int, int, int, int, int, int>, fftw_plan> plans_;
    std::map<std::vector<int>, fftw_plan> nd_plans_;
};

std::vector<int> to_int_dims(const std::vector<std::size_t>& dims) {
    std::vector<int> d;
    for (auto v : dims) d.push_back(static_cast<int>(v));
    return d;
}

void rfft_rows(const double* in, cplx* out, std::size_t rows, std::size_t n) {
    auto& pc = PlanCache::instance();
    // The r2c plan never writes its input.
    auto* src = const_cast<double*>(in);
    fftw_plan p = pc.r2c_nd({static_cast<int>(n)}, static_cast<int>(rows), src, out);
    fftw_execute_dft_r2c(p, src, reinterpret_cast<fftw_complex*>(out));
}

void irfft_rows(cplx* in, double* out, std::size_t rows, std::size_t n) {
    auto& pc = PlanCache::instance();
    fftw_plan p = pc.c2r_nd({static_cast<int>(n)}, static_cast<int>(rows), in, out);
    fftw_execute_dft_c2r(p, reinterpret_cast<fftw_complex*>(in), out);
}

void axis_transform(cplx* buf, std::size_t outer, std::size_t n, std::size_t inner, std::size_t inner_count, int sign) {
    auto& pc = PlanCache::instance();
    fftw_plan p = pc.axis_c2c(static_cast<int>(n), static_cast<int>(outer), static_cast<int>(inner),
                              static_cast<int>(inner_count), sign, buf);
    auto* b = reinterpret_cast<fftw_complex*>(buf);
    fftw_execute_dft(p, b, b);
}

void check_shape(const FieldShape& s, const ModeSpec& m) {
    require(s.channels >= 1 && s.nt >= 1, "field shape must have at least one channel and one slice");
    require(s.nx >= 2 && s.ny >= 2, "transform axes must have length >= 2");
    m.validate_for(s.nt, s.ny, s.nx);
}

}  // namespace

std::size_t ComplexSpectrum::per_batch() const {
    std::size_t n = half();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n *= dims[i];
    return n;
}

cplx ComplexSpectrum::coefficient(std::size_t b, std::span<const long> k) const {
    require(k.size() == dims.size(), "frequency rank does not match spectrum rank");
    std::vector<std::size_t> idx(dims.size());
    bool conj = false;
    const long nlast = static_cast<long>(dims.back());
    long klast = ((k.back() % nlast) + nlast) % nlast;
    if (klast > nlast / 2) {
        conj = true;
        klast = nlast - klast;
    }
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) idx[i] = wrap(conj ? -k[i] : k[i], dims[i]);
    idx.back() = static_cast<std::size_t>(klast);
    std::size_t off = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) off = off * dims[i] + idx[i];
    off = off * half() + idx.back();
    const cplx v = data[b * per_batch() + off];
    return conj ? std::conj(v) : v;
}

ComplexSpectrum dft_forward(std::span<const double> field, std::size_t batch, std::vector<std::size_t> dims) {
    require(!dims.empty() && dims.size() <= 3, "transform rank must be 1, 2 or 3");
    std::size_t n = 1;
    for (auto d : dims) {
        require(d >= 2, "transform axes must have length >= 2");
        n *= d;
    }
    require(field.size() == batch * n, "field size does not match batch and extents");
    ComplexSpectrum s;
    s.batch = batch;
    s.dims = std::move(dims);
    s.data.assign(batch * s.per_batch(), cplx{});
    auto* src = const_cast<double*>(field.data());
    fftw_plan p = PlanCache::instance().r2c_nd(to_int_dims(s.dims), static_cast<int>(batch), src, s.data.data());
    fftw_execute_dft_r2c(p, src, reinterpret_cast<fftw_complex*>(s.data.data()));
    return s;
}

std::vector<double> dft_inverse(const ComplexSpectrum& spec) {
    std::size_t n = 1;
    for (auto d : spec.dims) n *= d;
    require(spec.data.size() == spec.batch * spec.per_batch(), "spectrum data size mismatch");
    std::vector<cplx> work = spec.data;
    std::vector<double> out(spec.batch * n);
    fftw_plan p =
        PlanCache::instance().c2r_nd(to_int_dims(spec.dims), static_cast<int>(spec.batch), work.data(), out.data());
    fftw_execute_dft_c2r(p, reinterpret_cast<fftw_complex*>(work.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : out) v *= scale;
    return out;
}

ComplexSpectrum truncate_modes(const ComplexSpectrum& spec, const ModeSpec& m) {
    const std::size_t rank = spec.dims.size();
    require(rank == (m.temporal() ? 3u : 2u), "mode spec rank does not match spectrum rank");
    const std::size_t nx = spec.dims[rank - 1];
    const std::size_t ny = spec.dims[rank - 2];
    const std::size_t nt = m.temporal() ? spec.dims[0] : 1;
    m.validate_for(nt, ny, nx);

    std::vector<std::uint8_t> keep_y(ny, 0), keep_t(nt, 0);
    for (long k : retained_ky(m)) keep_y[wrap(k, ny)] = 1;
    for (long k : retained_w(m)) keep_t[wrap(k, nt)] = 1;

    ComplexSpectrum out = spec;
    const std::size_t h = spec.half();
    for (std::size_t b = 0; b < spec.batch; ++b) {
        for (std::size_t t = 0; t < nt; ++t) {
            for (std::size_t y = 0; y < ny; ++y) {
                cplx* row = out.data.data() + b * spec.per_batch() + (t * ny + y) * h;
                for (std::size_t x = 0; x < h; ++x) {
                    if (!(keep_t[t] && keep_y[y] && x < m.kx_max)) row[x] = cplx{};
                }
            }
        }
    }
    return out;
}

SpectralWeights::SpectralWeights(std::size_t c_in, std::size_t c_out, ModeSpec modes)
    : c_in_(c_in), c_out_(c_out), modes_(modes) {
    require(c_in >= 1 && c_out >= 1, "spectral weights need at least one channel");
    modes_.validate();
    data_.assign(c_in * c_out * retained_modes_total(modes_), cplx{});
}

std::vector<std::size_t> SpectralWeights::shape() const {
    return {c_in_, c_out_, modes_.w_count(), modes_.ky_count(), modes_.kx_max};
}

void SpectralWeights::init_uniform(std::mt19937_64& rng) {
    const double s = 1.0 / static_cast<double>(c_in_ * c_out_);
    std::uniform_real_distribution<double> u(-s, s);
    for (auto& z : data_) {
        const double re = u(rng);
        const double im = u(rng);
        z = {re, im};
    }
}

namespace {

// Per-thread scratch reused across calls; large temporaries otherwise dominate
// small transforms through allocation and first-touch page faults.
struct Scratch {
    std::vector<cplx> rows;
    std::vector<cplx> plane;
    std::vector<double> real;
    RetainedSpectrum a;
    RetainedSpectrum b;
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

template <typename T>
T* sized(std::vector<T>& v, std::size_t n) {
    if (v.size() < n) v.resize(n);
    return v.data();
}

}  // namespace

void forward_retained(std::span<const double> v, const FieldShape& shape, const ModeSpec& m, RetainedSpectrum& out) {
    check_shape(shape, m);
    require(v.size() == shape.size(), "input size does not match field shape");
    const std::size_t C = shape.channels, B = shape.batch, T = shape.nt, Ny = shape.ny, Nx = shape.nx;
    const std::size_t H = Nx / 2 + 1, Kx = m.kx_max, Ky = m.ky_count(), plane = Ky * Kx;
    const std::size_t stacks = C * B * T;
    const auto ky = retained_ky(m);
    Scratch& sc = scratch();

    cplx* rows = sized(sc.rows, stacks * Ny * H);
    rfft_rows(v.data(), rows, stacks * Ny, Nx);
    axis_transform(rows, stacks, Ny, H, Kx, FFTW_FORWARD);

    out.shape = shape;
    out.modes = m;
    out.nmodes = retained_modes_total(m);
    out.slots = m.temporal() ? B : B * T;

    // Gather retained (ky, kx) into [C*B*T][Ky][Kx].
    cplx* a2 = m.temporal() ? sized(sc.plane, stacks * plane) : sized(out.data, stacks * plane);
    if (!m.temporal()) out.data.resize(stacks * plane);
    for (std::size_t st = 0; st < stacks; ++st) {
        for (std::size_t j = 0; j < Ky; ++j) {
            std::copy_n(rows + (st * Ny + wrap(ky[j], Ny)) * H, Kx, a2 + (st * Ky + j) * Kx);
        }
    }
    if (!m.temporal()) return;

    axis_transform(a2, C * B, T, plane, plane, FFTW_FORWARD);
    const auto w = retained_w(m);
    out.data.resize(C * B * w.size() * plane);
    for (std::size_t cb = 0; cb < C * B; ++cb) {
        for (std::size_t q = 0; q < w.size(); ++q) {
            std::copy_n(a2 + (cb * T + wrap(w[q], T)) * plane, plane, out.data.data() + (cb * w.size() + q) * plane);
        }
    }
}

RetainedSpectrum forward_retained(std::span<const double> v, const FieldShape& shape, const ModeSpec& m) {
    RetainedSpectrum out;
    forward_retained(v, shape, m, out);
    return out;
}

void inverse_retained(const RetainedSpectrum& spec, std::span<double> out) {
    const FieldShape& shape = spec.shape;
    const ModeSpec& m = spec.modes;
    const std::size_t C = shape.channels, B = shape.batch, T = shape.nt, Ny = shape.ny, Nx = shape.nx;
    const std::size_t H = Nx / 2 + 1, Kx = m.kx_max, Ky = m.ky_count(), plane = Ky * Kx;
    const std::size_t stacks = C * B * T;
    require(out.size() == shape.size(), "output size does not match field shape");
    require(spec.data.size() == C * spec.slots * spec.nmodes, "retained spectrum size mismatch");
    const auto ky = retained_ky(m);
    Scratch& sc = scratch();

    const cplx* a2 = spec.data.data();
    if (m.temporal()) {
        const auto w = retained_w(m);
        cplx* buf = sized(sc.plane, stacks * plane);
        std::fill_n(buf, stacks * plane, cplx{});
        for (std::size_t cb = 0; cb < C * B; ++cb) {
            for (std::size_t q = 0; q < w.size(); ++q) {
                std::copy_n(spec.data.data() + (cb * w.size() + q) * plane, plane, buf + (cb * T + wrap(w[q], T)) * plane);
            }
        }
        axis_transform(buf, C * B, T, plane, plane, FFTW_BACKWARD);
        a2 = buf;
    }

    cplx* rows = sized(sc.rows, stacks * Ny * H);
    std::fill_n(rows, stacks * Ny * H, cplx{});
    for (std::size_t st = 0; st < stacks; ++st) {
        for (std::size_t j = 0; j < Ky; ++j) {
            std::copy_n(a2 + (st * Ky + j) * Kx, Kx, rows + (st * Ny + wrap(ky[j], Ny)) * H);
        }
    }
    axis_transform(rows, stacks, Ny, H, Kx, FFTW_BACKWARD);
    irfft_rows(rows, out.data(), stacks * Ny, Nx);

    const double n = static_cast<double>(Ny * Nx * (m.temporal() ? T : 1));
    const double scale = 1.0 / n;
    for (auto& x : out) x *= scale;
}

namespace {

void check_weights(const SpectralWeightsView& R, const FieldShape& shape) {
    require(R.c_in == shape.channels, "spectral weights c_in does not match input channels");
    require(R.data.size() == R.c_in * R.c_out * retained_modes_total(R.modes), "spectral weights size mismatch");
}

// out[o][s][m] = sum_i R[i][o][m] * in[i][s][m]
void mix_modes(const cplx* R, std::size_t c_in, std::size_t c_out, std::size_t slots, std::size_t nm, const cplx* in,
               cplx* out) {
    std::fill_n(out, c_out * slots * nm, cplx{});
    const auto* r = reinterpret_cast<const double*>(R);
    const auto* x = reinterpret_cast<const double*>(in);
    auto* y = reinterpret_cast<double*>(out);
    for (std::size_t i = 0; i < c_in; ++i) {
        for (std::size_t o = 0; o < c_out; ++o) {
            const double* ro = r + 2 * (i * c_out + o) * nm;
            for (std::size_t s = 0; s < slots; ++s) {
                const double* xi = x + 2 * (i * slots + s) * nm;
                double* yo = y + 2 * (o * slots + s) * nm;
                for (std::size_t k = 0; k < nm; ++k) {
                    const double ar = ro[2 * k], ai = ro[2 * k + 1];
                    const double br = xi[2 * k], bi = xi[2 * k + 1];
                    yo[2 * k] += ar * br - ai * bi;
                    yo[2 * k + 1] += ar * bi + ai * br;
                }
            }
        }
    }
}

}  // namespace

void spectral_linear(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                     std::span<double> out, RetainedSpectrum* saved) {
    check_weights(R, shape);
    Scratch& sc = scratch();
    RetainedSpectrum& V = saved ? *saved : sc.a;
    forward_retained(v, shape, R.modes, V);
    RetainedSpectrum& Y = sc.b;
    Y.shape = shape;
    Y.shape.channels = R.c_out;
    Y.modes = R.modes;
    Y.slots = V.slots;
    Y.nmodes = V.nmodes;
    Y.data.resize(R.c_out * V.slots * V.nmodes);
    require(out.size() == Y.shape.size(), "spectral_linear output size mismatch");
    mix_modes(R.data.data(), R.c_in, R.c_out, V.slots, V.nmodes, V.data.data(), Y.data.data());
    inverse_retained(Y, out);
}

std::vector<double> spectral_linear(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                                    RetainedSpectrum* saved) {
    FieldShape os = shape;
    os.channels = R.c_out;
    std::vector<double> out(os.size());
    spectral_linear(v, shape, R, out, saved);
    return out;
}

void spectral_linear_backward(const RetainedSpectrum& V, const SpectralWeightsView& R, std::span<const double> ybar,
                              std::size_t c_out, std::span<double> dv, std::span<cplx> dR) {
    require(c_out == R.c_out, "cotangent channels do not match spectral weights");
    check_weights(R, V.shape);
    FieldShape out_shape = V.shape;
    out_shape.channels = c_out;
    require(ybar.size() == out_shape.size(), "cotangent size does not match output shape");
    require(dv.size() == V.shape.size() && dR.size() == R.data.size(), "gradient buffer size mismatch");

    Scratch& sc = scratch();
    RetainedSpectrum& FY = sc.a;
    forward_retained(ybar, out_shape, R.modes, FY);
    const std::size_t S = V.slots, nm = V.nmodes, Ci = R.c_in, Co = R.c_out;
    const ModeSpec& m = R.modes;
    const double n = static_cast<double>(V.shape.ny * V.shape.nx * (m.temporal() ? V.shape.nt : 1));

    // dR[i][o][k] += (c_k / N) sum_s FY[o][s][k] conj(V[i][s][k]),  c_k = 1 at kx = 0, else 2.
    std::vector<double> weight(nm);
    for (std::size_t k = 0; k < nm; ++k) weight[k] = (k % m.kx_max == 0 ? 1.0 : 2.0) / n;
    auto* g = reinterpret_cast<double*>(dR.data());
    const auto* fy = reinterpret_cast<const double*>(FY.data.data());
    const auto* fv = reinterpret_cast<const double*>(V.data.data());
    for (std::size_t i = 0; i < Ci; ++i) {
        for (std::size_t o = 0; o < Co; ++o) {
            double* gio = g + 2 * (i * Co + o) * nm;
            for (std::size_t s = 0; s < S; ++s) {
                const double* a = fy + 2 * (o * S + s) * nm;
                const double* b = fv + 2 * (i * S + s) * nm;
                for (std::size_t k = 0; k < nm; ++k) {
                    const double ar = a[2 * k], ai = a[2 * k + 1];
                    const double br = b[2 * k], bi = b[2 * k + 1];
                    gio[2 * k] += weight[k] * (ar * br + ai * bi);
                    gio[2 * k + 1] += weight[k] * (ai * br - ar * bi);
                }
            }
        }
    }

    // dv += F^-1( R^H FY ).
    RetainedSpectrum& VB = sc.b;
    VB.shape = V.shape;
    VB.modes = m;
    VB.slots = S;
    VB.nmodes = nm;
    VB.data.assign(Ci * S * nm, cplx{});
    const auto* r = reinterpret_cast<const double*>(R.data.data());
    auto* vb = reinterpret_cast<double*>(VB.data.data());
    for (std::size_t i = 0; i < Ci; ++i) {
        for (std::size_t o = 0; o < Co; ++o) {
            const double* rio = r + 2 * (i * Co + o) * nm;
            for (std::size_t s = 0; s < S; ++s) {
                const double* a = fy + 2 * (o * S + s) * nm;
                double* dst = vb + 2 * (i * S + s) * nm;
                for (std::size_t k = 0; k < nm; ++k) {
                    const double rr = rio[2 * k], ri = rio[2 * k + 1];
                    const double ar = a[2 * k], ai = a[2 * k + 1];
                    dst[2 * k] += rr * ar + ri * ai;
                    dst[2 * k + 1] += rr * ai - ri * ar;
                }
            }
        }
    }
    double* tmp = sized(sc.real, V.shape.size());
    inverse_retained(VB, {tmp, V.shape.size()});
    for (std::size_t j = 0; j < V.shape.size(); ++j) dv[j] += tmp[j];
}

SpectralVjp spectral_linear_vjp(std::span<const double> v, const FieldShape& shape, const SpectralWeightsView& R,
                                std::span<const double> ybar) {
    check_weights(R, shape);
    const RetainedSpectrum V = forward_retained(v, shape, R.modes);
    SpectralVjp g;
    g.dv.assign(v.size(), 0.0);
    g.dR.assign(R.data.size(), cplx{});
    spectral_linear_backward(V, R, ybar, R.c_out, g.dv, g.dR);
    return g;
}

}  // namespace stfno
