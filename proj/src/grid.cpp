#include "stfno/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stfno/error.hpp"

namespace stfno {

void Grid::validate() const {
    require(nx >= 4 && ny >= 4, "grid must be at least 4x4, got " + std::to_string(ny) + "x" + std::to_string(nx));
    require(dx > 0.0 && dy > 0.0, "grid spacing must be positive");
}

FieldStack::FieldStack(std::vector<std::string> channels, std::size_t nt, Grid grid, double dt, double t0)
    : names_(std::move(channels)), nt_(nt), grid_(grid), dt_(dt), t0_(t0) {
    grid_.validate();
    require(!names_.empty(), "field stack needs at least one channel");
    std::set<std::string> seen(names_.begin(), names_.end());
    require(seen.size() == names_.size(), "channel names must be unique");
    data_.assign(names_.size() * nt_ * grid_.points(), 0.0);
}

std::size_t FieldStack::channel_index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    require(it != names_.end(), "no channel named '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

FieldStack FieldStack::time_window(std::size_t t_begin, std::size_t count) const {
    require(t_begin + count <= nt_, "time window out of range");
    FieldStack out(names_, count, grid_, dt_, t0_ + dt_ * static_cast<double>(t_begin));
    const std::size_t s = slice_size();
    for (std::size_t c = 0; c < channels(); ++c) {
        std::copy_n(data_.begin() + (c * nt_ + t_begin) * s, count * s, out.data_.begin() + c * count * s);
    }
    return out;
}

FieldStack FieldStack::select_channels(const std::vector<std::string>& names) const {
    FieldStack out(names, nt_, grid_, dt_, t0_);
    const std::size_t n = channel_size();
    for (std::size_t c = 0; c < names.size(); ++c) {
        const std::size_t src = channel_index(names[c]);
        std::copy_n(data_.begin() + src * n, n, out.data_.begin() + c * n);
    }
    return out;
}

LandMask LandMask::all_ocean(std::size_t ny, std::size_t nx) {
    return LandMask{ny, nx, std::vector<std::uint8_t>(ny * nx, 0)};
}

std::size_t LandMask::ocean_count() const {
    return static_cast<std::size_t>(std::count(land.begin(), land.end(), std::uint8_t{0}));
}

void LandMask::validate(const Grid& g) const {
    require(ny == g.ny && nx == g.nx && land.size() == ny * nx, "land mask shape does not match grid");
    require(ocean_count() > 0, "land mask has no ocean cells");
}

void ChannelStats::validate() const {
    require(mean.size() == channels.size() && stddev.size() == channels.size(), "channel stats size mismatch");
    for (std::size_t c = 0; c < channels.size(); ++c) {
        require(std::isfinite(mean[c]) && std::isfinite(stddev[c]) && stddev[c] > 0.0,
                "channel '" + channels[c] + "' has zero or non-finite variance");
    }
}

ChannelStats compute_stats(const FieldStack& fs, const LandMask& mask, std::size_t t_begin, std::size_t t_end) {
    mask.validate(fs.grid());
    require(t_begin < t_end && t_end <= fs.nt(), "stats time range is empty or out of range");
    ChannelStats st;
    st.channels = fs.names();
    const std::size_t np = fs.slice_size();
    for (std::size_t c = 0; c < fs.channels(); ++c) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t t = t_begin; t < t_end; ++t) {
            auto s = fs.slice(c, t);
            for (std::size_t p = 0; p < np; ++p) {
                if (!mask.is_land(p)) { sum += s[p]; ++n; }
            }
        }
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t t = t_begin; t < t_end; ++t) {
            auto s = fs.slice(c, t);
            for (std::size_t p = 0; p < np; ++p) {
                if (!mask.is_land(p)) ss += (s[p] - mean) * (s[p] - mean);
            }
        }
        st.mean.push_back(mean);
        st.stddev.push_back(std::sqrt(ss / static_cast<double>(n)));
    }
    st.validate();
    return st;
}

namespace {

struct Stencil {
    std::size_t i0, i1;
    double w;  // weight of i1
};

std::vector<Stencil> axis_stencil(std::size_t n_fine, std::size_t n_coarse, std::size_t factor, double offset,
                                  bool periodic) {
    std::vector<Stencil> out(n_coarse);
    for (std::size_t k = 0; k < n_coarse; ++k) {
        const double pos = offset + static_cast<double>(k * factor);
        const double fl = std::floor(pos);
        auto i0 = static_cast<std::size_t>(fl);
        double w = pos - fl;
        std::size_t i1 = i0 + 1;
        if (i1 >= n_fine) {
            if (periodic) {
                i1 -= n_fine;
            } else {
                i1 = n_fine - 1;
            }
        }
        if (i0 >= n_fine) i0 = periodic ? i0 - n_fine : n_fine - 1;
        out[k] = {i0, i1, w};
    }
    return out;
}

void check_resample_args(const Grid& g, std::size_t factor, Offset offset) {
    require(factor >= 1, "resample factor must be positive");
    require(factor < g.nx && factor < g.ny, "resample factor must be smaller than both grid extents");
    const double f = static_cast<double>(factor);
    require(offset.dx >= 0.0 && offset.dx < f && offset.dy >= 0.0 && offset.dy < f,
            "resample offset must lie in [0, factor)");
}

Grid coarse_grid(const Grid& g, std::size_t factor) {
    Grid c = g;
    c.nx = g.nx / factor;
    c.ny = g.ny / factor;
    c.dx = g.dx * static_cast<double>(factor);
    c.dy = g.dy * static_cast<double>(factor);
    c.validate();
    return c;
}

}  // namespace

FieldStack bilinear_resample(const FieldStack& fs, std::size_t factor, Offset offset) {
    const Grid& g = fs.grid();
    check_resample_args(g, factor, offset);
    const Grid cg = coarse_grid(g, factor);
    const auto sx = axis_stencil(g.nx, cg.nx, factor, offset.dx, g.periodic_x);
    const auto sy = axis_stencil(g.ny, cg.ny, factor, offset.dy, g.periodic_y);

    FieldStack out(fs.names(), fs.nt(), cg, fs.dt(), fs.t0());
    for (std::size_t c = 0; c < fs.channels(); ++c) {
        for (std::size_t t = 0; t < fs.nt(); ++t) {
            auto src = fs.slice(c, t);
            auto dst = out.slice(c, t);
            for (std::size_t j = 0; j < cg.ny; ++j) {
                const auto& ry = sy[j];
                const double* r0 = src.data() + ry.i0 * g.nx;
                const double* r1 = src.data() + ry.i1 * g.nx;
                for (std::size_t i = 0; i < cg.nx; ++i) {
                    const auto& rx = sx[i];
                    const double top = (1.0 - rx.w) * r0[rx.i0] + rx.w * r0[rx.i1];
                    const double bot = (1.0 - rx.w) * r1[rx.i0] + rx.w * r1[rx.i1];
                    dst[j * cg.nx + i] = (1.0 - ry.w) * top + ry.w * bot;
                }
            }
        }
    }
    return out;
}

LandMask resample_mask(const LandMask& mask, const Grid& fine, std::size_t factor, Offset offset) {
    mask.validate(fine);
    check_resample_args(fine, factor, offset);
    const Grid cg = coarse_grid(fine, factor);
    const auto sx = axis_stencil(fine.nx, cg.nx, factor, offset.dx, fine.periodic_x);
    const auto sy = axis_stencil(fine.ny, cg.ny, factor, offset.dy, fine.periodic_y);
    LandMask out = LandMask::all_ocean(cg.ny, cg.nx);
    for (std::size_t j = 0; j < cg.ny; ++j) {
        for (std::size_t i = 0; i < cg.nx; ++i) {
            const bool land = mask.is_land(sy[j].i0, sx[i].i0) || mask.is_land(sy[j].i0, sx[i].i1) ||
                              mask.is_land(sy[j].i1, sx[i].i0) || mask.is_land(sy[j].i1, sx[i].i1);
            out.land[j * cg.nx + i] = land ? 1 : 0;
        }
    }
    return out;
}

Offset draw_offset(std::size_t factor, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, static_cast<double>(factor));
    Offset o;
    o.dy = u(rng);
    o.dx = u(rng);
    return o;
}

std::pair<FieldStack, Offset> random_offset_coarsen(const FieldStack& fs, std::size_t factor, std::mt19937_64& rng) {
    check_resample_args(fs.grid(), factor, Offset{});
    const Offset o = draw_offset(factor, rng);
    return {bilinear_resample(fs, factor, o), o};
}

namespace {

FieldStack affine_per_channel(const FieldStack& fs, const ChannelStats& stats, bool forward) {
    stats.validate();
    require(stats.channels == fs.names(), "channel stats do not match field stack channels");
    FieldStack out = fs;
    const std::size_t n = fs.channel_size();
    for (std::size_t c = 0; c < fs.channels(); ++c) {
        double* d = out.data().data() + c * n;
        const double m = stats.mean[c];
        const double s = stats.stddev[c];
        if (forward) {
            const double inv = 1.0 / s;
            for (std::size_t i = 0; i < n; ++i) d[i] = (d[i] - m) * inv;
        } else {
            for (std::size_t i = 0; i < n; ++i) d[i] = d[i] * s + m;
        }
    }
    return out;
}

}  // namespace

FieldStack normalize(const FieldStack& fs, const ChannelStats& stats) { return affine_per_channel(fs, stats, true); }

FieldStack denormalize(const FieldStack& fs, const ChannelStats& stats) { return affine_per_channel(fs, stats, false); }

void fill_land(FieldStack& fs, const LandMask& mask, double value) {
    mask.validate(fs.grid());
    for (std::size_t c = 0; c < fs.channels(); ++c) {
        for (std::size_t t = 0; t < fs.nt(); ++t) {
            auto s = fs.slice(c, t);
            for (std::size_t p = 0; p < s.size(); ++p) {
                if (mask.is_land(p)) s[p] = value;
            }
        }
    }
}

}  // namespace stfno
