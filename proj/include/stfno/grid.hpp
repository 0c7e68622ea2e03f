#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stfno {

struct Grid {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double dx = 1.0;
    double dy = 1.0;
    bool periodic_x = true;
    bool periodic_y = true;

    std::size_t points() const { return nx * ny; }
    void validate() const;
    bool operator==(const Grid&) const = default;
};

/// Multichannel space-time field in [channel, time, y, x] order.
///
/// A stack with zero time slices is legal (an empty-but-valid file); every
/// numerical operation requires at least one slice.
class FieldStack {
public:
    FieldStack() = default;
    FieldStack(std::vector<std::string> channels, std::size_t nt, Grid grid, double dt = 1.0, double t0 = 0.0);

    std::size_t channels() const { return names_.size(); }
    std::size_t nt() const { return nt_; }
    std::size_t ny() const { return grid_.ny; }
    std::size_t nx() const { return grid_.nx; }
    std::size_t slice_size() const { return grid_.points(); }
    std::size_t channel_size() const { return nt_ * grid_.points(); }

    const Grid& grid() const { return grid_; }
    double dt() const { return dt_; }
    double t0() const { return t0_; }
    void set_time(double t0, double dt) { t0_ = t0; dt_ = dt; }
    const std::vector<std::string>& names() const { return names_; }

    /// Index of a named channel; throws InvalidArgument when absent.
    std::size_t channel_index(const std::string& name) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double& at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) {
        return data_[((c * nt_ + t) * grid_.ny + y) * grid_.nx + x];
    }
    double at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
        return data_[((c * nt_ + t) * grid_.ny + y) * grid_.nx + x];
    }

    std::span<double> slice(std::size_t c, std::size_t t) {
        return {data_.data() + (c * nt_ + t) * slice_size(), slice_size()};
    }
    std::span<const double> slice(std::size_t c, std::size_t t) const {
        return {data_.data() + (c * nt_ + t) * slice_size(), slice_size()};
    }

    /// Copy of time slices [t_begin, t_begin + count) for every channel.
    FieldStack time_window(std::size_t t_begin, std::size_t count) const;
    /// Copy of a subset of channels, in the given order.
    FieldStack select_channels(const std::vector<std::string>& names) const;

private:
    std::vector<std::string> names_;
    std::size_t nt_ = 0;
    Grid grid_{};
    double dt_ = 1.0;
    double t0_ = 0.0;
    std::vector<double> data_;
};

/// Boolean land mask over [y, x]; true marks land.
struct LandMask {
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::vector<std::uint8_t> land;

    static LandMask all_ocean(std::size_t ny, std::size_t nx);
    static LandMask all_ocean(const Grid& g) { return all_ocean(g.ny, g.nx); }

    bool is_land(std::size_t y, std::size_t x) const { return land[y * nx + x] != 0; }
    bool is_land(std::size_t p) const { return land[p] != 0; }
    std::size_t ocean_count() const;
    void validate(const Grid& g) const;
};

struct ChannelStats {
    std::vector<std::string> channels;
    std::vector<double> mean;
    std::vector<double> stddev;

    void validate() const;
};

struct Offset {
    double dy = 0.0;
    double dx = 0.0;
};

/// Per-channel mean/std over ocean cells and time slices [t_begin, t_end).
ChannelStats compute_stats(const FieldStack& fs, const LandMask& mask, std::size_t t_begin, std::size_t t_end);

FieldStack bilinear_resample(const FieldStack& fs, std::size_t factor, Offset offset);
LandMask resample_mask(const LandMask& mask, const Grid& fine, std::size_t factor, Offset offset);

/// Uniform offset in [0, factor)^2 fine cells, then bilinear_resample.
std::pair<FieldStack, Offset> random_offset_coarsen(const FieldStack& fs, std::size_t factor, std::mt19937_64& rng);
Offset draw_offset(std::size_t factor, std::mt19937_64& rng);

FieldStack normalize(const FieldStack& fs, const ChannelStats& stats);
FieldStack denormalize(const FieldStack& fs, const ChannelStats& stats);

/// Overwrite land cells of every channel and slice with `value`.
void fill_land(FieldStack& fs, const LandMask& mask, double value = 0.0);

}  // namespace stfno
