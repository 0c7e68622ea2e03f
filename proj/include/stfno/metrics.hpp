#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stfno/grid.hpp"

namespace stfno {

/// sqrt(mean over ocean points, slices and channels of the squared error).
double rmse(const FieldStack& yhat, const FieldStack& y, const LandMask& mask);

/// rmse divided by the standard deviation of the reference over the same cells and slices.
double relative_rmse(const FieldStack& yhat, const FieldStack& y, const LandMask& mask);

/// Land handling before the periodogram.
enum class SpectrumMode {
    /// Subtract the ocean mean, then zero the land cells (default).
    ZeroFill,
    /// Ignore the mask: subtract the mean over all cells.
    Raw,
};

/// Annulus-averaged periodogram |F|^2 / (nx ny). Bin k collects the integer wavenumber pairs
/// (cycles per domain length) with round(sqrt(kx^2 + ky^2)) = k; bins run from 1 to the corner
/// radius so that every non-DC coefficient is counted once. Bins above min(nx, ny) / 2 are
/// only partially covered by the grid.
struct RadialSpectrum {
    std::vector<double> k;
    std::vector<double> power;       // mean power per bin
    std::vector<std::size_t> count;  // coefficients per bin
    double dc = 0.0;                 // |F(0,0)|^2 / (nx ny)
    std::size_t isotropic_max = 0;   // min(nx, ny) / 2
};

RadialSpectrum radial_psd(std::span<const double> field, std::size_t ny, std::size_t nx, const LandMask& mask,
                          SpectrumMode mode = SpectrumMode::ZeroFill);
RadialSpectrum radial_psd(std::span<const double> field, std::size_t ny, std::size_t nx);

/// Per-bin sqrt(sum_q (P_hat_q - P_q)^2 / sum_q P_q^2) over snapshot pairs q. Bins with zero
/// reference power yield NaN.
std::vector<double> spectral_rrmse(std::span<const RadialSpectrum> pred, std::span<const RadialSpectrum> ref);

struct Station {
    std::size_t y = 0;
    std::size_t x = 0;
};

/// Exact grid-point series of channel `channel` at each station; land stations are rejected.
std::vector<std::vector<double>> station_series(const FieldStack& fs, std::span<const Station> stations,
                                                const LandMask& mask, std::size_t channel = 0);

struct EvalOptions {
    SpectrumMode spectrum_mode = SpectrumMode::ZeroFill;
    std::vector<Station> stations;
    std::size_t channel = 0;
};

struct EvalReport {
    double rmse = 0.0;
    double relative_rmse = 0.0;
    std::vector<double> time;
    std::vector<double> rmse_per_step;
    std::vector<RadialSpectrum> pred_spectra;
    std::vector<RadialSpectrum> ref_spectra;
    std::vector<double> rrmse_k;
    std::vector<Station> stations;
    std::vector<std::vector<double>> station_pred;
    std::vector<std::vector<double>> station_ref;
};

/// Compares every slice of `pred` with the `ref` slice at the same timestamp.
EvalReport evaluate(const FieldStack& pred, const FieldStack& ref, const LandMask& mask, const EvalOptions& opt);

/// report.json plus rmse.csv, stations.csv, spectra.csv and rrmse.csv in `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

/// Only spectra.csv and rrmse.csv.
void write_spectra(const EvalReport& report, const std::filesystem::path& dir);

/// The slices of `ref` at the timestamps of `pred` (throws when any is missing).
FieldStack align_reference(const FieldStack& pred, const FieldStack& ref);

}  // namespace stfno
