#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stfno/grid.hpp"
#include "stfno/model.hpp"

namespace stfno {

/// A trained operator together with the statistics that map physical fields to its inputs.
struct Emulator {
    const Model& model;
    const ChannelStats& in_stats;
    const ChannelStats& out_stats;
    LandMask mask;
};

struct RolloutConfig {
    std::size_t horizon = 0;
    /// Predicted slices consumed per model call; 0 means tau.
    std::size_t stride = 0;
    /// Any |prediction| above blowup_factor * (output std) counts as divergence.
    double blowup_factor = 1e3;

    std::size_t effective_stride(std::size_t tau) const { return stride ? stride : tau; }
    void validate(std::size_t tau) const;
};

/// Iterated prediction. `initial` holds tau slices of every input channel (physical units);
/// `source` supplies prescribed channels, matched by timestamp, for every slice the rollout
/// appends. Predicted output variables replace their input channels of the same name.
/// Returns the predicted outputs at times t_last + dt, ..., t_last + horizon * dt.
/// Throws InvalidArgument for a forcing gap and NumericFailure("rollout step", k) when step k
/// (0-based) is non-finite or exceeds the blow-up threshold.
FieldStack autoregressive_predict(const Emulator& em, const FieldStack& initial, const FieldStack& source,
                                  const RolloutConfig& config);

/// Per-step spatial RMS difference (ocean cells, channel 0) between two stacks at shared timestamps.
struct DivergenceSeries {
    std::string label;
    std::vector<double> time;
    std::vector<double> rms;
    /// Set when the rollout terminated early; the series then stops before that step.
    std::optional<std::size_t> failed_step;
    std::string failure;
};

DivergenceSeries divergence_series(const FieldStack& run, const FieldStack& reference, const LandMask& mask,
                                   std::string label = {});

/// Rollouts from each origin (index of the last initial slice in `inputs`) compared with the
/// rollout from `reference`. A failing rollout yields a series with `failed_step` set.
std::vector<DivergenceSeries> sensitivity_origins(const Emulator& em, const FieldStack& inputs,
                                                  std::span<const std::size_t> origins, std::size_t reference,
                                                  const RolloutConfig& config);

struct PerturbationConfig {
    std::size_t members = 5;
    /// Noise std relative to the state channel's std.
    double sigma_rel = 0.1;
    /// Gaussian correlation length of the noise in grid cells (0 = white).
    double corr_length = 0.0;
    std::uint64_t seed = 0;
};

/// Rollouts from one origin with seeded Gaussian noise added to the state channel(s) of the
/// initial window, all under identical forcing, compared with the unperturbed rollout.
std::vector<DivergenceSeries> sensitivity_perturbed(const Emulator& em, const FieldStack& inputs, std::size_t origin,
                                                    const PerturbationConfig& pert, const RolloutConfig& config);

struct SpinupSummary {
    bool converged = false;
    std::optional<std::size_t> spinup_steps;
    std::vector<double> smoothed;
};

/// Trailing moving average over `window` steps; converged iff the final smoothed value is below
/// 0.2 x the initial one, spin-up = first step below that threshold.
SpinupSummary spinup_summary(std::span<const double> series, std::size_t window);

/// CSV "label,step,time,rms_diff" for all series.
void write_divergence_csv(const std::filesystem::path& path, std::span<const DivergenceSeries> series);

}  // namespace stfno
