#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "stfno/metrics.hpp"
#include "stfno/model.hpp"
#include "stfno/rollout.hpp"
#include "stfno/swe.hpp"
#include "stfno/training.hpp"

namespace stfno {

using Json = nlohmann::ordered_json;

struct SensitivityConfig {
    /// "perturb" (seeded IC noise) or "origins" (different start times).
    std::string mode = "perturb";
    std::size_t origin = 0;  // 0 = first window of the held-out range
    std::vector<std::size_t> origins;
    std::optional<std::size_t> reference;
    PerturbationConfig perturbation;
    std::size_t smoothing_window = 8;
};

/// The JSON document accepted by --config. Every section and key is optional; unknown keys
/// are rejected with an error naming the key.
///
///   swe      {nx, ny, dx, dy, g, f, r, dt_solver, rho0, depth_mean, depth_variation,
///             depth_corr_length}
///   forcing  {wind_amplitude, corr_length, ar, pressure_amplitude}
///   tracer   {damping, amplitude, ar, corr_length}
///   generate {samples, sample_dt, spinup, land_box: [y0, y1, x0, x1]}
///   model    {variant, width, layers, modes: [kx, ky] | [kx, ky, w], tau, activation,
///             fno: {...}, fnotd: {...}}   (per-variant overrides of the same keys)
///   train    {epochs, lr0, lr_min, batch_size, loss_lead, multi_lead, coarsen, beta1, beta2, eps,
///             window, val_fraction, val_gap, val_every, val_coarse, micro_batch}
///   rollout  {horizon, stride, blowup_factor, coarsen}
///   sensitivity {mode, origin, origins, reference, members, sigma_rel, corr_length, smoothing_window}
///   eval     {spectrum_mode: "zero_fill" | "raw", stations: [[y, x], ...]}
///   paths    {data, checkpoint, out}
///   seeds    {forcing, depth, train, perturbation}
struct RunConfig {
    GenConfig gen;
    std::optional<Variant> variant;
    Json model_json = Json::object();
    TrainConfig train;
    RolloutConfig rollout{100};
    std::size_t rollout_coarsen = 1;
    SensitivityConfig sensitivity;
    EvalOptions eval;
    std::optional<std::filesystem::path> data_path, checkpoint_path, out_path;

    /// Model configuration for `v` with the document's overrides applied.
    ModelConfig model_for(Variant v, std::vector<std::string> in, std::vector<std::string> out) const;
};

RunConfig parse_run_config(const Json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolved configuration (every field explicit) for writing beside outputs.
Json to_json(const RunConfig& rc, std::optional<Variant> variant = {});

Json to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const Json& j);
Json to_json(const TrainConfig& tc);
TrainConfig train_config_from_json(const Json& j);
Json to_json(const ChannelStats& s);
ChannelStats channel_stats_from_json(const Json& j);

/// JSON with two-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace stfno
