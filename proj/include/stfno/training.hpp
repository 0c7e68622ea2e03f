#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stfno/grid.hpp"
#include "stfno/model.hpp"

namespace stfno {

struct TrainConfig {
    std::size_t epochs = 50;
    double lr0 = 1e-3;
    double lr_min = 0.0;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    /// 1-based lead time that is supervised.
    std::size_t loss_lead = 1;
    /// Average the loss over leads 1..tau instead of supervising `loss_lead` only.
    bool multi_lead = false;
    /// Random-offset coarsening factor applied to every training sample (1 = off).
    std::size_t coarsen = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    /// Window length shared by both variants, so FNO and FNOtD see identical windows.
    std::size_t window = 8;
    /// Fraction of windows (taken from the end of the record) held out for validation.
    double val_fraction = 0.1;
    /// Windows dropped between the training and validation ranges (0 = 2 * window).
    std::size_t val_gap = 0;
    /// Validate every n epochs (and always after the final epoch); 0 disables validation.
    std::size_t val_every = 1;
    /// Validate on the coarsened training grid (offset 0) instead of the native grid.
    bool val_coarse = false;
    /// Samples per forward/backward call; 0 picks a cache-friendly size.
    std::size_t micro_batch = 0;

    void validate(std::size_t tau) const;
};

/// lr_min + (lr0 - lr_min) (1 + cos(pi e / (E - 1))) / 2; constant lr0 when E = 1.
double cosine_lr(std::size_t epoch, const TrainConfig& config);

/// One sample's loss term: sum over output variables of ||yhat - y|| / ||y|| over ocean
/// points of one lead slice (1-based), or its mean over all leads when `all_leads`.
/// Arrays are [channels][nt][ny*nx]. When `grad` is non-empty, scale * d(term)/d(yhat)
/// is added to it. Throws InvalidArgument for a target with zero ocean norm.
double relative_l2_term(std::span<const double> yhat, std::span<const double> y, std::size_t channels,
                        std::size_t nt, const LandMask& mask, std::size_t lead, bool all_leads = false,
                        std::span<double> grad = {}, double scale = 1.0);

/// Masked relative-L2 loss averaged over samples and summed over output variables.
double relative_l2_loss(std::span<const FieldStack> yhat, std::span<const FieldStack> y, const LandMask& mask,
                        std::size_t lead);
double relative_l2_loss(const FieldStack& yhat, const FieldStack& y, const LandMask& mask, std::size_t lead);

struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState zeros(const ParamStore& params);
};

/// Bias-corrected Adam update of one tensor at step t >= 1.
void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::size_t t, double lr, const TrainConfig& config);

/// Advances the step counter and updates every parameter from its accumulated gradient.
/// Throws NumericFailure naming the parameter when a gradient is non-finite.
void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& config);

/// Inputs, targets and mask of a generated dataset, in physical units.
struct Dataset {
    FieldStack inputs;
    FieldStack targets;
    LandMask mask;

    void validate() const;
};

/// Reads inputs.fst, target.fst and (when present) mask.fst from a directory.
Dataset load_dataset(const std::filesystem::path& dir);

/// Window end indices t_e (last input slice). Windows cover inputs [t_e - window + 1, t_e]
/// and targets [t_e + 1, t_e + window].
struct WindowSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    /// Slices [0, stats_end) are the training portion used for channel statistics.
    std::size_t stats_end = 0;
};

WindowSplit make_windows(std::size_t nt, const TrainConfig& config);

struct EpochLog {
    std::size_t epoch = 0;  // 0-based
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    std::vector<double> batch_losses;
};

/// Everything needed to continue training bit-compatibly.
struct Checkpoint {
    Model model;
    TrainConfig train;
    AdamState adam;
    ChannelStats in_stats;
    ChannelStats out_stats;
    std::size_t epoch = 0;  // completed epochs
    std::vector<EpochLog> history;
    std::string rng_state;

    explicit Checkpoint(Model m) : model(std::move(m)) {}
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds the model (seeded from `train.seed`), statistics from the training portion,
/// and a fresh optimizer state.
Checkpoint init_training(const Dataset& data, const ModelConfig& model, const TrainConfig& train);

using EpochCallback = std::function<void(const Checkpoint&, const EpochLog&)>;

/// Runs epochs [ckpt.epoch, stop) with stop = min(epochs, stop_after_epoch). Deterministic given the
/// checkpoint. Non-finite values raise NumericFailure with "epoch E batch B" in `where`.
void train(const Dataset& data, Checkpoint& ckpt, std::optional<std::size_t> stop_after_epoch = {},
           const EpochCallback& on_epoch = {});

/// Mean one-step (lead 1) relative-L2 loss over the given windows, evaluated on the native grid or,
/// when `coarsen` > 1, on the offset-0 coarsened grid.
double evaluate_windows(const Dataset& data, const Checkpoint& ckpt, std::span<const std::size_t> windows,
                        std::size_t coarsen = 1);

/// "epoch,lr,train_loss,val_loss" rows; an empty val_loss cell marks a skipped validation.
void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& history);

}  // namespace stfno
