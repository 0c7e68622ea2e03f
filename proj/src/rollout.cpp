#include "stfno/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "stfno/error.hpp"
#include "stfno/swe.hpp"

namespace stfno {

void RolloutConfig::validate(std::size_t tau) const {
    const std::size_t s = effective_stride(tau);
    require(s >= 1 && s <= tau, "stride must lie in [1, tau]");
    require(blowup_factor > 0.0, "blowup_factor must be positive");
}

namespace {

// Index of time t in a stack, or nullopt when t is not on its time axis.
std::optional<std::size_t> time_index(const FieldStack& fs, double t) {
    const double q = (t - fs.t0()) / fs.dt();
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-6 || r < 0.0 || r >= static_cast<double>(fs.nt())) return std::nullopt;
    return static_cast<std::size_t>(r);
}

std::vector<double> normalized_window(const FieldStack& w, const Emulator& em) {
    FieldStack n = normalize(w, em.in_stats);
    fill_land(n, em.mask, 0.0);
    return std::move(n.data());
}

}  // namespace

FieldStack autoregressive_predict(const Emulator& em, const FieldStack& initial, const FieldStack& source,
                                  const RolloutConfig& config) {
    const ModelConfig& mc = em.model.config();
    const std::size_t tau = mc.tau;
    config.validate(tau);
    require(initial.nt() == tau, "initial window must hold tau = " + std::to_string(tau) + " slices");
    require(initial.names() == mc.in_channels, "initial window channels do not match the model");
    require(source.names() == mc.in_channels, "forcing source channels do not match the model");
    require(initial.grid() == source.grid(), "initial window and forcing source grids differ");
    require(std::abs(initial.dt() - source.dt()) <= 1e-12 * std::abs(source.dt()), "time steps differ");
    em.mask.validate(initial.grid());

    std::vector<std::size_t> state_ch;
    for (const auto& name : mc.out_channels) state_ch.push_back(initial.channel_index(name));

    const double dt = initial.dt();
    const double t_last = initial.t0() + static_cast<double>(tau - 1) * dt;
    FieldStack out(mc.out_channels, config.horizon, initial.grid(), dt, t_last + dt);
    if (config.horizon == 0) return out;

    // The appended slices must exist in the source before any model call.
    for (std::size_t k = 1; k < config.horizon; ++k) {
        if (!time_index(source, t_last + static_cast<double>(k) * dt)) {
            throw InvalidArgument("forcing source does not cover rollout time " +
                                  std::to_string(t_last + static_cast<double>(k) * dt));
        }
    }

    const std::size_t stride = config.effective_stride(tau);
    const std::size_t ci = mc.in_channels.size(), co = mc.out_channels.size(), np = initial.slice_size();
    const FieldShape shape{ci, tau, initial.ny(), initial.nx(), 1};
    FieldStack window = initial;
    std::size_t produced = 0;
    while (produced < config.horizon) {
        std::vector<double> y;
        try {
            y = forward_array(em.model, normalized_window(window, em), shape);
        } catch (const NumericFailure& e) {
            throw NumericFailure("rollout diverged at step " + std::to_string(produced) + ": " + e.what(),
                                 "rollout step", produced);
        }
        const std::size_t m = std::min(stride, config.horizon - produced);
        for (std::size_t c = 0; c < co; ++c) {
            const double mu = em.out_stats.mean[c], sd = em.out_stats.stddev[c];
            const double limit = config.blowup_factor * sd;
            for (std::size_t j = 0; j < m; ++j) {
                auto dst = out.slice(c, produced + j);
                const double* src = y.data() + (c * tau + j) * np;
                for (std::size_t p = 0; p < np; ++p) {
                    const double v = src[p] * sd + mu;
                    if (!std::isfinite(v) || std::abs(v - mu) > limit) {
                        throw NumericFailure("rollout diverged at step " + std::to_string(produced + j),
                                             "rollout step", produced + j);
                    }
                    dst[p] = v;
                }
            }
        }

        if (produced + m < config.horizon) {
            // Shift by m slices; new slices take predictions for state channels, source otherwise.
            FieldStack next(window.names(), tau, window.grid(), dt, window.t0() + static_cast<double>(m) * dt);
            for (std::size_t c = 0; c < ci; ++c) {
                for (std::size_t t = 0; t + m < tau; ++t) {
                    std::copy_n(window.slice(c, t + m).begin(), np, next.slice(c, t).begin());
                }
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t t = tau - m + j;
                    const double time = next.t0() + static_cast<double>(t) * dt;
                    const auto it = std::find(state_ch.begin(), state_ch.end(), c);
                    if (it != state_ch.end()) {
                        const std::size_t oc = static_cast<std::size_t>(it - state_ch.begin());
                        std::copy_n(out.slice(oc, produced + j).begin(), np, next.slice(c, t).begin());
                    } else {
                        const auto si = time_index(source, time);
                        if (!si) throw InvalidArgument("forcing gap at time " + std::to_string(time));
                        std::copy_n(source.slice(c, *si).begin(), np, next.slice(c, t).begin());
                    }
                }
            }
            window = std::move(next);
        }
        produced += m;
    }
    return out;
}

DivergenceSeries divergence_series(const FieldStack& run, const FieldStack& ref, const LandMask& mask,
                                   std::string label) {
    require(run.grid() == ref.grid(), "divergence operands are on different grids");
    require(std::abs(run.dt() - ref.dt()) <= 1e-12 * std::abs(ref.dt()), "divergence operands have different dt");
    mask.validate(ref.grid());
    const std::size_t ocean = mask.ocean_count();
    require(ocean > 0, "mask has no ocean cells");
    DivergenceSeries s;
    s.label = std::move(label);
    for (std::size_t t = 0; t < run.nt(); ++t) {
        const double time = run.t0() + static_cast<double>(t) * run.dt();
        const auto k = time_index(ref, time);
        if (!k) continue;
        const auto a = run.slice(0, t), b = ref.slice(0, *k);
        double ss = 0.0;
        for (std::size_t p = 0; p < a.size(); ++p) {
            if (!mask.is_land(p)) ss += (a[p] - b[p]) * (a[p] - b[p]);
        }
        s.time.push_back(time);
        s.rms.push_back(std::sqrt(ss / static_cast<double>(ocean)));
    }
    require(!s.time.empty(), "rollouts share no timestamps");
    return s;
}

namespace {

FieldStack initial_window(const FieldStack& inputs, std::size_t origin, std::size_t tau) {
    require(origin + 1 >= tau && origin < inputs.nt(), "origin " + std::to_string(origin) + " leaves no full window");
    return inputs.time_window(origin + 1 - tau, tau);
}

DivergenceSeries failed_series(std::string label, const NumericFailure& e) {
    DivergenceSeries s;
    s.label = std::move(label);
    s.failed_step = e.index();
    s.failure = e.what();
    return s;
}

}  // namespace

std::vector<DivergenceSeries> sensitivity_origins(const Emulator& em, const FieldStack& inputs,
                                                  std::span<const std::size_t> origins, std::size_t reference,
                                                  const RolloutConfig& config) {
    const std::size_t tau = em.model.config().tau;
    require(config.horizon >= 1, "sensitivity rollouts need horizon >= 1");
    const double dt = inputs.dt();
    const auto end_time = [&](std::size_t o) { return inputs.t0() + static_cast<double>(o + config.horizon) * dt; };
    const auto start_time = [&](std::size_t o) { return inputs.t0() + static_cast<double>(o + 1) * dt; };
    for (std::size_t o : origins) {
        if (end_time(o) < start_time(reference) || start_time(o) > end_time(reference)) {
            throw InvalidArgument("rollout from origin " + std::to_string(o) + " does not overlap the reference");
        }
    }
    const FieldStack ref = autoregressive_predict(em, initial_window(inputs, reference, tau), inputs, config);
    std::vector<DivergenceSeries> out;
    for (std::size_t o : origins) {
        const std::string label = "origin_" + std::to_string(o);
        try {
            const FieldStack run = autoregressive_predict(em, initial_window(inputs, o, tau), inputs, config);
            out.push_back(divergence_series(run, ref, em.mask, label));
        } catch (const NumericFailure& e) {
            out.push_back(failed_series(label, e));
        }
    }
    return out;
}

std::vector<DivergenceSeries> sensitivity_perturbed(const Emulator& em, const FieldStack& inputs, std::size_t origin,
                                                    const PerturbationConfig& pert, const RolloutConfig& config) {
    const ModelConfig& mc = em.model.config();
    require(pert.sigma_rel >= 0.0 && pert.corr_length >= 0.0, "perturbation sigma and length must be non-negative");
    require(config.horizon >= 1, "sensitivity rollouts need horizon >= 1");
    const FieldStack base = initial_window(inputs, origin, mc.tau);
    const FieldStack ref = autoregressive_predict(em, base, inputs, config);

    std::mt19937_64 rng(pert.seed);
    std::vector<DivergenceSeries> out;
    for (std::size_t k = 0; k < pert.members; ++k) {
        FieldStack w = base;
        for (const auto& name : mc.out_channels) {
            const std::size_t c = w.channel_index(name);
            const double sigma = pert.sigma_rel * em.in_stats.stddev[c];
            for (std::size_t t = 0; t < w.nt(); ++t) {
                const auto noise = smooth_noise(w.grid(), pert.corr_length, rng);
                auto s = w.slice(c, t);
                for (std::size_t p = 0; p < s.size(); ++p) s[p] += sigma * noise[p];
            }
        }
        const std::string label = "member_" + std::to_string(k);
        try {
            out.push_back(divergence_series(autoregressive_predict(em, w, inputs, config), ref, em.mask, label));
        } catch (const NumericFailure& e) {
            out.push_back(failed_series(label, e));
        }
    }
    return out;
}

SpinupSummary spinup_summary(std::span<const double> series, std::size_t window) {
    require(window >= 1, "smoothing window must be >= 1");
    require(!series.empty(), "spin-up needs a non-empty series");
    SpinupSummary s;
    double acc = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        require(std::isfinite(series[i]) && series[i] >= 0.0, "divergence series must be finite and non-negative");
        acc += series[i];
        if (i >= window) acc -= series[i - window];
        s.smoothed.push_back(acc / static_cast<double>(std::min(i + 1, window)));
    }
    const double threshold = 0.2 * s.smoothed.front();
    s.converged = s.smoothed.back() < threshold;
    if (s.converged) {
        for (std::size_t i = 0; i < s.smoothed.size(); ++i) {
            if (s.smoothed[i] < threshold) {
                s.spinup_steps = i;
                break;
            }
        }
    }
    return s;
}

void write_divergence_csv(const std::filesystem::path& path, std::span<const DivergenceSeries> series) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os.precision(17);
    os << "label,step,time,rms_diff\n";
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.rms.size(); ++i) {
            os << s.label << ',' << i + 1 << ',' << s.time[i] << ',' << s.rms[i] << '\n';
        }
    }
    if (!os) throw FormatError("failed writing " + path.string());
}

}  // namespace stfno
