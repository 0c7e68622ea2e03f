#include "stfno/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"

namespace stfno {

void TrainConfig::validate(std::size_t tau) const {
    require(epochs >= 1, "train.epochs must be >= 1");
    require(lr_min >= 0.0 && lr0 > lr_min, "train requires lr0 > lr_min >= 0");
    require(batch_size >= 1, "train.batch_size must be >= 1");
    require(loss_lead >= 1 && loss_lead <= tau, "train.loss_lead must lie in [1, tau]");
    require(coarsen >= 1, "train.coarsen must be >= 1");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(eps > 0.0, "Adam eps must be positive");
    require(window >= tau, "train.window must be >= the model window tau");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "train.val_fraction must lie in [0, 1)");
}

double cosine_lr(std::size_t epoch, const TrainConfig& c) {
    require(epoch < c.epochs, "epoch out of range for the schedule");
    if (c.epochs == 1) return c.lr0;
    const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(c.epochs - 1);
    return c.lr_min + 0.5 * (c.lr0 - c.lr_min) * (1.0 + std::cos(phase));
}

double relative_l2_term(std::span<const double> yhat, std::span<const double> y, std::size_t channels,
                        std::size_t nt, const LandMask& mask, std::size_t lead, bool all_leads,
                        std::span<double> grad, double scale) {
    const std::size_t np = mask.ny * mask.nx;
    require(yhat.size() == y.size() && y.size() == channels * nt * np, "loss operands do not match [c, t, y, x]");
    require(grad.empty() || grad.size() == y.size(), "loss gradient buffer size mismatch");
    require(lead >= 1 && lead <= nt, "loss lead out of range");
    const std::size_t t0 = all_leads ? 0 : lead - 1;
    const std::size_t t1 = all_leads ? nt : lead;
    const double lead_weight = 1.0 / static_cast<double>(t1 - t0);

    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = t0; t < t1; ++t) {
            const std::size_t off = (c * nt + t) * np;
            double ee = 0.0, yy = 0.0;
            for (std::size_t p = 0; p < np; ++p) {
                if (mask.is_land(p)) continue;
                const double e = yhat[off + p] - y[off + p];
                ee += e * e;
                yy += y[off + p] * y[off + p];
            }
            if (!(yy > 0.0)) throw InvalidArgument("degenerate target: zero norm over ocean points");
            const double ne = std::sqrt(ee), ny = std::sqrt(yy);
            total += lead_weight * ne / ny;
            if (!grad.empty() && ne > 0.0) {
                const double k = scale * lead_weight / (ne * ny);
                for (std::size_t p = 0; p < np; ++p) {
                    if (!mask.is_land(p)) grad[off + p] += k * (yhat[off + p] - y[off + p]);
                }
            }
        }
    }
    return total;
}

double relative_l2_loss(std::span<const FieldStack> yhat, std::span<const FieldStack> y, const LandMask& mask,
                        std::size_t lead) {
    require(!y.empty() && yhat.size() == y.size(), "loss needs matching, non-empty sample lists");
    double sum = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        require(yhat[k].names() == y[k].names() && yhat[k].nt() == y[k].nt() && yhat[k].grid() == y[k].grid(),
                "prediction and target shapes differ");
        mask.validate(y[k].grid());
        sum += relative_l2_term(yhat[k].data(), y[k].data(), y[k].channels(), y[k].nt(), mask, lead);
    }
    return sum / static_cast<double>(y.size());
}

double relative_l2_loss(const FieldStack& yhat, const FieldStack& y, const LandMask& mask, std::size_t lead) {
    return relative_l2_loss(std::span(&yhat, 1), std::span(&y, 1), mask, lead);
}

AdamState AdamState::zeros(const ParamStore& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::size_t t, double lr, const TrainConfig& c) {
    require(t >= 1, "Adam step index starts at 1");
    require(g.size() == p.size() && m.size() == p.size() && v.size() == p.size(), "Adam tensor sizes differ");
    const double b1 = c.beta1, b2 = c.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] -= lr * mh / (std::sqrt(vh) + c.eps);
    }
}

void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& config) {
    require(state.m.size() == params.size() && state.v.size() == params.size(), "optimizer state does not match");
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& g = params[k].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericFailure("non-finite gradient in parameter '" + params[k].name + "'", params[k].name, i);
            }
        }
    }
    ++state.step;
    for (std::size_t k = 0; k < params.size(); ++k) {
        adam_update(params[k].value, params[k].grad, state.m[k], state.v[k], state.step, lr, config);
    }
}

void Dataset::validate() const {
    require(inputs.grid() == targets.grid(), "inputs and targets are on different grids");
    require(inputs.nt() == targets.nt(), "inputs and targets have different lengths");
    mask.validate(inputs.grid());
    require(mask.ocean_count() > 0, "land mask covers the whole domain");
    for (const auto& name : targets.names()) {
        inputs.channel_index(name);  // each predicted variable must also be an input (state) channel
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset d;
    d.inputs = read_fst(dir / "inputs.fst");
    d.targets = read_fst(dir / "target.fst");
    const auto mp = dir / "mask.fst";
    d.mask = std::filesystem::exists(mp) ? read_mask(mp) : LandMask::all_ocean(d.inputs.grid());
    d.validate();
    return d;
}

WindowSplit make_windows(std::size_t nt, const TrainConfig& c) {
    const std::size_t w = c.window;
    require(w >= 1, "window must be >= 1");
    require(nt >= 2 * w, "record of " + std::to_string(nt) + " slices is too short for window " + std::to_string(w));
    const std::size_t n = nt - 2 * w + 1;
    const std::size_t gap = c.val_gap ? c.val_gap : 2 * w;
    std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * c.val_fraction));
    if (c.val_fraction > 0.0 && n_val == 0) n_val = 1;
    const std::size_t reserved = n_val ? n_val + gap : 0;
    require(n > reserved, "too few windows for the validation split");

    WindowSplit s;
    for (std::size_t k = 0; k < n - reserved; ++k) s.train.push_back(w - 1 + k);
    for (std::size_t k = n - n_val; k < n; ++k) s.val.push_back(w - 1 + k);
    s.stats_end = s.train.back() + w + 1;
    return s;
}

namespace {

std::mt19937_64 restore_rng(const std::string& state) {
    std::mt19937_64 rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw FormatError("corrupt random generator state");
    return rng;
}

std::string save_rng(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

// Normalized inputs with land zeroed, prepared once per run.
FieldStack prepared_inputs(const Dataset& data, const ChannelStats& stats) {
    FieldStack n = normalize(data.inputs, stats);
    fill_land(n, data.mask, 0.0);
    return n;
}

std::size_t auto_micro_batch(std::size_t batch, std::size_t tau, std::size_t ny, std::size_t nx) {
    // Keep one activation tensor near L2 size; the pointwise layers are bandwidth bound.
    const std::size_t per = std::max<std::size_t>(1, tau * ny * nx);
    return std::clamp<std::size_t>(4096 / per, 1, batch);
}

struct Sample {
    FieldStack input;   // normalized [c_in, tau, y, x]
    FieldStack target;  // physical [c_out, tau, y, x]
    LandMask mask;
};

Sample make_sample(const FieldStack& norm_in, const Dataset& data, std::size_t t_end, std::size_t tau,
                   std::size_t coarsen, const Offset& off) {
    Sample s;
    FieldStack in = norm_in.time_window(t_end + 1 - tau, tau);
    FieldStack tg = data.targets.time_window(t_end + 1, tau);
    if (coarsen > 1) {
        s.input = bilinear_resample(in, coarsen, off);
        s.target = bilinear_resample(tg, coarsen, off);
        s.mask = resample_mask(data.mask, data.inputs.grid(), coarsen, off);
    } else {
        s.input = std::move(in);
        s.target = std::move(tg);
        s.mask = data.mask;
    }
    return s;
}

// Packs samples [c][t][y][x] into the batched layout [c][b][t][y][x].
void pack(std::span<const Sample> samples, std::vector<double>& x) {
    const auto& f = samples.front().input;
    const std::size_t B = samples.size(), block = f.channel_size();
    x.resize(f.channels() * B * block);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& d = samples[b].input.data();
        for (std::size_t c = 0; c < f.channels(); ++c) {
            std::copy_n(d.data() + c * block, block, x.data() + (c * B + b) * block);
        }
    }
}

// Per-sample physical prediction [c_out][t][p] extracted from the batched normalized output.
void unpack_physical(std::span<const double> y, std::size_t B, std::size_t b, std::size_t co, std::size_t block,
                     const ChannelStats& out_stats, std::vector<double>& dst) {
    dst.resize(co * block);
    for (std::size_t c = 0; c < co; ++c) {
        const double* src = y.data() + (c * B + b) * block;
        const double m = out_stats.mean[c], s = out_stats.stddev[c];
        for (std::size_t i = 0; i < block; ++i) dst[c * block + i] = src[i] * s + m;
    }
}

void check_finite_loss(double v, const std::string& where) {
    if (!std::isfinite(v)) throw NumericFailure("non-finite loss", where);
}

std::string where(std::size_t epoch, std::size_t batch) {
    return "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch);
}

}  // namespace

Checkpoint init_training(const Dataset& data, const ModelConfig& mc, const TrainConfig& tc) {
    data.validate();
    mc.validate();
    tc.validate(mc.tau);
    require(mc.in_channels == data.inputs.names(), "model input channels do not match the dataset");
    require(mc.out_channels == data.targets.names(), "model output channels do not match the dataset");
    const WindowSplit split = make_windows(data.inputs.nt(), tc);

    std::mt19937_64 rng(tc.seed);
    Checkpoint ck(build_model(mc, rng));
    ck.train = tc;
    ck.adam = AdamState::zeros(ck.model.params());
    ck.in_stats = compute_stats(data.inputs, data.mask, 0, split.stats_end);
    ck.out_stats = compute_stats(data.targets, data.mask, 0, split.stats_end);
    ck.rng_state = save_rng(rng);
    return ck;
}

namespace {

double evaluate_prepared(const FieldStack& norm_in, const Dataset& data, const Checkpoint& ck,
                         std::span<const std::size_t> windows, std::size_t coarsen) {
    require(!windows.empty(), "no windows to evaluate");
    const auto& mc = ck.model.config();
    double sum = 0.0;
    std::vector<double> phys;
    for (std::size_t t_end : windows) {
        require(t_end + 1 >= mc.tau && t_end + mc.tau < data.inputs.nt(), "window out of range");
        const Sample s = make_sample(norm_in, data, t_end, mc.tau, coarsen, Offset{});
        FieldShape shape{mc.in_channels.size(), mc.tau, s.input.ny(), s.input.nx(), 1};
        const auto y = forward_array(ck.model, s.input.data(), shape);
        unpack_physical(y, 1, 0, mc.out_channels.size(), s.target.channel_size(), ck.out_stats, phys);
        sum += relative_l2_term(phys, s.target.data(), mc.out_channels.size(), mc.tau, s.mask, 1);
    }
    const double v = sum / static_cast<double>(windows.size());
    check_finite_loss(v, "validation");
    return v;
}

}  // namespace

double evaluate_windows(const Dataset& data, const Checkpoint& ck, std::span<const std::size_t> windows,
                        std::size_t coarsen) {
    data.validate();
    return evaluate_prepared(prepared_inputs(data, ck.in_stats), data, ck, windows, coarsen);
}

void train(const Dataset& data, Checkpoint& ck, std::optional<std::size_t> stop_after_epoch,
           const EpochCallback& on_epoch) {
    data.validate();
    const TrainConfig& tc = ck.train;
    const auto& mc = ck.model.config();
    tc.validate(mc.tau);
    const WindowSplit split = make_windows(data.inputs.nt(), tc);
    const std::size_t stop = std::min(tc.epochs, stop_after_epoch.value_or(tc.epochs));
    if (ck.epoch >= stop) return;

    const FieldStack norm_in = prepared_inputs(data, ck.in_stats);
    std::mt19937_64 rng = restore_rng(ck.rng_state);
    ParamStore& params = ck.model.params();
    const std::size_t ci = mc.in_channels.size(), co = mc.out_channels.size(), tau = mc.tau;
    const std::size_t cny = data.inputs.ny() / tc.coarsen, cnx = data.inputs.nx() / tc.coarsen;
    const std::size_t micro = tc.micro_batch ? tc.micro_batch : auto_micro_batch(tc.batch_size, tau, cny, cnx);

    std::vector<std::size_t> order = split.train;
    std::vector<Sample> samples;
    std::vector<double> x, ybar, phys, gphys;
    ForwardTape tape;

    for (std::size_t epoch = ck.epoch; epoch < stop; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        log.lr = cosine_lr(epoch, tc);

        order = split.train;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }

        double epoch_sum = 0.0;
        const std::size_t nbatch = (order.size() + tc.batch_size - 1) / tc.batch_size;
        for (std::size_t bi = 0; bi < nbatch; ++bi) {
            const std::size_t begin = bi * tc.batch_size;
            const std::size_t nb = std::min(tc.batch_size, order.size() - begin);
            samples.clear();
            for (std::size_t k = 0; k < nb; ++k) {
                const Offset off = tc.coarsen > 1 ? draw_offset(tc.coarsen, rng) : Offset{};
                samples.push_back(make_sample(norm_in, data, order[begin + k], tau, tc.coarsen, off));
            }

            params.zero_grad();
            double batch_sum = 0.0;
            try {
                for (std::size_t mb = 0; mb < nb; mb += micro) {
                    const std::size_t B = std::min(micro, nb - mb);
                    const std::span<const Sample> part(samples.data() + mb, B);
                    const auto& s0 = part.front().input;
                    pack(part, x);
                    const FieldShape shape{ci, tau, s0.ny(), s0.nx(), B};
                    const auto y = forward_array(ck.model, x, shape, &tape);

                    const std::size_t block = part.front().target.channel_size();
                    ybar.assign(y.size(), 0.0);
                    for (std::size_t b = 0; b < B; ++b) {
                        unpack_physical(y, B, b, co, block, ck.out_stats, phys);
                        gphys.assign(phys.size(), 0.0);
                        batch_sum += relative_l2_term(phys, part[b].target.data(), co, tau, part[b].mask, tc.loss_lead,
                                                      tc.multi_lead, gphys, 1.0 / static_cast<double>(nb));
                        for (std::size_t c = 0; c < co; ++c) {
                            const double s = ck.out_stats.stddev[c];
                            double* dst = ybar.data() + (c * B + b) * block;
                            for (std::size_t i = 0; i < block; ++i) dst[i] = gphys[c * block + i] * s;
                        }
                    }
                    backward(ck.model, tape, ybar);
                }
                const double batch_loss = batch_sum / static_cast<double>(nb);
                check_finite_loss(batch_loss, where(epoch, bi));
                adam_step(params, ck.adam, log.lr, tc);
                log.batch_losses.push_back(batch_loss);
                epoch_sum += batch_sum;
            } catch (const NumericFailure& e) {
                throw NumericFailure(std::string(e.what()) + " at " + where(epoch, bi) + " (" + e.where() + ")",
                                     where(epoch, bi), bi);
            }
        }
        log.train_loss = epoch_sum / static_cast<double>(order.size());

        const bool last = epoch + 1 == tc.epochs;
        if (tc.val_every && !split.val.empty() && (last || (epoch + 1) % tc.val_every == 0)) {
            log.val_loss = evaluate_prepared(norm_in, data, ck, split.val, tc.val_coarse ? tc.coarsen : 1);
        }

        ck.epoch = epoch + 1;
        ck.rng_state = save_rng(rng);
        ck.history.push_back(log);
        if (on_epoch) on_epoch(ck, log);
    }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& history) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os.precision(17);
    os << "epoch,lr,train_loss,val_loss\n";
    for (const auto& h : history) {
        os << h.epoch << ',' << h.lr << ',' << h.train_loss << ',';
        if (h.val_loss) os << *h.val_loss;
        os << '\n';
    }
    if (!os) throw FormatError("failed writing " + path.string());
}

}  // namespace stfno
