// stfno: batch entry points for data generation, training, rollout and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"
#include "stfno/metrics.hpp"
#include "stfno/rollout.hpp"
#include "stfno/run_config.hpp"
#include "stfno/swe.hpp"
#include "stfno/training.hpp"

namespace fs = std::filesystem;
using namespace stfno;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> stride;
    std::string variant;
    std::string data;
    std::string checkpoint;
    std::string ic;
    std::string forcing;
    std::string mask;
    std::string resume;
    std::string pred;
    std::string ref;
    std::string mode;
    std::vector<std::size_t> origins;
    std::optional<std::size_t> origin;
    std::optional<std::size_t> reference;
    std::optional<std::size_t> horizon;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> stop_after;
    bool quiet = false;
};

RunConfig load_config(const Options& o) {
    RunConfig rc = o.config.empty() ? parse_run_config(Json::object()) : load_run_config(o.config);
    if (!o.variant.empty()) rc.variant = parse_variant(o.variant);
    if (o.stride) rc.rollout.stride = *o.stride;
    if (o.horizon) rc.rollout.horizon = *o.horizon;
    if (o.epochs) rc.train.epochs = *o.epochs;
    return rc;
}

fs::path out_dir(const Options& o, const RunConfig& rc) {
    fs::path p = !o.out.empty() ? fs::path(o.out) : rc.out_path ? *rc.out_path : fs::path();
    require(!p.empty(), "an output directory is required (--out or paths.out)");
    fs::create_directories(p);
    return p;
}

fs::path data_dir(const Options& o, const RunConfig& rc) {
    if (!o.data.empty()) return o.data;
    require(rc.data_path.has_value(), "a data directory is required (--data or paths.data)");
    return *rc.data_path;
}

fs::path checkpoint_path(const Options& o, const RunConfig& rc) {
    if (!o.checkpoint.empty()) return o.checkpoint;
    require(rc.checkpoint_path.has_value(), "a checkpoint is required (--checkpoint or paths.checkpoint)");
    return *rc.checkpoint_path;
}

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw InvalidArgument("file not found: " + p.string());
}

LandMask mask_for(const std::string& path, const Grid& g) {
    if (path.empty()) return LandMask::all_ocean(g);
    require_file(path);
    LandMask m = read_mask(path);
    m.validate(g);
    return m;
}

void log(const Options& o, const std::string& msg) {
    if (!o.quiet) std::cerr << msg << '\n';
}

// Origin 0 in the config means the first held-out window of the checkpoint's split.
std::size_t resolve_origin(std::size_t origin, std::size_t nt, const Checkpoint& ck) {
    if (origin != 0) return origin;
    const WindowSplit split = make_windows(nt, ck.train);
    require(!split.val.empty(), "dataset has no held-out windows to start from");
    return split.val.front();
}

int cmd_gen(const Options& o) {
    RunConfig rc = load_config(o);
    if (o.seed) rc.gen.forcing.seed = *o.seed;
    const fs::path out = out_dir(o, rc);
    const Json resolved = to_json(rc);
    write_json(out / "config.json", resolved);
    log(o, "generating " + std::to_string(rc.gen.samples) + " slices on a " + std::to_string(rc.gen.swe.grid.ny) +
               "x" + std::to_string(rc.gen.swe.grid.nx) + " grid");
    generate_dataset(rc.gen, out, resolved.dump());
    return 0;
}

int cmd_train(const Options& o) {
    RunConfig rc = load_config(o);
    if (o.seed) rc.train.seed = *o.seed;
    const fs::path out = out_dir(o, rc);
    const Dataset data = load_dataset(data_dir(o, rc));

    std::optional<Checkpoint> ck;
    if (!o.resume.empty()) {
        require_file(o.resume);
        ck.emplace(load_checkpoint(o.resume));
        ck->train.epochs = rc.train.epochs;
        rc.variant = ck->model.config().variant;
    } else {
        const Variant v = rc.variant.value_or(Variant::Fnotd);
        rc.variant = v;
        const ModelConfig mc = rc.model_for(v, data.inputs.names(), data.targets.names());
        ck.emplace(init_training(data, mc, rc.train));
    }
    write_json(out / "config.json", to_json(rc));
    log(o, to_string(ck->model.config().variant) + ": " + std::to_string(param_count(ck->model)) + " parameters");

    const fs::path ckpt_path = out / "checkpoint.fnoc";
    train(data, *ck, o.stop_after, [&](const Checkpoint& c, const EpochLog& e) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %zu  lr %.3e  train %.6f  val %s", e.epoch + 1, e.lr, e.train_loss,
                      e.val_loss ? std::to_string(*e.val_loss).c_str() : "-");
        log(o, line);
        save_checkpoint(ckpt_path, c);
        write_loss_csv(out / "loss.csv", c.history);
    });
    save_checkpoint(ckpt_path, *ck);
    write_loss_csv(out / "loss.csv", ck->history);

    Json summary;
    summary["variant"] = to_string(ck->model.config().variant);
    summary["parameters"] = param_count(ck->model);
    summary["epochs_completed"] = ck->epoch;
    if (!ck->history.empty()) {
        const EpochLog& last = ck->history.back();
        summary["final_train_loss"] = last.train_loss;
        summary["first_train_loss"] = ck->history.front().train_loss;
        summary["final_val_loss"] = last.val_loss ? Json(*last.val_loss) : Json(nullptr);
    }
    write_json(out / "summary.json", summary);
    return 0;
}

int cmd_predict(const Options& o) {
    RunConfig rc = load_config(o);
    const fs::path out = out_dir(o, rc);
    const fs::path cp = checkpoint_path(o, rc);
    require_file(cp);
    const Checkpoint ck = load_checkpoint(cp);
    const std::size_t tau = ck.model.config().tau;

    FieldStack source, initial;
    if (!o.forcing.empty() || !o.ic.empty()) {
        require(!o.forcing.empty() && !o.ic.empty(), "--ic and --forcing must be given together");
        require_file(o.ic);
        require_file(o.forcing);
        source = read_fst(o.forcing);
        const FieldStack ic = read_fst(o.ic);
        require(ic.nt() >= tau, "initial-condition file holds fewer than tau slices");
        initial = ic.time_window(ic.nt() - tau, tau);
    } else {
        const fs::path dir = data_dir(o, rc);
        require_file(dir / "inputs.fst");
        source = read_fst(dir / "inputs.fst");
        const std::size_t origin = resolve_origin(o.origin.value_or(rc.sensitivity.origin), source.nt(), ck);
        require(origin + 1 >= tau && origin < source.nt(), "origin leaves no full initial window");
        initial = source.time_window(origin + 1 - tau, tau);
    }
    std::string mask_path = o.mask;
    if (mask_path.empty() && o.ic.empty()) {
        const fs::path m = data_dir(o, rc) / "mask.fst";
        if (fs::exists(m)) mask_path = m.string();
    }
    const Emulator em{ck.model, ck.in_stats, ck.out_stats, mask_for(mask_path, initial.grid())};
    write_json(out / "config.json", to_json(rc, ck.model.config().variant));
    const FieldStack pred = autoregressive_predict(em, initial, source, rc.rollout);
    write_fst(out / "prediction.fst", pred);
    log(o, "wrote " + std::to_string(pred.nt()) + " predicted slices");
    return 0;
}

// The reference restricted to the prediction's channels and timestamps.
std::pair<FieldStack, FieldStack> load_pair(const Options& o) {
    require_file(o.pred);
    require_file(o.ref);
    FieldStack pred = read_fst(o.pred);
    FieldStack ref = read_fst(o.ref);
    require(pred.grid() == ref.grid(), "prediction and reference grids differ");
    ref = ref.select_channels(pred.names());
    ref = align_reference(pred, ref);
    return {std::move(pred), std::move(ref)};
}

int cmd_eval(const Options& o, bool spectra_only) {
    RunConfig rc = load_config(o);
    const fs::path out = out_dir(o, rc);
    const auto [pred, ref] = load_pair(o);
    const LandMask mask = mask_for(o.mask, pred.grid());
    write_json(out / "config.json", to_json(rc));
    const EvalReport rep = evaluate(pred, ref, mask, rc.eval);
    if (spectra_only) {
        write_spectra(rep, out);
    } else {
        write_report(rep, out);
        char line[128];
        std::snprintf(line, sizeof line, "rmse %.6g  relative_rmse %.6g", rep.rmse, rep.relative_rmse);
        log(o, line);
    }
    return 0;
}

int cmd_sensitivity(const Options& o) {
    RunConfig rc = load_config(o);
    if (!o.mode.empty()) rc.sensitivity.mode = o.mode;
    if (!o.origins.empty()) rc.sensitivity.origins = o.origins;
    if (o.origin) rc.sensitivity.origin = *o.origin;
    if (o.reference) rc.sensitivity.reference = *o.reference;
    if (o.seed) rc.sensitivity.perturbation.seed = *o.seed;
    const auto& sc = rc.sensitivity;
    require(sc.mode == "perturb" || sc.mode == "origins", "--mode must be perturb or origins");

    const fs::path out = out_dir(o, rc);
    const fs::path cp = checkpoint_path(o, rc);
    require_file(cp);
    const Checkpoint ck = load_checkpoint(cp);
    const Dataset data = load_dataset(data_dir(o, rc));
    FieldStack inputs = data.inputs;
    LandMask mask = data.mask;
    if (rc.rollout_coarsen > 1) {
        mask = resample_mask(mask, inputs.grid(), rc.rollout_coarsen, Offset{});
        inputs = bilinear_resample(inputs, rc.rollout_coarsen, Offset{});
    }
    const Emulator em{ck.model, ck.in_stats, ck.out_stats, mask};
    write_json(out / "config.json", to_json(rc, ck.model.config().variant));

    std::vector<DivergenceSeries> series;
    const std::size_t origin = resolve_origin(sc.origin, inputs.nt(), ck);
    if (sc.mode == "perturb") {
        series = sensitivity_perturbed(em, inputs, origin, sc.perturbation, rc.rollout);
    } else {
        require(!sc.origins.empty(), "origins mode needs a list of origins");
        series = sensitivity_origins(em, inputs, sc.origins, sc.reference.value_or(origin), rc.rollout);
    }
    write_divergence_csv(out / "divergence.csv", series);

    Json summary;
    summary["variant"] = to_string(ck.model.config().variant);
    summary["mode"] = sc.mode;
    summary["origin"] = origin;
    Json runs = Json::array();
    for (const auto& s : series) {
        Json r;
        r["label"] = s.label;
        r["steps"] = s.rms.size();
        if (s.failed_step) {
            r["status"] = "diverged";
            r["failed_step"] = *s.failed_step;
            r["failure"] = s.failure;
        } else {
            r["status"] = "ok";
        }
        const bool informative = !s.rms.empty() && s.rms.front() > 0.0;
        if (informative) {
            const SpinupSummary su = spinup_summary(s.rms, sc.smoothing_window);
            r["converged"] = su.converged;
            r["spinup_steps"] = su.spinup_steps ? Json(*su.spinup_steps) : Json(nullptr);
            r["initial_smoothed"] = su.smoothed.front();
            r["final_smoothed"] = su.smoothed.back();
        } else {
            r["converged"] = nullptr;
            r["spinup_steps"] = nullptr;
        }
        runs.push_back(std::move(r));
    }
    summary["runs"] = runs;
    write_json(out / "summary.json", summary);
    return 0;
}

Json error_json(const std::string& type, const std::string& message) {
    return Json{{"error", {{"type", type}, {"message", message}}}};
}

int report(const Json& j, int code) {
    std::cerr << j.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Large activation buffers are reused across batches; keep them off mmap so freeing and
    // reallocating does not fault fresh pages every step.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Fourier neural operator emulator for shallow-water sea level"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        c->add_option("--out", o.out, "output directory");
        c->add_flag("--quiet", o.quiet, "suppress progress messages");
    };
    const auto with_seed = [&](CLI::App* c, const std::string& what) {
        c->add_option("--seed", o.seed, "overrides the " + what + " seed");
    };
    const auto with_variant = [&](CLI::App* c) {
        c->add_option("--variant", o.variant, "fno or fnotd")->check(CLI::IsMember({"fno", "fnotd"}));
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a shallow-water dataset");
    common(gen);
    with_seed(gen, "forcing");

    CLI::App* tr = app.add_subcommand("train", "train an operator on a generated dataset");
    common(tr);
    with_seed(tr, "training");
    with_variant(tr);
    tr->add_option("--data", o.data, "dataset directory");
    tr->add_option("--resume", o.resume, "continue from a checkpoint");
    tr->add_option("--epochs", o.epochs, "overrides train.epochs");
    tr->add_option("--stop-after", o.stop_after, "stop after this many completed epochs");

    CLI::App* pr = app.add_subcommand("predict", "autoregressive rollout from a checkpoint");
    common(pr);
    with_variant(pr);
    pr->add_option("--checkpoint", o.checkpoint, "FNOC checkpoint");
    pr->add_option("--data", o.data, "dataset directory (initial window and forcing)");
    pr->add_option("--ic", o.ic, "FST1 file whose last tau slices form the initial window");
    pr->add_option("--forcing", o.forcing, "FST1 file with every input channel over the horizon");
    pr->add_option("--mask", o.mask, "land mask FST1 file");
    pr->add_option("--origin", o.origin, "index of the last initial slice (0 = first held-out window)");
    pr->add_option("--horizon", o.horizon, "predicted steps");
    pr->add_option("--stride", o.stride, "slices consumed per model call (default tau)");

    CLI::App* ev = app.add_subcommand("eval", "compare a prediction with a reference");
    common(ev);
    ev->add_option("pred", o.pred, "prediction FST1 file")->required();
    ev->add_option("ref", o.ref, "reference FST1 file")->required();
    ev->add_option("--mask", o.mask, "land mask FST1 file");

    CLI::App* sp = app.add_subcommand("spectrum", "radial power spectra and spectral RRMSE");
    common(sp);
    sp->add_option("pred", o.pred, "prediction FST1 file")->required();
    sp->add_option("ref", o.ref, "reference FST1 file")->required();
    sp->add_option("--mask", o.mask, "land mask FST1 file");

    CLI::App* se = app.add_subcommand("sensitivity", "divergence of perturbed or shifted rollouts");
    common(se);
    with_seed(se, "perturbation");
    with_variant(se);
    se->add_option("--checkpoint", o.checkpoint, "FNOC checkpoint");
    se->add_option("--data", o.data, "dataset directory");
    se->add_option("--mode", o.mode, "perturb or origins")->check(CLI::IsMember({"perturb", "origins"}));
    se->add_option("--origin", o.origin, "perturbation origin (0 = first held-out window)");
    se->add_option("--origins", o.origins, "origins for origins mode");
    se->add_option("--reference", o.reference, "reference origin for origins mode");
    se->add_option("--horizon", o.horizon, "rollout steps");
    se->add_option("--stride", o.stride, "slices consumed per model call (default tau)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(error_json("usage", e.what()), 2);
    }

    try {
        if (*gen) return cmd_gen(o);
        if (*tr) return cmd_train(o);
        if (*pr) return cmd_predict(o);
        if (*ev) return cmd_eval(o, false);
        if (*sp) return cmd_eval(o, true);
        if (*se) return cmd_sensitivity(o);
    } catch (const InvalidArgument& e) {
        return report(error_json("invalid_argument", e.what()), 2);
    } catch (const FormatError& e) {
        return report(error_json("format_error", e.what()), 3);
    } catch (const NumericFailure& e) {
        Json j = error_json("numeric_failure", e.what());
        j["error"]["where"] = e.where();
        if (e.index()) j["error"]["index"] = *e.index();
        return report(j, 4);
    } catch (const std::exception& e) {
        return report(error_json("runtime_error", e.what()), 1);
    }
    return 0;
}
