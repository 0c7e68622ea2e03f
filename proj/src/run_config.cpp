#include "stfno/run_config.hpp"

#include <fstream>
#include <set>

#include "stfno/error.hpp"

namespace stfno {

namespace {

// Strict reader over one JSON object: every lookup registers its key as known, and
// finish() rejects any key that was never looked up.
class Reader {
public:
    Reader(const Json& parent, std::string name, std::string path = {})
        : path_(path.empty() ? name : path + "." + name) {
        if (parent.contains(name)) {
            obj_ = &parent.at(name);
            if (!obj_->is_object()) throw InvalidArgument("config key '" + path_ + "' must be an object");
        }
    }

    bool present() const { return obj_ != nullptr; }
    const Json* raw(const std::string& key) {
        known_.insert(key);
        if (!obj_ || !obj_->contains(key)) return nullptr;
        return &obj_->at(key);
    }

    template <typename T>
    bool get(const std::string& key, T& dst) {
        const Json* v = raw(key);
        if (!v) return false;
        dst = convert<T>(*v, key);
        return true;
    }

    template <typename T>
    bool get(const std::string& key, std::optional<T>& dst) {
        const Json* v = raw(key);
        if (!v) return false;
        dst = convert<T>(*v, key);
        return true;
    }

    std::string key_path(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        if (!obj_) return;
        for (const auto& [k, v] : obj_->items()) {
            if (!known_.count(k)) throw InvalidArgument("unknown config key '" + path_ + "." + k + "'");
        }
    }

    template <typename T>
    T convert(const Json& v, const std::string& key) const {
        const std::string where = key_path(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw InvalidArgument("config key '" + where + "' must be a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw InvalidArgument("config key '" + where + "' must be a string");
            return v.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) {
                throw InvalidArgument("config key '" + where + "' must be a non-negative integer");
            }
            return v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw InvalidArgument("config key '" + where + "' must be a number");
            return v.get<T>();
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

private:
    std::string path_;
    const Json* obj_ = nullptr;
    std::set<std::string> known_;
};

std::vector<std::size_t> unsigned_list(const Json& v, const std::string& where) {
    if (!v.is_array()) throw InvalidArgument("config key '" + where + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_unsigned()) throw InvalidArgument("config key '" + where + "' must hold non-negative integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

SpectrumMode parse_spectrum_mode(const std::string& s) {
    if (s == "zero_fill") return SpectrumMode::ZeroFill;
    if (s == "raw") return SpectrumMode::Raw;
    throw InvalidArgument("config key 'eval.spectrum_mode' must be \"zero_fill\" or \"raw\"");
}

Activation parse_activation(const std::string& s) {
    if (s == "gelu") return Activation::Gelu;
    if (s == "identity") return Activation::Identity;
    throw InvalidArgument("config key 'model.activation' must be \"gelu\" or \"identity\"");
}

std::string activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "identity"; }

Json modes_json(const ModeSpec& m) {
    Json j = Json::array({m.kx_max, m.ky_max});
    if (m.w_max) j.push_back(*m.w_max);
    return j;
}

ModeSpec modes_from(const Json& v, const std::string& where) {
    const auto l = unsigned_list(v, where);
    if (l.size() != 2 && l.size() != 3) throw InvalidArgument("config key '" + where + "' must be [kx, ky] or [kx, ky, w]");
    ModeSpec m{l[0], l[1], std::nullopt};
    if (l.size() == 3) m.w_max = l[2];
    return m;
}

// Throwaway target so the other variant's section is still validated.
ModelConfig& scratch_for(Variant v) {
    thread_local ModelConfig c;
    c.variant = v;
    return c;
}

void apply_model_overrides(const Json& j, ModelConfig& mc, const std::string& section = "model") {
    Json doc = Json::object();
    doc[section] = j;
    Reader r(doc, section);
    std::string s;
    if (r.get("variant", s)) parse_variant(s);  // variant itself is resolved by the caller
    r.get("width", mc.width);
    r.get("layers", mc.layers);
    r.get("tau", mc.tau);
    r.get("dt", mc.dt);
    r.get("allow_single_slice_window", mc.allow_single_slice_window);
    if (const Json* m = r.raw("modes")) mc.modes = modes_from(*m, section + ".modes");
    if (r.get("activation", s)) mc.activation = parse_activation(s);
    // Per-variant sections override the shared keys for that variant only.
    if (section == "model") {
        const Json* fno = r.raw("fno");
        const Json* fnotd = r.raw("fnotd");
        r.finish();
        if (fno) apply_model_overrides(*fno, mc.variant == Variant::Fno ? mc : scratch_for(Variant::Fno), "model.fno");
        if (fnotd) {
            apply_model_overrides(*fnotd, mc.variant == Variant::Fnotd ? mc : scratch_for(Variant::Fnotd), "model.fnotd");
        }
        return;
    }
    r.finish();
}

}  // namespace

ModelConfig RunConfig::model_for(Variant v, std::vector<std::string> in, std::vector<std::string> out) const {
    ModelConfig mc = default_config(v, std::move(in), std::move(out));
    mc.dt = gen.sample_dt;
    apply_model_overrides(model_json, mc);
    return mc;
}

RunConfig parse_run_config(const Json& doc) {
    if (!doc.is_object()) throw InvalidArgument("config must be a JSON object");
    static const std::set<std::string> sections{"swe",     "forcing",     "tracer", "generate", "model", "train",
                                                "rollout", "sensitivity", "eval",   "paths",    "seeds"};
    for (const auto& [k, v] : doc.items()) {
        if (!sections.count(k)) throw InvalidArgument("unknown config key '" + k + "'");
    }

    RunConfig rc;
    GenConfig& g = rc.gen;
    {
        Reader r(doc, "swe");
        r.get("nx", g.swe.grid.nx);
        r.get("ny", g.swe.grid.ny);
        r.get("dx", g.swe.grid.dx);
        r.get("dy", g.swe.grid.dy);
        r.get("g", g.swe.g);
        r.get("f", g.swe.f);
        r.get("r", g.swe.r);
        r.get("dt_solver", g.swe.dt_solver);
        r.get("rho0", g.swe.rho0);
        r.get("depth_mean", g.depth_mean);
        r.get("depth_variation", g.depth_variation);
        r.get("depth_corr_length", g.depth_corr_length);
        r.finish();
    }
    {
        Reader r(doc, "forcing");
        r.get("wind_amplitude", g.forcing.wind_amplitude);
        r.get("corr_length", g.forcing.corr_length);
        r.get("ar", g.forcing.ar);
        r.get("pressure_amplitude", g.forcing.pressure_amplitude);
        r.finish();
    }
    {
        Reader r(doc, "tracer");
        r.get("damping", g.tracer.damping);
        r.get("amplitude", g.tracer.amplitude);
        r.get("ar", g.tracer.ar);
        r.get("corr_length", g.tracer.corr_length);
        r.finish();
    }
    {
        Reader r(doc, "generate");
        r.get("samples", g.samples);
        r.get("sample_dt", g.sample_dt);
        r.get("spinup", g.spinup);
        if (const Json* b = r.raw("land_box")) {
            const auto l = unsigned_list(*b, "generate.land_box");
            if (l.size() != 4) throw InvalidArgument("config key 'generate.land_box' must be [y0, y1, x0, x1]");
            g.land_box = std::array<std::size_t, 4>{l[0], l[1], l[2], l[3]};
        }
        r.finish();
    }
    if (doc.contains("model")) {
        const Json& m = doc.at("model");
        if (!m.is_object()) throw InvalidArgument("config key 'model' must be an object");
        rc.model_json = m;
        ModelConfig probe;
        apply_model_overrides(m, probe);  // validates keys and types early
        if (m.contains("variant")) rc.variant = parse_variant(m.at("variant").get<std::string>());
    }
    {
        TrainConfig& t = rc.train;
        Reader r(doc, "train");
        r.get("epochs", t.epochs);
        r.get("lr0", t.lr0);
        r.get("lr_min", t.lr_min);
        r.get("batch_size", t.batch_size);
        r.get("loss_lead", t.loss_lead);
        r.get("multi_lead", t.multi_lead);
        r.get("coarsen", t.coarsen);
        r.get("beta1", t.beta1);
        r.get("beta2", t.beta2);
        r.get("eps", t.eps);
        r.get("window", t.window);
        r.get("val_fraction", t.val_fraction);
        r.get("val_gap", t.val_gap);
        r.get("val_every", t.val_every);
        r.get("val_coarse", t.val_coarse);
        r.get("micro_batch", t.micro_batch);
        r.finish();
    }
    {
        Reader r(doc, "rollout");
        r.get("horizon", rc.rollout.horizon);
        r.get("stride", rc.rollout.stride);
        r.get("blowup_factor", rc.rollout.blowup_factor);
        r.get("coarsen", rc.rollout_coarsen);
        r.finish();
        require(rc.rollout_coarsen >= 1, "config key 'rollout.coarsen' must be >= 1");
    }
    {
        SensitivityConfig& s = rc.sensitivity;
        Reader r(doc, "sensitivity");
        r.get("mode", s.mode);
        require(s.mode == "perturb" || s.mode == "origins",
                "config key 'sensitivity.mode' must be \"perturb\" or \"origins\"");
        r.get("origin", s.origin);
        if (const Json* o = r.raw("origins")) s.origins = unsigned_list(*o, "sensitivity.origins");
        r.get("reference", s.reference);
        r.get("members", s.perturbation.members);
        r.get("sigma_rel", s.perturbation.sigma_rel);
        r.get("corr_length", s.perturbation.corr_length);
        r.get("smoothing_window", s.smoothing_window);
        r.finish();
    }
    {
        Reader r(doc, "eval");
        std::string mode;
        if (r.get("spectrum_mode", mode)) rc.eval.spectrum_mode = parse_spectrum_mode(mode);
        if (const Json* st = r.raw("stations")) {
            if (!st->is_array()) throw InvalidArgument("config key 'eval.stations' must be an array of [y, x]");
            for (const auto& e : *st) {
                const auto l = unsigned_list(e, "eval.stations");
                if (l.size() != 2) throw InvalidArgument("config key 'eval.stations' entries must be [y, x]");
                rc.eval.stations.push_back(Station{l[0], l[1]});
            }
        }
        r.finish();
    }
    {
        Reader r(doc, "paths");
        std::string p;
        if (r.get("data", p)) rc.data_path = p;
        if (r.get("checkpoint", p)) rc.checkpoint_path = p;
        if (r.get("out", p)) rc.out_path = p;
        r.finish();
    }
    {
        Reader r(doc, "seeds");
        r.get("forcing", g.forcing.seed);
        r.get("depth", g.depth_seed);
        r.get("train", rc.train.seed);
        r.get("perturbation", rc.sensitivity.perturbation.seed);
        r.finish();
    }
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open config file " + path.string());
    Json doc;
    try {
        doc = Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

Json to_json(const ModelConfig& mc) {
    Json j;
    j["variant"] = to_string(mc.variant);
    j["width"] = mc.width;
    j["layers"] = mc.layers;
    j["modes"] = modes_json(mc.modes);
    j["tau"] = mc.tau;
    j["dt"] = mc.dt;
    j["activation"] = activation_name(mc.activation);
    j["allow_single_slice_window"] = mc.allow_single_slice_window;
    j["in_channels"] = mc.in_channels;
    j["out_channels"] = mc.out_channels;
    return j;
}

ModelConfig model_config_from_json(const Json& j) {
    try {
        ModelConfig mc;
        mc.variant = parse_variant(j.at("variant").get<std::string>());
        mc.width = j.at("width").get<std::size_t>();
        mc.layers = j.at("layers").get<std::size_t>();
        mc.modes = modes_from(j.at("modes"), "model.modes");
        mc.tau = j.at("tau").get<std::size_t>();
        mc.dt = j.at("dt").get<double>();
        mc.activation = parse_activation(j.at("activation").get<std::string>());
        mc.allow_single_slice_window = j.at("allow_single_slice_window").get<bool>();
        mc.in_channels = j.at("in_channels").get<std::vector<std::string>>();
        mc.out_channels = j.at("out_channels").get<std::vector<std::string>>();
        mc.validate();
        return mc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model config: ") + e.what());
    }
}

Json to_json(const TrainConfig& t) {
    Json j;
    j["epochs"] = t.epochs;
    j["lr0"] = t.lr0;
    j["lr_min"] = t.lr_min;
    j["batch_size"] = t.batch_size;
    j["seed"] = t.seed;
    j["loss_lead"] = t.loss_lead;
    j["multi_lead"] = t.multi_lead;
    j["coarsen"] = t.coarsen;
    j["beta1"] = t.beta1;
    j["beta2"] = t.beta2;
    j["eps"] = t.eps;
    j["window"] = t.window;
    j["val_fraction"] = t.val_fraction;
    j["val_gap"] = t.val_gap;
    j["val_every"] = t.val_every;
    j["val_coarse"] = t.val_coarse;
    j["micro_batch"] = t.micro_batch;
    return j;
}

TrainConfig train_config_from_json(const Json& j) {
    try {
        TrainConfig t;
        t.epochs = j.at("epochs").get<std::size_t>();
        t.lr0 = j.at("lr0").get<double>();
        t.lr_min = j.at("lr_min").get<double>();
        t.batch_size = j.at("batch_size").get<std::size_t>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.loss_lead = j.at("loss_lead").get<std::size_t>();
        t.multi_lead = j.at("multi_lead").get<bool>();
        t.coarsen = j.at("coarsen").get<std::size_t>();
        t.beta1 = j.at("beta1").get<double>();
        t.beta2 = j.at("beta2").get<double>();
        t.eps = j.at("eps").get<double>();
        t.window = j.at("window").get<std::size_t>();
        t.val_fraction = j.at("val_fraction").get<double>();
        t.val_gap = j.at("val_gap").get<std::size_t>();
        t.val_every = j.at("val_every").get<std::size_t>();
        t.val_coarse = j.at("val_coarse").get<bool>();
        t.micro_batch = j.at("micro_batch").get<std::size_t>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
}

Json to_json(const ChannelStats& s) {
    return Json{{"channels", s.channels}, {"mean", s.mean}, {"stddev", s.stddev}};
}

ChannelStats channel_stats_from_json(const Json& j) {
    try {
        ChannelStats s;
        s.channels = j.at("channels").get<std::vector<std::string>>();
        s.mean = j.at("mean").get<std::vector<double>>();
        s.stddev = j.at("stddev").get<std::vector<double>>();
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed channel statistics: ") + e.what());
    }
}

Json to_json(const RunConfig& rc, std::optional<Variant> variant) {
    const GenConfig& g = rc.gen;
    Json j;
    j["swe"] = {{"nx", g.swe.grid.nx},
                {"ny", g.swe.grid.ny},
                {"dx", g.swe.grid.dx},
                {"dy", g.swe.grid.dy},
                {"g", g.swe.g},
                {"f", g.swe.f},
                {"r", g.swe.r},
                {"dt_solver", g.swe.dt_solver},
                {"rho0", g.swe.rho0},
                {"depth_mean", g.depth_mean},
                {"depth_variation", g.depth_variation},
                {"depth_corr_length", g.depth_corr_length}};
    j["forcing"] = {{"wind_amplitude", g.forcing.wind_amplitude},
                    {"corr_length", g.forcing.corr_length},
                    {"ar", g.forcing.ar},
                    {"pressure_amplitude", g.forcing.pressure_amplitude}};
    j["tracer"] = {{"damping", g.tracer.damping},
                   {"amplitude", g.tracer.amplitude},
                   {"ar", g.tracer.ar},
                   {"corr_length", g.tracer.corr_length}};
    j["generate"] = {{"samples", g.samples}, {"sample_dt", g.sample_dt}, {"spinup", g.spinup}};
    if (g.land_box) j["generate"]["land_box"] = *g.land_box;

    const std::optional<Variant> v = variant ? variant : rc.variant;
    if (v) {
        Json m = to_json(rc.model_for(*v, {"_"}, {"_"}));
        m.erase("in_channels");
        m.erase("out_channels");
        j["model"] = m;
    } else {
        j["model"] = rc.model_json;
    }
    Json t = to_json(rc.train);
    t.erase("seed");
    j["train"] = t;
    j["rollout"] = {{"horizon", rc.rollout.horizon},
                    {"stride", rc.rollout.stride},
                    {"blowup_factor", rc.rollout.blowup_factor},
                    {"coarsen", rc.rollout_coarsen}};
    const auto& s = rc.sensitivity;
    j["sensitivity"] = {{"mode", s.mode},
                        {"origin", s.origin},
                        {"origins", s.origins},
                        {"members", s.perturbation.members},
                        {"sigma_rel", s.perturbation.sigma_rel},
                        {"corr_length", s.perturbation.corr_length},
                        {"smoothing_window", s.smoothing_window}};
    if (s.reference) j["sensitivity"]["reference"] = *s.reference;
    Json stations = Json::array();
    for (const auto& st : rc.eval.stations) stations.push_back({st.y, st.x});
    j["eval"] = {{"spectrum_mode", rc.eval.spectrum_mode == SpectrumMode::ZeroFill ? "zero_fill" : "raw"},
                 {"stations", stations}};
    Json paths = Json::object();
    if (rc.data_path) paths["data"] = rc.data_path->string();
    if (rc.checkpoint_path) paths["checkpoint"] = rc.checkpoint_path->string();
    if (rc.out_path) paths["out"] = rc.out_path->string();
    j["paths"] = paths;
    j["seeds"] = {{"forcing", g.forcing.seed},
                  {"depth", g.depth_seed},
                  {"train", rc.train.seed},
                  {"perturbation", s.perturbation.seed}};
    return j;
}

void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw FormatError("failed writing " + path.string());
}

}  // namespace stfno
