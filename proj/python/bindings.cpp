#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"
#include "stfno/metrics.hpp"
#include "stfno/model.hpp"
#include "stfno/rollout.hpp"
#include "stfno/run_config.hpp"
#include "stfno/swe.hpp"
#include "stfno/training.hpp"

namespace py = pybind11;
using namespace stfno;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const FieldStack& fs) {
    Array a({fs.channels(), fs.nt(), fs.ny(), fs.nx()});
    std::copy(fs.data().begin(), fs.data().end(), a.mutable_data());
    return a;
}

FieldStack from_array(const Array& a, std::vector<std::string> channels, double dt, double t0, double dx, double dy) {
    if (a.ndim() != 4) throw InvalidArgument("expected a [channel, time, y, x] array");
    if (static_cast<std::size_t>(a.shape(0)) != channels.size()) {
        throw InvalidArgument("channel names do not match the array's first axis");
    }
    Grid g{static_cast<std::size_t>(a.shape(3)), static_cast<std::size_t>(a.shape(2)), dx, dy, true, true};
    FieldStack fs(std::move(channels), static_cast<std::size_t>(a.shape(1)), g, dt, t0);
    std::copy(a.data(), a.data() + a.size(), fs.data().begin());
    return fs;
}

LandMask mask_from(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& m,
                   std::size_t ny, std::size_t nx) {
    LandMask out = LandMask::all_ocean(ny, nx);
    if (!m) return out;
    if (m->ndim() != 2 || static_cast<std::size_t>(m->shape(0)) != ny || static_cast<std::size_t>(m->shape(1)) != nx) {
        throw InvalidArgument("mask must be a [ny, nx] boolean array");
    }
    for (std::size_t p = 0; p < ny * nx; ++p) out.land[p] = m->data()[p] ? 1 : 0;
    return out;
}

py::array_t<bool> mask_to(const LandMask& m) {
    py::array_t<bool> a({m.ny, m.nx});
    for (std::size_t p = 0; p < m.land.size(); ++p) a.mutable_data()[p] = m.land[p] != 0;
    return a;
}

py::dict metadata(const FieldStack& fs) {
    py::dict d;
    d["channels"] = fs.names();
    d["dt"] = fs.dt();
    d["t0"] = fs.t0();
    d["dx"] = fs.grid().dx;
    d["dy"] = fs.grid().dy;
    return d;
}

// A loaded checkpoint; keeps the model and statistics alive for rollouts.
struct PyCheckpoint {
    std::shared_ptr<Checkpoint> ck;

    std::string variant() const { return to_string(ck->model.config().variant); }
    std::size_t tau() const { return ck->model.config().tau; }
    std::size_t params() const { return param_count(ck->model); }
    std::size_t epoch() const { return ck->epoch; }
    std::vector<std::string> in_channels() const { return ck->model.config().in_channels; }
    std::string config_json() const { return to_json(ck->model.config()).dump(); }

    std::vector<std::pair<double, std::optional<double>>> history() const {
        std::vector<std::pair<double, std::optional<double>>> h;
        for (const auto& e : ck->history) h.emplace_back(e.train_loss, e.val_loss);
        return h;
    }

    // Operator on an already normalized [channel, time, y, x] window.
    Array forward(const Array& x) const {
        const FieldStack in = from_array(x, ck->model.config().in_channels, 1.0, 0.0, 1.0, 1.0);
        FieldStack out;
        {
            py::gil_scoped_release release;
            out = stfno::forward(ck->model, in);
        }
        return to_array(out);
    }

    // Rollout from the tau slices ending at `origin` of a physical-unit source stack.
    Array predict(const Array& source, double dt, double t0, std::size_t origin, std::size_t horizon,
                  std::size_t stride,
                  const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& mask) const {
        const FieldStack src = from_array(source, ck->model.config().in_channels, dt, t0, 1.0, 1.0);
        if (origin + 1 < tau() || origin >= src.nt()) throw InvalidArgument("origin leaves no full initial window");
        const FieldStack init = src.time_window(origin + 1 - tau(), tau());
        const Emulator em{ck->model, ck->in_stats, ck->out_stats, mask_from(mask, src.ny(), src.nx())};
        RolloutConfig rc;
        rc.horizon = horizon;
        rc.stride = stride;
        FieldStack out;
        {
            py::gil_scoped_release release;
            out = autoregressive_predict(em, init, src, rc);
        }
        return to_array(out);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Space-time Fourier neural operator emulator core";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<NumericFailure>(m, "NumericFailure", PyExc_ArithmeticError);

    m.def(
        "read_fst",
        [](const std::filesystem::path& p) {
            const FieldStack fs = read_fst(p);
            return py::make_tuple(to_array(fs), metadata(fs));
        },
        py::arg("path"), "Read an FST1 file as (array[c, t, y, x], metadata dict).");

    m.def(
        "write_fst",
        [](const std::filesystem::path& p, const Array& a, std::vector<std::string> channels, double dt, double t0,
           double dx, double dy) { write_fst(p, from_array(a, std::move(channels), dt, t0, dx, dy)); },
        py::arg("path"), py::arg("data"), py::arg("channels"), py::arg("dt") = 1.0, py::arg("t0") = 0.0,
        py::arg("dx") = 1.0, py::arg("dy") = 1.0, "Write a [c, t, y, x] array as FST1 (stored as float32).");

    m.def(
        "read_mask", [](const std::filesystem::path& p) { return mask_to(read_mask(p)); }, py::arg("path"));

    m.def(
        "generate",
        [](const std::string& config_json) {
            const RunConfig rc = parse_run_config(Json::parse(config_json.empty() ? "{}" : config_json));
            GeneratedData g;
            {
                py::gil_scoped_release release;
                g = generate(rc.gen);
            }
            return py::make_tuple(to_array(g.inputs), to_array(g.target), mask_to(g.mask), metadata(g.inputs));
        },
        py::arg("config_json") = "{}",
        "Run the shallow-water generator; returns (inputs, target, land mask, metadata).");

    m.def(
        "radial_psd",
        [](const Array& field, const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& mask,
           const std::string& mode) {
            if (field.ndim() != 2) throw InvalidArgument("radial_psd expects a 2-D field");
            const auto ny = static_cast<std::size_t>(field.shape(0)), nx = static_cast<std::size_t>(field.shape(1));
            const SpectrumMode sm = mode == "raw" ? SpectrumMode::Raw : SpectrumMode::ZeroFill;
            if (mode != "raw" && mode != "zero_fill") throw InvalidArgument("mode must be 'zero_fill' or 'raw'");
            const RadialSpectrum r =
                radial_psd(std::span<const double>(field.data(), field.size()), ny, nx, mask_from(mask, ny, nx), sm);
            return py::make_tuple(r.k, r.power, r.count);
        },
        py::arg("field"), py::arg("mask") = py::none(), py::arg("mode") = "zero_fill",
        "Annulus-averaged periodogram: (k, mean power, coefficient count).");

    m.def(
        "relative_rmse",
        [](const Array& pred, const Array& ref) {
            if (pred.ndim() != 4) throw InvalidArgument("expected [c, t, y, x] arrays");
            std::vector<std::string> names;
            for (py::ssize_t c = 0; c < pred.shape(0); ++c) names.push_back("c" + std::to_string(c));
            const FieldStack a = from_array(pred, names, 1.0, 0.0, 1.0, 1.0);
            const FieldStack b = from_array(ref, names, 1.0, 0.0, 1.0, 1.0);
            return relative_rmse(a, b, LandMask::all_ocean(a.grid()));
        },
        py::arg("pred"), py::arg("ref"));

    m.def(
        "dispersion_omega",
        [](double kx, double ky, double g, double depth, double f) {
            SWEConfig c = SWEConfig::with_flat_depth(Grid{4, 4}, depth);
            c.g = g;
            c.f = f;
            return dispersion_omega(kx, ky, c);
        },
        py::arg("kx"), py::arg("ky"), py::arg("g") = 1.0, py::arg("depth") = 1.0, py::arg("f") = 0.1);

    py::class_<PyCheckpoint>(m, "Checkpoint")
        .def_property_readonly("variant", &PyCheckpoint::variant)
        .def_property_readonly("tau", &PyCheckpoint::tau)
        .def_property_readonly("param_count", &PyCheckpoint::params)
        .def_property_readonly("epoch", &PyCheckpoint::epoch)
        .def_property_readonly("in_channels", &PyCheckpoint::in_channels)
        .def_property_readonly("config_json", &PyCheckpoint::config_json)
        .def_property_readonly("history", &PyCheckpoint::history)
        .def(
            "save", [](const PyCheckpoint& c, const std::filesystem::path& p) { save_checkpoint(p, *c.ck); },
            py::arg("path"), "Write the checkpoint as FNOC.")
        .def("forward", &PyCheckpoint::forward, py::arg("x"), "Operator on a normalized [c, tau, y, x] window.")
        .def("predict", &PyCheckpoint::predict, py::arg("source"), py::arg("dt"), py::arg("t0"), py::arg("origin"),
             py::arg("horizon"), py::arg("stride") = 0, py::arg("mask") = py::none(),
             "Autoregressive rollout; returns predicted outputs [c_out, horizon, y, x].");

    m.def(
        "train",
        [](const std::filesystem::path& data_dir, const std::string& variant, const std::string& config_json) {
            const RunConfig rc = parse_run_config(Json::parse(config_json.empty() ? "{}" : config_json));
            const Dataset data = load_dataset(data_dir);
            const ModelConfig mc = rc.model_for(parse_variant(variant), data.inputs.names(), data.targets.names());
            auto ck = std::make_shared<Checkpoint>(init_training(data, mc, rc.train));
            {
                py::gil_scoped_release release;
                stfno::train(data, *ck);
            }
            return PyCheckpoint{ck};
        },
        py::arg("data_dir"), py::arg("variant") = "fnotd", py::arg("config_json") = "{}",
        "Train from scratch on a generated dataset directory.");

    m.def(
        "generate_dataset",
        [](const std::filesystem::path& out, const std::string& config_json) {
            const std::string text = config_json.empty() ? "{}" : config_json;
            const RunConfig rc = parse_run_config(Json::parse(text));
            py::gil_scoped_release release;
            generate_dataset(rc.gen, out, text);
        },
        py::arg("out"), py::arg("config_json") = "{}", "Run the generator and write FST1 files to a directory.");

    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& p) { return PyCheckpoint{std::make_shared<Checkpoint>(load_checkpoint(p))}; },
        py::arg("path"));
}
