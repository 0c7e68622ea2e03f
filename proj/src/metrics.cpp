#include "stfno/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "stfno/error.hpp"
#include "stfno/spectral.hpp"

namespace stfno {

namespace {

void check_pair(const FieldStack& a, const FieldStack& b, const LandMask& mask) {
    require(a.grid() == b.grid() && a.nt() == b.nt() && a.channels() == b.channels(),
            "prediction and reference shapes differ");
    mask.validate(a.grid());
    require(mask.ocean_count() > 0, "mask has no ocean cells");
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw FormatError("cannot write " + p.string());
    os.precision(17);
    return os;
}

}  // namespace

double rmse(const FieldStack& yhat, const FieldStack& y, const LandMask& mask) {
    check_pair(yhat, y, mask);
    require(y.nt() > 0, "rmse needs at least one slice");
    const std::size_t np = y.slice_size();
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < y.channels(); ++c) {
        for (std::size_t t = 0; t < y.nt(); ++t) {
            const auto a = yhat.slice(c, t), b = y.slice(c, t);
            for (std::size_t p = 0; p < np; ++p) {
                if (mask.is_land(p)) continue;
                ss += (a[p] - b[p]) * (a[p] - b[p]);
                ++n;
            }
        }
    }
    return std::sqrt(ss / static_cast<double>(n));
}

double relative_rmse(const FieldStack& yhat, const FieldStack& y, const LandMask& mask) {
    const double e = rmse(yhat, y, mask);
    const std::size_t np = y.slice_size();
    double sum = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < y.channels(); ++c) {
        for (std::size_t t = 0; t < y.nt(); ++t) {
            for (std::size_t p = 0; p < np; ++p) {
                if (!mask.is_land(p)) { sum += y.slice(c, t)[p]; ++n; }
            }
        }
    }
    const double mean = sum / static_cast<double>(n);
    for (std::size_t c = 0; c < y.channels(); ++c) {
        for (std::size_t t = 0; t < y.nt(); ++t) {
            for (std::size_t p = 0; p < np; ++p) {
                if (!mask.is_land(p)) ss += (y.slice(c, t)[p] - mean) * (y.slice(c, t)[p] - mean);
            }
        }
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    require(sd > 0.0, "reference has zero variance; relative rmse undefined");
    return e / sd;
}

RadialSpectrum radial_psd(std::span<const double> field, std::size_t ny, std::size_t nx, const LandMask& mask,
                          SpectrumMode mode) {
    require(field.size() == ny * nx && ny >= 1 && nx >= 1, "field size does not match [ny, nx]");
    require(mask.ny == ny && mask.nx == nx, "mask does not match the field");
    std::vector<double> f(field.begin(), field.end());
    for (double v : f) require(std::isfinite(v), "radial_psd needs a finite field");

    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < f.size(); ++p) {
        if (mode == SpectrumMode::Raw || !mask.is_land(p)) { sum += f[p]; ++n; }
    }
    require(n > 0, "no cells to average");
    const double mean = sum / static_cast<double>(n);
    for (std::size_t p = 0; p < f.size(); ++p) {
        f[p] = (mode == SpectrumMode::ZeroFill && mask.is_land(p)) ? 0.0 : f[p] - mean;
    }

    const ComplexSpectrum s = dft_forward(f, 1, {ny, nx});
    const double norm = 1.0 / static_cast<double>(nx * ny);
    const long hy = static_cast<long>(ny / 2), hx = static_cast<long>(nx / 2);
    const auto signed_index = [](std::size_t i, std::size_t len) {
        return i <= len / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(len);
    };
    const std::size_t kmax =
        static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(hy * hy + hx * hx))));

    RadialSpectrum r;
    r.isotropic_max = std::min(nx, ny) / 2;
    std::vector<double> acc(kmax + 1, 0.0);
    std::vector<std::size_t> cnt(kmax + 1, 0);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const long k[2] = {signed_index(j, ny), signed_index(i, nx)};
            const double pw = std::norm(s.coefficient(0, k)) * norm;
            if (k[0] == 0 && k[1] == 0) {
                r.dc = pw;
                continue;
            }
            const auto b = static_cast<std::size_t>(
                std::lround(std::sqrt(static_cast<double>(k[0] * k[0] + k[1] * k[1]))));
            acc[b] += pw;
            ++cnt[b];
        }
    }
    for (std::size_t b = 1; b <= kmax; ++b) {
        if (cnt[b] == 0) continue;
        r.k.push_back(static_cast<double>(b));
        r.power.push_back(acc[b] / static_cast<double>(cnt[b]));
        r.count.push_back(cnt[b]);
    }
    return r;
}

RadialSpectrum radial_psd(std::span<const double> field, std::size_t ny, std::size_t nx) {
    return radial_psd(field, ny, nx, LandMask::all_ocean(ny, nx), SpectrumMode::Raw);
}

std::vector<double> spectral_rrmse(std::span<const RadialSpectrum> pred, std::span<const RadialSpectrum> ref) {
    require(!ref.empty() && pred.size() == ref.size(), "spectral_rrmse needs matching, non-empty snapshot lists");
    const std::size_t nb = ref.front().k.size();
    for (std::size_t q = 0; q < ref.size(); ++q) {
        require(pred[q].k == ref.front().k && ref[q].k == ref.front().k, "spectra use different bins");
    }
    std::vector<double> out(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < ref.size(); ++q) {
            const double d = pred[q].power[b] - ref[q].power[b];
            num += d * d;
            den += ref[q].power[b] * ref[q].power[b];
        }
        out[b] = den > 0.0 ? std::sqrt(num / den) : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

std::vector<std::vector<double>> station_series(const FieldStack& fs, std::span<const Station> stations,
                                                const LandMask& mask, std::size_t channel) {
    mask.validate(fs.grid());
    require(channel < fs.channels(), "station channel out of range");
    std::vector<std::vector<double>> out;
    for (const auto& s : stations) {
        require(s.y < fs.ny() && s.x < fs.nx(), "station outside the grid");
        require(!mask.is_land(s.y, s.x),
                "station (" + std::to_string(s.y) + ", " + std::to_string(s.x) + ") lies on land");
        std::vector<double> series(fs.nt());
        for (std::size_t t = 0; t < fs.nt(); ++t) series[t] = fs.at(channel, t, s.y, s.x);
        out.push_back(std::move(series));
    }
    return out;
}

FieldStack align_reference(const FieldStack& pred, const FieldStack& ref) {
    require(pred.grid() == ref.grid(), "prediction and reference grids differ");
    require(pred.names() == ref.names(), "prediction and reference channels differ");
    FieldStack out(ref.names(), pred.nt(), ref.grid(), pred.dt(), pred.t0());
    for (std::size_t t = 0; t < pred.nt(); ++t) {
        const double time = pred.t0() + static_cast<double>(t) * pred.dt();
        const double q = (time - ref.t0()) / ref.dt();
        const double r = std::round(q);
        if (std::abs(q - r) > 1e-6 || r < 0.0 || r >= static_cast<double>(ref.nt())) {
            throw InvalidArgument("reference has no slice at time " + std::to_string(time));
        }
        for (std::size_t c = 0; c < ref.channels(); ++c) {
            const auto src = ref.slice(c, static_cast<std::size_t>(r));
            std::copy(src.begin(), src.end(), out.slice(c, t).begin());
        }
    }
    return out;
}

EvalReport evaluate(const FieldStack& pred, const FieldStack& ref_all, const LandMask& mask, const EvalOptions& opt) {
    const FieldStack ref = align_reference(pred, ref_all);
    check_pair(pred, ref, mask);
    require(pred.nt() > 0, "nothing to evaluate");
    require(opt.channel < pred.channels(), "evaluation channel out of range");

    EvalReport r;
    r.rmse = rmse(pred, ref, mask);
    r.relative_rmse = relative_rmse(pred, ref, mask);
    for (std::size_t t = 0; t < pred.nt(); ++t) {
        r.time.push_back(pred.t0() + static_cast<double>(t) * pred.dt());
        const FieldStack a = pred.time_window(t, 1), b = ref.time_window(t, 1);
        r.rmse_per_step.push_back(rmse(a, b, mask));
        r.pred_spectra.push_back(radial_psd(pred.slice(opt.channel, t), pred.ny(), pred.nx(), mask, opt.spectrum_mode));
        r.ref_spectra.push_back(radial_psd(ref.slice(opt.channel, t), ref.ny(), ref.nx(), mask, opt.spectrum_mode));
    }
    r.rrmse_k = spectral_rrmse(r.pred_spectra, r.ref_spectra);
    r.stations = opt.stations;
    r.station_pred = station_series(pred, opt.stations, mask, opt.channel);
    r.station_ref = station_series(ref, opt.stations, mask, opt.channel);
    return r;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void write_spectra(const EvalReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto os = open_out(dir / "spectra.csv");
        os << "snapshot,time,k,count,pred_power,ref_power\n";
        for (std::size_t q = 0; q < r.pred_spectra.size(); ++q) {
            const auto& a = r.pred_spectra[q];
            const auto& b = r.ref_spectra[q];
            for (std::size_t i = 0; i < a.k.size(); ++i) {
                os << q << ',' << r.time[q] << ',' << a.k[i] << ',' << a.count[i] << ',' << a.power[i] << ','
                   << b.power[i] << '\n';
            }
        }
    }
    auto os = open_out(dir / "rrmse.csv");
    os << "k,rrmse\n";
    if (r.ref_spectra.empty()) return;
    const auto& ks = r.ref_spectra.front().k;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        os << ks[i] << ',';
        if (std::isfinite(r.rrmse_k[i])) os << r.rrmse_k[i];
        os << '\n';
    }
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_spectra(r, dir);
    {
        auto os = open_out(dir / "rmse.csv");
        os << "step,time,rmse\n";
        for (std::size_t t = 0; t < r.time.size(); ++t) os << t + 1 << ',' << r.time[t] << ',' << r.rmse_per_step[t] << '\n';
    }
    {
        auto os = open_out(dir / "stations.csv");
        os << "station,y,x,step,time,pred,ref\n";
        for (std::size_t s = 0; s < r.stations.size(); ++s) {
            for (std::size_t t = 0; t < r.time.size(); ++t) {
                os << s << ',' << r.stations[s].y << ',' << r.stations[s].x << ',' << t + 1 << ',' << r.time[t] << ','
                   << r.station_pred[s][t] << ',' << r.station_ref[s][t] << '\n';
            }
        }
    }
    nlohmann::ordered_json j;
    j["rmse"] = number_or_null(r.rmse);
    j["relative_rmse"] = number_or_null(r.relative_rmse);
    j["steps"] = r.time.size();
    j["rmse_per_step"] = nlohmann::ordered_json::array();
    for (double v : r.rmse_per_step) j["rmse_per_step"].push_back(number_or_null(v));
    j["rrmse_k"] = nlohmann::ordered_json::array();
    if (!r.ref_spectra.empty()) {
        const auto& ks = r.ref_spectra.front().k;
        for (std::size_t i = 0; i < ks.size(); ++i) {
            j["rrmse_k"].push_back({{"k", ks[i]}, {"rrmse", number_or_null(r.rrmse_k[i])}});
        }
        j["isotropic_max_k"] = r.ref_spectra.front().isotropic_max;
    }
    j["stations"] = nlohmann::ordered_json::array();
    for (const auto& s : r.stations) j["stations"].push_back({{"y", s.y}, {"x", s.x}});
    j["files"] = {"rmse.csv", "stations.csv", "spectra.csv", "rrmse.csv"};
    auto os = open_out(dir / "report.json");
    os << j.dump(2) << '\n';
}

}  // namespace stfno
