#include <bit>
#include <fstream>
#include <limits>

#include "stfno/error.hpp"
#include "stfno/fst_io.hpp"
#include "stfno/run_config.hpp"
#include "stfno/training.hpp"

// FNOC layout (little-endian):
//   "FNOC", u32 version, u32 header_bytes, UTF-8 JSON header
//   u32 blob_count, then per blob:
//     u32 name_bytes, name, u8 dtype (0 = f64, 1 = c128), u32 ndim, u64 dims[ndim], payload
// Blobs are the model parameters followed by "adam.m:<name>" and "adam.v:<name>".

namespace stfno {

namespace {

constexpr char kMagic[4] = {'F', 'N', 'O', 'C'};

void put_doubles(std::ostream& os, std::span<const double> v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    } else {
        for (double d : v) le::put_f64(os, d);
    }
}

void get_doubles(std::istream& is, std::span<double> v) {
    if constexpr (std::endian::native == std::endian::little) {
        le::get_bytes(is, reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
    } else {
        for (double& d : v) d = le::get_f64(is);
    }
}

void put_blob(std::ostream& os, const std::string& name, const Param& p, std::span<const double> data) {
    le::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const char dtype = p.is_complex ? 1 : 0;
    os.write(&dtype, 1);
    le::put_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) le::put_u64(os, d);
    put_doubles(os, data);
}

void get_blob(std::istream& is, const std::string& expected, const Param& p, std::span<double> dst) {
    const std::uint32_t len = le::get_u32(is);
    if (len > 4096) throw FormatError("checkpoint blob name too long");
    std::string name(len, '\0');
    le::get_bytes(is, name.data(), len);
    if (name != expected) throw FormatError("checkpoint blob '" + name + "' found where '" + expected + "' expected");
    char dtype = 0;
    le::get_bytes(is, &dtype, 1);
    if (dtype != (p.is_complex ? 1 : 0)) throw FormatError("checkpoint blob '" + name + "' has the wrong dtype");
    const std::uint32_t ndim = le::get_u32(is);
    if (ndim != p.shape.size()) throw FormatError("checkpoint blob '" + name + "' has the wrong rank");
    for (std::size_t d : p.shape) {
        if (le::get_u64(is) != d) throw FormatError("checkpoint blob '" + name + "' has the wrong shape");
    }
    get_doubles(is, dst);
}

Json history_json(const std::vector<EpochLog>& history) {
    Json h = Json::array();
    for (const auto& e : history) {
        Json j{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
        j["val_loss"] = e.val_loss ? Json(*e.val_loss) : Json(nullptr);
        j["batch_losses"] = e.batch_losses;
        h.push_back(std::move(j));
    }
    return h;
}

std::vector<EpochLog> history_from(const Json& h) {
    std::vector<EpochLog> out;
    for (const auto& j : h) {
        EpochLog e;
        e.epoch = j.at("epoch").get<std::size_t>();
        e.lr = j.at("lr").get<double>();
        e.train_loss = j.at("train_loss").get<double>();
        if (!j.at("val_loss").is_null()) e.val_loss = j.at("val_loss").get<double>();
        e.batch_losses = j.at("batch_losses").get<std::vector<double>>();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const ParamStore& ps = ckpt.model.params();
    const bool has_adam = !ckpt.adam.m.empty();
    if (has_adam) {
        require(ckpt.adam.m.size() == ps.size() && ckpt.adam.v.size() == ps.size(),
                "optimizer state does not match the parameters");
    }
    Json header;
    header["model"] = to_json(ckpt.model.config());
    header["train"] = to_json(ckpt.train);
    header["in_stats"] = to_json(ckpt.in_stats);
    header["out_stats"] = to_json(ckpt.out_stats);
    header["epoch"] = ckpt.epoch;
    header["adam_step"] = ckpt.adam.step;
    header["has_adam"] = has_adam;
    header["rng_state"] = ckpt.rng_state;
    header["history"] = history_json(ckpt.history);
    const std::string text = header.dump();

    // Write to a sibling file and rename, so an interrupted save never leaves a truncated checkpoint.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw FormatError("cannot write " + tmp.string());
        os.write(kMagic, 4);
        le::put_u32(os, kCheckpointVersion);
        le::put_u32(os, static_cast<std::uint32_t>(text.size()));
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        le::put_u32(os, static_cast<std::uint32_t>(ps.size() * (has_adam ? 3 : 1)));
        for (const auto& p : ps) put_blob(os, p.name, p, p.value);
        if (has_adam) {
            for (std::size_t i = 0; i < ps.size(); ++i) put_blob(os, "adam.m:" + ps[i].name, ps[i], ckpt.adam.m[i]);
            for (std::size_t i = 0; i < ps.size(); ++i) put_blob(os, "adam.v:" + ps[i].name, ps[i], ckpt.adam.v[i]);
        }
        os.flush();
        if (!os) throw FormatError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[4];
    le::get_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not an FNOC checkpoint (bad magic)");
    const std::uint32_t version = le::get_u32(is);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t hlen = le::get_u32(is);
    std::string text(hlen, '\0');
    le::get_bytes(is, text.data(), hlen);
    Json header;
    try {
        header = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    try {
        Checkpoint ck(Model(model_config_from_json(header.at("model"))));
        ck.train = train_config_from_json(header.at("train"));
        ck.in_stats = channel_stats_from_json(header.at("in_stats"));
        ck.out_stats = channel_stats_from_json(header.at("out_stats"));
        ck.epoch = header.at("epoch").get<std::size_t>();
        ck.adam.step = header.at("adam_step").get<std::size_t>();
        ck.rng_state = header.at("rng_state").get<std::string>();
        ck.history = history_from(header.at("history"));
        const bool has_adam = header.at("has_adam").get<bool>();

        ParamStore& ps = ck.model.params();
        const std::uint32_t blobs = le::get_u32(is);
        if (blobs != ps.size() * (has_adam ? 3 : 1)) throw FormatError("checkpoint blob count does not match the model");
        for (auto& p : ps) get_blob(is, p.name, p, p.value);
        if (has_adam) {
            ck.adam = AdamState::zeros(ps);
            ck.adam.step = header.at("adam_step").get<std::size_t>();
            for (std::size_t i = 0; i < ps.size(); ++i) get_blob(is, "adam.m:" + ps[i].name, ps[i], ck.adam.m[i]);
            for (std::size_t i = 0; i < ps.size(); ++i) get_blob(is, "adam.v:" + ps[i].name, ps[i], ck.adam.v[i]);
        }
        if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint header: ") + e.what());
    }
}

}  // namespace stfno
