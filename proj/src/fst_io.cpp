#include "stfno/fst_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "stfno/error.hpp"

namespace stfno {

namespace le {

namespace {

template <typename U>
void put_uint(std::ostream& os, U v) {
    std::array<char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), b.size());
}

template <typename U>
U get_uint(std::istream& is) {
    std::array<unsigned char, sizeof(U)> b{};
    get_bytes(is, reinterpret_cast<char*>(b.data()), b.size());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_uint(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_uint(os, v); }
void put_f32(std::ostream& os, float v) { put_uint(os, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t get_u32(std::istream& is) { return get_uint<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_uint<std::uint64_t>(is); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_uint<std::uint32_t>(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_uint<std::uint64_t>(is)); }

void get_bytes(std::istream& is, char* dst, std::size_t n) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("unexpected end of file");
}

}  // namespace le

namespace {

constexpr std::array<char, 4> kMagic{'F', 'S', 'T', '1'};

std::uint32_t to_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument(std::string(what) + " exceeds u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_fst(std::ostream& os, const FieldStack& fs) {
    nlohmann::json names;
    names["channels"] = fs.names();
    names["dt"] = fs.dt();
    names["t0"] = fs.t0();
    names["dx"] = fs.grid().dx;
    names["dy"] = fs.grid().dy;
    names["periodic_x"] = fs.grid().periodic_x;
    names["periodic_y"] = fs.grid().periodic_y;
    const std::string table = names.dump();

    os.write(kMagic.data(), kMagic.size());
    le::put_u32(os, to_u32(fs.channels(), "channel count"));
    le::put_u32(os, to_u32(fs.nt(), "time count"));
    le::put_u32(os, to_u32(fs.ny(), "ny"));
    le::put_u32(os, to_u32(fs.nx(), "nx"));
    le::put_u32(os, to_u32(table.size(), "name table"));
    os.write(table.data(), static_cast<std::streamsize>(table.size()));

    std::vector<char> buf(fs.data().size() * 4);
    for (std::size_t i = 0; i < fs.data().size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(fs.data()[i]));
        for (std::size_t b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw FormatError("failed writing FST1 stream");
}

FieldStack read_fst(std::istream& is) {
    std::array<char, 4> magic{};
    le::get_bytes(is, magic.data(), magic.size());
    if (magic != kMagic) throw FormatError("not an FST1 file (bad magic)");
    const std::uint32_t c = le::get_u32(is);
    const std::uint32_t t = le::get_u32(is);
    const std::uint32_t ny = le::get_u32(is);
    const std::uint32_t nx = le::get_u32(is);
    const std::uint32_t table_len = le::get_u32(is);
    std::string table(table_len, '\0');
    le::get_bytes(is, table.data(), table_len);

    nlohmann::json names;
    try {
        names = nlohmann::json::parse(table);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("FST1 name table is not valid JSON: ") + e.what());
    }
    Grid g;
    std::vector<std::string> channels;
    double dt = 1.0, t0 = 0.0;
    try {
        channels = names.at("channels").get<std::vector<std::string>>();
        dt = names.at("dt").get<double>();
        t0 = names.at("t0").get<double>();
        g.dx = names.at("dx").get<double>();
        g.dy = names.at("dy").get<double>();
        g.periodic_x = names.at("periodic_x").get<bool>();
        g.periodic_y = names.at("periodic_y").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("FST1 name table incomplete: ") + e.what());
    }
    if (channels.size() != c) throw FormatError("FST1 channel count disagrees with name table");
    g.nx = nx;
    g.ny = ny;

    FieldStack fs;
    try {
        fs = FieldStack(channels, t, g, dt, t0);
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("FST1 header invalid: ") + e.what());
    }
    std::vector<unsigned char> buf(fs.data().size() * 4);
    le::get_bytes(is, reinterpret_cast<char*>(buf.data()), buf.size());
    for (std::size_t i = 0; i < fs.data().size(); ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
        fs.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return fs;
}

void write_fst(const std::filesystem::path& path, const FieldStack& fs) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    write_fst(os, fs);
}

FieldStack read_fst(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_fst(is);
}

void write_mask(const std::filesystem::path& path, const LandMask& mask, const Grid& grid) {
    mask.validate(grid);
    FieldStack fs({"land"}, 1, grid);
    for (std::size_t p = 0; p < mask.land.size(); ++p) fs.data()[p] = mask.land[p] ? 1.0 : 0.0;
    write_fst(path, fs);
}

LandMask read_mask(const std::filesystem::path& path) {
    const FieldStack fs = read_fst(path);
    if (fs.channels() != 1 || fs.nt() != 1) throw FormatError("land mask file must hold one channel and one slice");
    LandMask m = LandMask::all_ocean(fs.ny(), fs.nx());
    for (std::size_t p = 0; p < m.land.size(); ++p) m.land[p] = fs.data()[p] != 0.0 ? 1 : 0;
    m.validate(fs.grid());
    return m;
}

}  // namespace stfno
